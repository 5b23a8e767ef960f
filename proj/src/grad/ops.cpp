#include "hkt/grad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hkt/error.hpp"

namespace hkt::grad {

Mask Mask::causal(std::size_t n) {
  Mask m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, true);
  return m;
}

namespace {

Graph& graph_of(const Var& a) {
  if (!a.valid()) throw GraphError("op applied to an unbound Var");
  return *a.graph();
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void need_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  need_matrix(a, "matmul");
  need_matrix(b, "matmul");
  Graph& g = graph_of(a);
  Tensor out = grad::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("matmul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (g.requires_grad(ia)) {
      kernels::gemm_nt(m, n, k, go.data().data(), bv.data().data(), g.grad_ref(ia).data().data());
    }
    if (g.requires_grad(ib)) {
      kernels::gemm_tn(k, m, n, av.data().data(), go.data().data(), g.grad_ref(ib).data().data());
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  need_matrix(a, "matmul_nt");
  need_matrix(b, "matmul_nt");
  Graph& g = graph_of(a);
  Tensor out = grad::matmul_nt(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("matmul_nt", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);  // m x n
    const Tensor& av = g.value(ia);   // m x k
    const Tensor& bv = g.value(ib);   // n x k
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (g.requires_grad(ia)) {
      kernels::gemm_nn(m, n, k, go.data().data(), bv.data().data(), g.grad_ref(ia).data().data());
    }
    if (g.requires_grad(ib)) {
      kernels::gemm_tn(n, m, k, go.data().data(), av.data().data(), g.grad_ref(ib).data().data());
    }
  });
}

Var transpose(const Var& a) {
  need_matrix(a, "transpose");
  Graph& g = graph_of(a);
  const std::size_t ia = a.id();
  return g.record("transpose", a.value().transposed(), {a}, [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_ref(ia);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) ga(j, i) += go(i, j);
  });
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("add", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    for (std::size_t id : {ia, ib}) {
      if (!g.requires_grad(id)) continue;
      Tensor& gi = g.grad_ref(id);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("sub", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_ref(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_ref(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return g.record("mul", std::move(out), {a, b}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& av = g.value(ia);
    const Tensor& bv = g.value(ib);
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_ref(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_ref(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  const std::size_t ia = a.id();
  return g.record("scale", std::move(out), {a}, [ia, c](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& ga = g.grad_ref(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.value().size() != 1) {
    throw DimensionError("scale_by: scale must hold one value, got " + shape_str(s.shape()));
  }
  Graph& g = graph_of(a);
  const double c = s.value()[0];
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  const std::size_t ia = a.id(), is = s.id();
  return g.record("scale_by", std::move(out), {a, s}, [ia, is](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const double c = g.value(is)[0];
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_ref(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    }
    if (g.requires_grad(is)) {
      const Tensor& av = g.value(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * av[i];
      g.grad_ref(is)[0] += acc;
    }
  });
}

Var scale_rows(const Var& a, const Var& w) {
  need_matrix(a, "scale_rows");
  if (w.value().size() != a.rows()) {
    throw DimensionError("scale_rows: weights " + shape_str(w.shape()) + " for matrix " +
                         shape_str(a.shape()));
  }
  Graph& g = graph_of(a);
  Tensor out = a.value();
  const std::size_t r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= w.value()[i];
  const std::size_t ia = a.id(), iw = w.id();
  return g.record("scale_rows", std::move(out), {a, w}, [ia, iw](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& av = g.value(ia);
    const Tensor& wv = g.value(iw);
    const std::size_t r = go.rows(), c = go.cols();
    if (g.requires_grad(ia)) {
      Tensor& ga = g.grad_ref(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga(i, j) += go(i, j) * wv[i];
    }
    if (g.requires_grad(iw)) {
      Tensor& gw = g.grad_ref(iw);
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += go(i, j) * av(i, j);
        gw[i] += acc;
      }
    }
  });
}

Var add_row_bias(const Var& x, const Var& b) {
  need_matrix(x, "add_row_bias");
  if (b.value().size() != x.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_str(b.shape()) + " for matrix " +
                         shape_str(x.shape()));
  }
  Graph& g = graph_of(x);
  Tensor out = x.value();
  const std::size_t r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += b.value()[j];
  const std::size_t ix = x.id(), ib = b.id();
  return g.record("add_row_bias", std::move(out), {x, b}, [ix, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const std::size_t r = go.rows(), c = go.cols();
    if (g.requires_grad(ix)) {
      Tensor& gx = g.grad_ref(ix);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& gb = g.grad_ref(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += go(i, j);
    }
  });
}

Var sum(const Var& a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return g.record("sum", Tensor::scalar(s), {a}, [ia](Graph& g, std::size_t self) {
    const double go = g.grad(self)[0];
    Tensor& ga = g.grad_ref(ia);
    for (auto& v : ga.data()) v += go;
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Var gelu(const Var& x) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v = gelu_value(v);
  const std::size_t ix = x.id();
  return g.record("gelu", std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& xv = g.value(ix);
    Tensor& gx = g.grad_ref(ix);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * gelu_derivative(xv[i]);
  });
}

Var sigmoid(const Var& x) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  const std::size_t ix = x.id();
  return g.record("sigmoid", std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& y = g.value(self);
    Tensor& gx = g.grad_ref(ix);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var softmax_rows(const Var& s, const Mask* mask) {
  const Tensor& sv = s.value();
  const std::size_t r = sv.rows(), c = sv.cols();
  if (mask && (mask->rows() != r || mask->cols() != c)) {
    throw DimensionError("softmax_rows: mask [" + std::to_string(mask->rows()) + "x" +
                         std::to_string(mask->cols()) + "] for scores " + shape_str(sv.shape()));
  }
  Graph& g = graph_of(s);
  Tensor out(sv.shape(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && mask->blocked(i, j)) continue;
      mx = std::max(mx, sv(i, j));
    }
    if (mx == -std::numeric_limits<double>::infinity()) throw DegenerateRowError(i);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && mask->blocked(i, j)) continue;
      const double e = std::exp(sv(i, j) - mx);
      out(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  const std::size_t is = s.id();
  return g.record("softmax_rows", std::move(out), {s}, [is](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    const Tensor& p = g.value(self);
    Tensor& gs = g.grad_ref(is);
    const std::size_t r = p.rows(), c = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += go(i, j) * p(i, j);
      for (std::size_t j = 0; j < c; ++j) gs(i, j) += p(i, j) * (go(i, j) - dot);
    }
  });
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  need_matrix(x, "layernorm");
  const Tensor& xv = x.value();
  const std::size_t r = xv.rows(), c = xv.cols();
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw DimensionError("layernorm: affine params " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " for width " + std::to_string(c));
  }
  Graph& g = graph_of(x);
  Tensor out(xv.shape(), 0.0);
  // Normalized values and inverse std are recomputed in backward from x.
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j)
      out(i, j) = (xv(i, j) - mean) * inv * gamma.value()[j] + beta.value()[j];
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return g.record(
      "layernorm", std::move(out), {x, gamma, beta}, [ix, ig, ib, eps](Graph& g, std::size_t self) {
        const Tensor& go = g.grad(self);
        const Tensor& xv = g.value(ix);
        const Tensor& gm = g.value(ig);
        const std::size_t r = xv.rows(), c = xv.cols();
        std::vector<double> xhat(c), dxhat(c);
        for (std::size_t i = 0; i < r; ++i) {
          double mean = 0.0;
          for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t j = 0; j < c; ++j) var += (xv(i, j) - mean) * (xv(i, j) - mean);
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + eps);
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            xhat[j] = (xv(i, j) - mean) * inv;
            dxhat[j] = go(i, j) * gm[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
          }
          mean_d /= static_cast<double>(c);
          mean_dx /= static_cast<double>(c);
          if (g.requires_grad(ix)) {
            Tensor& gx = g.grad_ref(ix);
            for (std::size_t j = 0; j < c; ++j)
              gx(i, j) += inv * (dxhat[j] - mean_d - xhat[j] * mean_dx);
          }
          if (g.requires_grad(ig)) {
            Tensor& gg = g.grad_ref(ig);
            for (std::size_t j = 0; j < c; ++j) gg[j] += go(i, j) * xhat[j];
          }
          if (g.requires_grad(ib)) {
            Tensor& gb = g.grad_ref(ib);
            for (std::size_t j = 0; j < c; ++j) gb[j] += go(i, j);
          }
        }
      });
}

Var dropout(const Var& x, double p, num::Prng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  Graph& g = graph_of(x);
  if (p == 0.0) return scale(x, 1.0);
  const double keep = 1.0 / (1.0 - p);
  Tensor mask(x.shape(), 0.0);
  for (auto& m : mask.data()) m = rng.uniform() >= p ? keep : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ix = x.id();
  return g.record("dropout", std::move(out), {x},
                  [ix, mask = std::move(mask)](Graph& g, std::size_t self) {
                    const Tensor& go = g.grad(self);
                    Tensor& gx = g.grad_ref(ix);
                    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
                  });
}

Var conv1d_causal_depthwise(const Var& x, const Var& w, const Var* bias, std::size_t stride,
                            std::size_t out_len, ConvPad pad) {
  need_matrix(x, "conv1d_causal_depthwise");
  need_matrix(w, "conv1d_causal_depthwise");
  if (stride < 1) throw ConfigError("conv1d_causal_depthwise: stride must be >= 1");
  const std::size_t T = x.rows(), C = x.cols(), k = w.cols();
  if (k < 1) throw ConfigError("conv1d_causal_depthwise: kernel must be >= 1");
  if (w.rows() != C) {
    throw ConfigError("conv1d_causal_depthwise: " + std::to_string(w.rows()) +
                      " filters for " + std::to_string(C) + " channels");
  }
  if (bias && bias->value().size() != C) {
    throw ConfigError("conv1d_causal_depthwise: bias " + shape_str(bias->shape()) + " for " +
                      std::to_string(C) + " channels");
  }
  const std::size_t full = T == 0 ? 0 : (T - 1) / stride + 1;
  if (out_len == 0) out_len = full;
  if (out_len > full) {
    throw ConfigError("conv1d_causal_depthwise: " + std::to_string(out_len) +
                      " outputs requested from " + std::to_string(T) + " inputs at stride " +
                      std::to_string(stride));
  }
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  Tensor out = Tensor::matrix(out_len, C);
  for (std::size_t m = 0; m < out_len; ++m) {
    for (std::size_t j = 0; j < k; ++j) {
      // Tap j reads input index m*stride - (k-1) + j.
      long t = static_cast<long>(m * stride + j) - static_cast<long>(k - 1);
      if (t < 0) {
        if (pad == ConvPad::zeros) continue;
        t = 0;
      }
      for (std::size_t c = 0; c < C; ++c) out(m, c) += wv(c, j) * xv(static_cast<std::size_t>(t), c);
    }
    if (bias)
      for (std::size_t c = 0; c < C; ++c) out(m, c) += bias->value()[c];
  }
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  const std::size_t ix = x.id(), iw = w.id();
  const std::size_t ib = bias ? bias->id() : 0;
  const bool has_bias = bias != nullptr;
  return g.record("conv1d_causal_depthwise", std::move(out), inputs,
                  [ix, iw, ib, has_bias, stride, k, pad](Graph& g, std::size_t self) {
                    const Tensor& go = g.grad(self);
                    const Tensor& xv = g.value(ix);
                    const Tensor& wv = g.value(iw);
                    const std::size_t M = go.rows(), C = go.cols();
                    Tensor* gx = g.requires_grad(ix) ? &g.grad_ref(ix) : nullptr;
                    Tensor* gw = g.requires_grad(iw) ? &g.grad_ref(iw) : nullptr;
                    for (std::size_t m = 0; m < M; ++m) {
                      const double* gom = &go.storage()[m * C];
                      for (std::size_t j = 0; j < k; ++j) {
                        long t = static_cast<long>(m * stride + j) - static_cast<long>(k - 1);
                        if (t < 0) {
                          if (pad == ConvPad::zeros) continue;
                          t = 0;
                        }
                        const auto tt = static_cast<std::size_t>(t);
                        if (gx) {
                          double* gxt = &gx->storage()[tt * C];
                          for (std::size_t c = 0; c < C; ++c) gxt[c] += wv(c, j) * gom[c];
                        }
                        if (gw) {
                          const double* xt = &xv.storage()[tt * C];
                          for (std::size_t c = 0; c < C; ++c) (*gw)(c, j) += xt[c] * gom[c];
                        }
                      }
                    }
                    if (has_bias && g.requires_grad(ib)) {
                      Tensor& gb = g.grad_ref(ib);
                      for (std::size_t m = 0; m < M; ++m)
                        for (std::size_t c = 0; c < C; ++c) gb[c] += go(m, c);
                    }
                  });
}

Var embedding_lookup(const Var& table, std::span<const int> ids) {
  need_matrix(table, "embedding_lookup");
  const std::size_t V = table.rows(), d = table.cols();
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= V) {
      throw InputError("token id " + std::to_string(ids[t]) + " at position " +
                       std::to_string(t) + " outside vocabulary of " + std::to_string(V));
    }
  }
  Graph& g = graph_of(table);
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t j = 0; j < d; ++j) out(t, j) = table.value()(static_cast<std::size_t>(ids[t]), j);
  const std::size_t itab = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  return g.record("embedding_lookup", std::move(out), {table},
                  [itab, idv = std::move(idv)](Graph& g, std::size_t self) {
                    const Tensor& go = g.grad(self);
                    Tensor& gt = g.grad_ref(itab);
                    const std::size_t d = go.cols();
                    for (std::size_t t = 0; t < idv.size(); ++t)
                      for (std::size_t j = 0; j < d; ++j)
                        gt(static_cast<std::size_t>(idv[t]), j) += go(t, j);
                  });
}

Var mean_over_time(const Var& x) {
  need_matrix(x, "mean_over_time");
  const std::size_t T = x.rows(), d = x.cols();
  if (T == 0) throw DimensionError("mean_over_time: empty sequence");
  Graph& g = graph_of(x);
  Tensor out = Tensor::matrix(1, d);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) out(0, j) += x.value()(t, j);
  for (auto& v : out.data()) v /= static_cast<double>(T);
  const std::size_t ix = x.id();
  return g.record("mean_over_time", std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_ref(ix);
    const std::size_t T = gx.rows(), d = gx.cols();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) gx(t, j) += go(0, j) / static_cast<double>(T);
  });
}

Var prefix_mean(const Var& x) {
  need_matrix(x, "prefix_mean");
  const std::size_t T = x.rows(), d = x.cols();
  Graph& g = graph_of(x);
  Tensor out = Tensor::matrix(T, d);
  std::vector<double> run(d, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      run[j] += x.value()(t, j);
      out(t, j) = run[j] / static_cast<double>(t + 1);
    }
  }
  const std::size_t ix = x.id();
  return g.record("prefix_mean", std::move(out), {x}, [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_ref(ix);
    const std::size_t T = go.rows(), d = go.cols();
    std::vector<double> acc(d, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      for (std::size_t j = 0; j < d; ++j) {
        acc[j] += go(t, j) / static_cast<double>(t + 1);
        gx(t, j) += acc[j];
      }
    }
  });
}

Var cross_entropy_logits(const Var& logits, std::span<const int> labels) {
  const std::size_t B = logits.rows(), C = logits.cols();
  if (labels.size() != B) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(B) + " rows");
  }
  Graph& g = graph_of(logits);
  Tensor probs = Tensor::matrix(B, C);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= C) {
      throw InputError("label " + std::to_string(labels[b]) + " outside " + std::to_string(C) +
                       " classes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.value()[b * C + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits.value()[b * C + c] - mx);
    for (std::size_t c = 0; c < C; ++c) probs(b, c) = std::exp(logits.value()[b * C + c] - mx) / z;
    loss -= logits.value()[b * C + static_cast<std::size_t>(labels[b])] - mx - std::log(z);
  }
  loss /= static_cast<double>(B);
  const std::size_t il = logits.id();
  std::vector<int> lab(labels.begin(), labels.end());
  return g.record("cross_entropy_logits", Tensor::scalar(loss), {logits},
                  [il, probs = std::move(probs), lab = std::move(lab)](Graph& g, std::size_t self) {
                    const double go = g.grad(self)[0];
                    Tensor& gl = g.grad_ref(il);
                    const std::size_t B = probs.rows(), C = probs.cols();
                    for (std::size_t b = 0; b < B; ++b) {
                      for (std::size_t c = 0; c < C; ++c) {
                        double d = probs(b, c) - (static_cast<int>(c) == lab[b] ? 1.0 : 0.0);
                        gl[b * C + c] += go * d / static_cast<double>(B);
                      }
                    }
                  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  need_matrix(x, "gather_rows");
  const std::size_t n = x.rows(), c = x.cols();
  for (auto r : rows)
    if (r >= n) throw DimensionError("gather_rows: row " + std::to_string(r) + " of " + std::to_string(n));
  Graph& g = graph_of(x);
  Tensor out = Tensor::matrix(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = x.value()(rows[i], j);
  const std::size_t ix = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return g.record("gather_rows", std::move(out), {x}, [ix, idx = std::move(idx)](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_ref(ix);
    const std::size_t c = go.cols();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gx(idx[i], j) += go(i, j);
  });
}

namespace {
// map[j] = block_index(j, factor, limit)
std::vector<std::size_t> block_map(std::size_t n, std::size_t factor, std::size_t limit) {
  std::vector<std::size_t> m(n);
  for (std::size_t j = 0; j < n; ++j) m[j] = block_index(j, factor, limit);
  return m;
}
}  // namespace

Var block_upsample(const Var& s, std::size_t out_rows, std::size_t out_cols, std::size_t factor) {
  need_matrix(s, "block_upsample");
  if (factor < 1) throw ConfigError("block_upsample: factor must be >= 1");
  const std::size_t r = s.rows(), c = s.cols();
  if (r == 0 || c == 0) throw DimensionError("block_upsample: empty source");
  Graph& g = graph_of(s);
  const Tensor& sv = s.value();
  auto rmap = block_map(out_rows, factor, r);
  auto cmap = block_map(out_cols, factor, c);
  Tensor out = Tensor::matrix(out_rows, out_cols);
  for (std::size_t i = 0; i < out_rows; ++i) {
    const double* src = &sv.storage()[rmap[i] * c];
    double* dst = &out.storage()[i * out_cols];
    for (std::size_t j = 0; j < out_cols; ++j) dst[j] = src[cmap[j]];
  }
  const std::size_t is = s.id();
  return g.record("block_upsample", std::move(out), {s},
                  [is, rmap = std::move(rmap), cmap = std::move(cmap)](Graph& g, std::size_t self) {
                    const Tensor& go = g.grad(self);
                    Tensor& gs = g.grad_ref(is);
                    const std::size_t c = gs.cols(), oc = go.cols();
                    for (std::size_t i = 0; i < go.rows(); ++i) {
                      double* dst = &gs.storage()[rmap[i] * c];
                      const double* src = &go.storage()[i * oc];
                      for (std::size_t j = 0; j < oc; ++j) dst[cmap[j]] += src[j];
                    }
                  });
}

Var block_sum_cols(const Var& p, std::size_t out_cols, std::size_t factor) {
  need_matrix(p, "block_sum_cols");
  if (factor < 1) throw ConfigError("block_sum_cols: factor must be >= 1");
  if (out_cols == 0) throw DimensionError("block_sum_cols: zero output columns");
  Graph& g = graph_of(p);
  const std::size_t r = p.rows(), c = p.cols();
  const Tensor& pv = p.value();
  auto cmap = block_map(c, factor, out_cols);
  Tensor out = Tensor::matrix(r, out_cols);
  for (std::size_t i = 0; i < r; ++i) {
    const double* src = &pv.storage()[i * c];
    double* dst = &out.storage()[i * out_cols];
    for (std::size_t j = 0; j < c; ++j) dst[cmap[j]] += src[j];
  }
  const std::size_t ip = p.id();
  return g.record("block_sum_cols", std::move(out), {p},
                  [ip, cmap = std::move(cmap)](Graph& g, std::size_t self) {
                    const Tensor& go = g.grad(self);
                    Tensor& gp = g.grad_ref(ip);
                    const std::size_t oc = go.cols(), c = gp.cols();
                    for (std::size_t i = 0; i < gp.rows(); ++i) {
                      const double* src = &go.storage()[i * oc];
                      double* dst = &gp.storage()[i * c];
                      for (std::size_t j = 0; j < c; ++j) dst[j] += src[cmap[j]];
                    }
                  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t len) {
  need_matrix(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  if (start + len > c) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(len) +
                         ") of " + shape_str(x.shape()));
  }
  Graph& g = graph_of(x);
  Tensor out = Tensor::matrix(r, len);
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(&xv.storage()[i * c + start], len, &out.storage()[i * len]);
  const std::size_t ix = x.id();
  return g.record("slice_cols", std::move(out), {x}, [ix, start](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_ref(ix);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gx(i, start + j) += go(i, j);
  });
}

Var slice_rows(const Var& x, std::size_t start, std::size_t len) {
  need_matrix(x, "slice_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (start + len > r) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(len) +
                         ") of " + shape_str(x.shape()));
  }
  Graph& g = graph_of(x);
  Tensor out = Tensor::matrix(len, c);
  std::copy_n(x.value().data().begin() + static_cast<long>(start * c), len * c, out.data().begin());
  const std::size_t ix = x.id();
  return g.record("slice_rows", std::move(out), {x}, [ix, start](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_ref(ix);
    const std::size_t off = start * go.cols();
    for (std::size_t i = 0; i < go.size(); ++i) gx[off + i] += go[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    need_matrix(p, "concat_cols");
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    c += p.cols();
  }
  Graph& g = graph_of(parts[0]);
  Tensor out = Tensor::matrix(r, c);
  std::vector<std::size_t> ids, widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t w = pv.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(&pv.storage()[i * w], w, &out.storage()[i * c + off]);
    off += w;
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return g.record("concat_cols", std::move(out), parts, [ids, widths](Graph& g, std::size_t self) {
    const Tensor& go = g.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) {
        Tensor& gp = g.grad_ref(ids[k]);
        for (std::size_t i = 0; i < go.rows(); ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp(i, j) += go(i, off + j);
      }
      off += widths[k];
    }
  });
}

Var element(const Var& x, std::size_t index) {
  if (index >= x.value().size()) {
    throw DimensionError("element: index " + std::to_string(index) + " of " + shape_str(x.shape()));
  }
  Graph& g = graph_of(x);
  const std::size_t ix = x.id();
  return g.record("element", Tensor::scalar(x.value()[index]), {x}, [ix, index](Graph& g, std::size_t self) {
    g.grad_ref(ix)[index] += g.grad(self)[0];
  });
}

}  // namespace hkt::grad

#include "hkt/analysis/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hkt/error.hpp"
#include "hkt/num/linalg.hpp"

namespace hkt::analysis {

namespace {

double spacing(double x) {
  const double a = std::abs(x);
  return std::nextafter(a, std::numeric_limits<double>::infinity()) - a;
}

double frobenius(const Tensor& t) {
  double s = 0.0;
  for (double v : t.storage()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

BilinearSplit split_bilinear(const Tensor& m) {
  if (m.rank() != 2 || m.rows() != m.cols())
    throw DimensionError("split_bilinear: expected a square matrix, got " +
                         grad::shape_str(m.shape()));
  const std::size_t n = m.rows();
  BilinearSplit s{m, Tensor::matrix(n, n), Tensor::matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    s.ms(i, i) = m(i, i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = m(i, j), b = m(j, i);
      double mid = 0.5 * (a + b);
      if (a != 0.0 && b != 0.0) {
        const double u = std::max(spacing(a), spacing(b));
        mid = std::nearbyint(mid / u) * u;
      }
      s.ms(i, j) = s.ms(j, i) = mid;
      s.ma(i, j) = a - mid;
      s.ma(j, i) = b - mid;
    }
  }
  return s;
}

Tensor head_rows(const Tensor& stacked, std::size_t head, std::size_t dk) {
  if ((head + 1) * dk > stacked.rows())
    throw DimensionError("head_rows: head " + std::to_string(head) + " of width " +
                         std::to_string(dk) + " outside " + grad::shape_str(stacked.shape()));
  Tensor out = Tensor::matrix(dk, stacked.cols());
  for (std::size_t r = 0; r < dk; ++r)
    for (std::size_t c = 0; c < stacked.cols(); ++c) out(r, c) = stacked(head * dk + r, c);
  return out;
}

Tensor bilinear_form(const Tensor& wq, const Tensor& wk) {
  if (wq.rows() != wk.rows() || wq.cols() != wk.cols())
    throw DimensionError("bilinear_form: " + grad::shape_str(wq.shape()) + " vs " +
                         grad::shape_str(wk.shape()));
  const std::size_t r = wq.rows(), n = wq.cols();
  Tensor m = Tensor::matrix(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < r; ++k) s += wq(k, a) * wk(k, b);
      m(a, b) = s;
    }
  return m;
}

Tensor scores_from_form(const Tensor& x, const Tensor& m, double dk) {
  const std::size_t T = x.rows(), d = x.cols();
  if (m.rows() != d || m.cols() != d)
    throw DimensionError("scores_from_form: x " + grad::shape_str(x.shape()) + ", M " +
                         grad::shape_str(m.shape()));
  // xm = x M
  Tensor xm = Tensor::matrix(T, d);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t b = 0; b < d; ++b) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += x(i, a) * m(a, b);
      xm(i, b) = s;
    }
  const double inv = 1.0 / std::sqrt(dk);
  Tensor out = Tensor::matrix(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < d; ++b) s += xm(i, b) * x(j, b);
      out(i, j) = s * inv;
    }
  return out;
}

Tensor scores_from_projections(const Tensor& x, const Tensor& wq, const Tensor& wk, double dk) {
  auto project = [&](const Tensor& w) {
    Tensor out = Tensor::matrix(x.rows(), w.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) s += x(i, c) * w(r, c);
        out(i, r) = s;
      }
    return out;
  };
  const Tensor q = project(wq), k = project(wk);
  const double inv = 1.0 / std::sqrt(dk);
  Tensor out = Tensor::matrix(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < q.cols(); ++r) s += q(i, r) * k(j, r);
      out(i, j) = s * inv;
    }
  return out;
}

EigenSummary eigen_summary(const Tensor& symmetric, double zero_tol) {
  EigenSummary s;
  s.eigenvalues = num::eigh_symmetric(symmetric).eigenvalues;
  double big = 0.0;
  for (double v : s.eigenvalues) big = std::max(big, std::abs(v));
  const double tol = zero_tol * big;
  for (double v : s.eigenvalues) {
    if (v < -tol) ++s.negative;
    else if (v > tol) ++s.positive;
  }
  const std::size_t nz = s.negative + s.positive;
  s.fraction_negative = nz ? double(s.negative) / double(nz) : 0.0;
  s.min_eigenvalue = s.eigenvalues.empty() ? 0.0 : s.eigenvalues.front();
  return s;
}

LevelDecomposition decompose_head(const Tensor& wq, const Tensor& wk, std::size_t dk,
                                  const std::vector<Tensor>& probes) {
  LevelDecomposition r;
  r.dk = dk;
  const BilinearSplit sp = split_bilinear(bilinear_form(wq, wk));
  const std::size_t n = sp.m.rows();
  r.entries = n * n;
  for (std::size_t i = 0; i < n * n; ++i) {
    const double back = sp.ms[i] + sp.ma[i];
    if (back == sp.m[i]) ++r.exact_entries;
    r.max_split_error = std::max(r.max_split_error, std::abs(back - sp.m[i]));
    r.max_ma_abs = std::max(r.max_ma_abs, std::abs(sp.ma[i]));
  }
  r.exact_split = r.exact_entries == r.entries;
  r.frob_ms = frobenius(sp.ms);
  r.frob_ma = frobenius(sp.ma);
  r.ratio = r.frob_ma > 0.0 ? r.frob_ms / r.frob_ma : std::numeric_limits<double>::infinity();

  Tensor scaled = sp.ms;
  const double inv = 1.0 / std::sqrt(double(dk));
  for (double& v : scaled.storage()) v *= inv;
  r.spectrum = eigen_summary(scaled);

  for (const Tensor& x : probes) {
    const Tensor s = scores_from_projections(x, wq, wk, double(dk));
    const Tensor sym = scores_from_form(x, sp.ms, double(dk));
    const Tensor anti = scores_from_form(x, sp.ma, double(dk));
    double scale = 1.0;
    for (double v : s.storage()) scale = std::max(scale, std::abs(v));
    const std::size_t T = x.rows();
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        r.max_sym_dev = std::max(
            r.max_sym_dev, std::abs(s(i, j) + s(j, i) - 2.0 * sym(i, j)) / scale);
        r.max_anti_dev = std::max(
            r.max_anti_dev, std::abs(s(i, j) - s(j, i) - 2.0 * anti(i, j)) / scale);
        if (i == j) continue;
        const double diff = s(i, j) - s(j, i);
        r.energy += diff * diff;
        r.energy_from_ma += 4.0 * anti(i, j) * anti(i, j);
      }
  }
  return r;
}

std::vector<std::vector<std::vector<Tensor>>> collect_levels(
    const model::HktModel& m, const std::vector<std::vector<int>>& batch) {
  std::vector<std::vector<std::vector<Tensor>>> out;
  out.reserve(batch.size());
  for (const auto& tokens : batch) {
    model::Trace trace;
    model::ForwardOptions opts;
    opts.trace = &trace;
    m.predict_logits(tokens, opts);
    std::vector<std::vector<Tensor>> per_layer;
    for (auto& lt : trace.layers) per_layer.push_back(std::move(lt.levels));
    out.push_back(std::move(per_layer));
  }
  return out;
}

DecompositionReport decompose_scores(const model::HktModel& m,
                                     const std::vector<std::vector<int>>& probe_batch) {
  if (probe_batch.empty()) throw InputError("decompose_scores: empty probe batch");
  const auto& c = m.config();
  const auto levels = collect_levels(m, probe_batch);
  DecompositionReport rep;
  rep.mean_ratio.assign(c.n_layers, std::vector<double>(c.n_levels, 0.0));
  for (std::size_t layer = 0; layer < c.n_layers; ++layer)
    for (std::size_t l = 0; l < c.n_levels; ++l) {
      const std::size_t dk = c.level_head_dim(l);
      const Tensor& wq = m.params().at(model::level_key(layer, l, "wq"));
      const Tensor& wk = m.params().at(model::level_key(layer, l, "wk"));
      std::vector<Tensor> probes;
      for (const auto& sample : levels) probes.push_back(sample[layer][l]);
      double sum = 0.0;
      std::size_t finite = 0;
      for (std::size_t h = 0; h < c.n_heads; ++h) {
        LevelDecomposition d = decompose_head(head_rows(wq, h, dk), head_rows(wk, h, dk), dk, probes);
        d.layer = layer;
        d.level = l;
        d.head = h;
        if (std::isfinite(d.ratio)) {
          sum += d.ratio;
          ++finite;
        }
        rep.rows.push_back(std::move(d));
      }
      rep.mean_ratio[layer][l] =
          finite ? sum / double(finite) : std::numeric_limits<double>::infinity();
    }
  return rep;
}

std::vector<PsdRow> psd_audit(const model::HktModel& m) {
  const auto& c = m.config();
  std::vector<PsdRow> out;
  for (std::size_t layer = 0; layer < c.n_layers; ++layer)
    for (std::size_t l = 0; l < c.n_levels; ++l) {
      const std::size_t dk = c.level_head_dim(l);
      const Tensor& wq = m.params().at(model::level_key(layer, l, "wq"));
      const Tensor& wk = m.params().at(model::level_key(layer, l, "wk"));
      for (std::size_t h = 0; h < c.n_heads; ++h) {
        const Tensor mm = bilinear_form(head_rows(wq, h, dk), head_rows(wk, h, dk));
        const std::size_t n = mm.rows();
        Tensor sym = Tensor::matrix(n, n);
        const double inv = 1.0 / (2.0 * std::sqrt(double(dk)));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) sym(i, j) = (mm(i, j) + mm(j, i)) * inv;
        out.push_back({layer, l, h, eigen_summary(sym)});
      }
    }
  return out;
}

}  // namespace hkt::analysis

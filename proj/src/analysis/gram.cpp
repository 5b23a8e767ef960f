#include "hkt/analysis/gram.hpp"

#include <algorithm>
#include <cmath>

#include "hkt/analysis/decompose.hpp"
#include "hkt/error.hpp"
#include "hkt/num/linalg.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::analysis {

namespace {

Tensor symmetric_part(const Tensor& m) {
  const std::size_t n = m.rows();
  Tensor s = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

double quad(const Tensor& pts, std::size_t i, const Tensor& m, std::size_t j) {
  const std::size_t d = pts.cols();
  double s = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < d; ++b) row += m(a, b) * pts(j, b);
    s += pts(i, a) * row;
  }
  return s;
}

Tensor time_mean(const Tensor& x) {
  Tensor out = Tensor::matrix(1, x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(t, c);
  for (double& v : out.storage()) v /= double(x.rows());
  return out;
}

}  // namespace

Tensor exp_kernel(const Tensor& points, const Tensor& m) {
  const std::size_t n = points.rows();
  Tensor k = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) k(i, j) = k(j, i) = std::exp(quad(points, i, m, j));
  return k;
}

GramReport gram_from_levels(const std::vector<Tensor>& points, const std::vector<Tensor>& forms,
                            const std::vector<Tensor>& wq, const std::vector<Tensor>& wk,
                            std::span<const double> lambda) {
  const std::size_t L = points.size();
  if (L == 0 || forms.size() != L || wq.size() != L || wk.size() != L || lambda.size() != L)
    throw DimensionError("gram_from_levels: inconsistent level counts");
  GramReport r;
  r.n = points[0].rows();
  r.lambda.assign(lambda.begin(), lambda.end());

  std::vector<Tensor> psd;
  double biggest = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    psd.push_back(num::psd_project(symmetric_part(forms[l])));
    for (std::size_t i = 0; i < r.n; ++i)
      for (std::size_t j = 0; j < r.n; ++j)
        biggest = std::max(biggest, std::abs(quad(points[l], i, psd[l], j)));
  }
  // exp overflows near 709; keep a margin
  constexpr double kMaxExponent = 600.0;
  if (biggest > kMaxExponent) r.input_scale = std::sqrt(kMaxExponent / biggest);

  r.k_hier = Tensor::matrix(r.n, r.n);
  Tensor linear = Tensor::matrix(r.n, r.n);
  for (std::size_t l = 0; l < L; ++l) {
    Tensor pts = points[l];
    for (double& v : pts.storage()) v *= r.input_scale;
    Tensor k = exp_kernel(pts, psd[l]);
    for (std::size_t i = 0; i < r.n * r.n; ++i) r.k_hier[i] += lambda[l] * k[i];
    r.level_min_eig.push_back(num::eigh_symmetric(k).eigenvalues.front());
    r.level_kernels.push_back(std::move(k));

    // Phi rows: [W_Q x; W_K x]
    const std::size_t dk = wq[l].rows();
    Tensor phi = Tensor::matrix(r.n, 2 * dk);
    for (std::size_t i = 0; i < r.n; ++i)
      for (std::size_t k2 = 0; k2 < dk; ++k2) {
        double q = 0.0, kk = 0.0;
        for (std::size_t c = 0; c < pts.cols(); ++c) {
          q += wq[l](k2, c) * pts(i, c);
          kk += wk[l](k2, c) * pts(i, c);
        }
        phi(i, k2) = q;
        phi(i, dk + k2) = kk;
      }
    for (std::size_t i = 0; i < r.n; ++i)
      for (std::size_t j = 0; j < r.n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < 2 * dk; ++c) s += phi(i, c) * phi(j, c);
        linear(i, j) += lambda[l] * s;
      }
    r.rank_bound += std::min(r.n, 2 * dk);
  }
  const auto eig = num::eigh_symmetric(r.k_hier).eigenvalues;
  r.min_eig = eig.front();
  double f = 0.0;
  for (double v : r.k_hier.storage()) f += v * v;
  r.frobenius = std::sqrt(f);
  const auto lin_eig = num::eigh_symmetric(linear).eigenvalues;
  r.linear_rank = num::numeric_rank(lin_eig);
  return r;
}

GramReport gram_factorisation(const model::HktModel& m, const std::vector<std::vector<int>>& samples,
                              std::size_t layer, std::size_t head) {
  const auto& c = m.config();
  if (samples.empty()) throw InputError("gram_factorisation: no samples");
  if (layer >= c.n_layers || head >= c.n_heads)
    throw ConfigError("gram_factorisation: layer/head out of range");
  const auto levels = collect_levels(m, samples);
  std::vector<Tensor> points, forms, wq, wk;
  for (std::size_t l = 0; l < c.n_levels; ++l) {
    const std::size_t dk = c.level_head_dim(l), dl = c.level_dim(l);
    Tensor pts = Tensor::matrix(samples.size(), dl);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Tensor mean = time_mean(levels[i][layer][l]);
      for (std::size_t k = 0; k < dl; ++k) pts(i, k) = mean(0, k);
    }
    points.push_back(std::move(pts));
    wq.push_back(head_rows(m.params().at(model::level_key(layer, l, "wq")), head, dk));
    wk.push_back(head_rows(m.params().at(model::level_key(layer, l, "wk")), head, dk));
    Tensor form = bilinear_form(wq.back(), wk.back());
    for (double& v : form.storage()) v /= std::sqrt(double(dk));
    forms.push_back(std::move(form));
  }
  const Tensor& gamma = m.params().at(model::layer_key(layer, "gamma"));
  std::vector<double> lambda(c.n_levels);
  double mx = gamma[0], total = 0.0;
  for (std::size_t l = 1; l < c.n_levels; ++l) mx = std::max(mx, gamma[l]);
  for (std::size_t l = 0; l < c.n_levels; ++l) total += lambda[l] = std::exp(gamma[l] - mx);
  for (double& v : lambda) v /= total;

  GramReport r = gram_from_levels(points, forms, wq, wk, lambda);
  r.layer = layer;
  r.head = head;
  return r;
}

double bilinear_residual(const Tensor& s, const Tensor& x0) {
  const std::size_t T = x0.rows();
  if (s.rows() != T || s.cols() != T)
    throw DimensionError("bilinear_residual: scores " + grad::shape_str(s.shape()) + ", x0 " +
                         grad::shape_str(x0.shape()));
  // P = U U^T from the eigenvectors of x0 x0^T with non-negligible eigenvalues
  Tensor gram = Tensor::matrix(T, T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      double v = 0.0;
      for (std::size_t c = 0; c < x0.cols(); ++c) v += x0(i, c) * x0(j, c);
      gram(i, j) = v;
    }
  const auto eig = num::eigh_symmetric(gram);
  const double top = std::max(std::abs(eig.eigenvalues.back()), 1e-300);
  Tensor p = Tensor::matrix(T, T);
  for (std::size_t k = 0; k < T; ++k) {
    if (eig.eigenvalues[k] <= 1e-10 * top) continue;
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j)
        p(i, j) += eig.eigenvectors(i, k) * eig.eigenvectors(j, k);
  }
  auto mm = [T](const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::matrix(T, T);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t k = 0; k < T; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < T; ++j) out(i, j) += aik * b(k, j);
      }
    return out;
  };
  const Tensor psp = mm(mm(p, s), p);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < T * T; ++i) {
    num += (s[i] - psp[i]) * (s[i] - psp[i]);
    den += s[i] * s[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

SeparationResult scale_separation(const model::ModelConfig& config, std::uint64_t seed,
                                  std::span<const double> lambda) {
  const std::size_t T = config.max_seq_len, d = config.d_model;
  if (T <= d)
    throw ConfigError("scale_separation needs max_seq_len > d_model (" + std::to_string(T) +
                      " <= " + std::to_string(d) + ")");
  model::HktModel m(config, seed);
  num::Prng rng(seed ^ 0x5eed5eedULL);
  Tensor x = Tensor::matrix(T, d);
  for (double& v : x.storage()) v = rng.normal();

  grad::Graph g;
  const model::Bound p(g, m.params(), false);
  model::Trace trace;
  model::ForwardOptions opts;
  opts.trace = &trace;
  model::encoder_forward_embedded(p, config, g.constant(x), opts);
  const auto& lt = trace.layers.front();
  std::vector<Tensor> head0;
  for (const auto& lvl : lt.scores) head0.push_back(lvl.front());

  SeparationResult r;
  const Tensor fused = model::fuse_scores(head0, lambda, T, config.stride, false);
  r.residual_hier = bilinear_residual(fused, lt.levels.front());
  r.residual_flat = bilinear_residual(head0.front(), lt.levels.front());
  return r;
}

}  // namespace hkt::analysis

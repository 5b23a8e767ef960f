#include "hkt/analysis/info.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hkt/error.hpp"
#include "hkt/num/linalg.hpp"

namespace hkt::analysis {

double gaussian_bound(double rho2) { return -0.5 * std::log1p(-rho2); }

double nongaussian_bound(double rho2, double kappa) {
  return gaussian_bound(rho2) + 0.5 * (kappa - 1.0) * rho2;
}

LevelInfo level_info(const Tensor& features, std::span<const double> target, std::size_t p,
                     std::optional<double> penalty) {
  const std::size_t n = features.rows();
  if (target.size() != n)
    throw DimensionError("level_info: " + std::to_string(n) + " rows, " +
                         std::to_string(target.size()) + " targets");
  p = std::min(p, features.cols());
  if (n <= p + 1) throw InputError("level_info: need n > p + 1 samples");
  const auto pca = num::fit_pca(features, p);
  const Tensor z = pca.project(features);

  LevelInfo r;
  r.n = n;
  r.p = p;
  r.rho2 = num::ridge_r2(z, target, penalty);

  Tensor joint = Tensor::matrix(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) joint(i, k) = z(i, k);
    joint(i, p) = target[i];
  }
  const auto st = num::mardia_kurtosis(joint);
  r.kappa = st.kappa;
  r.kappa_pairwise = st.kappa_pairwise;
  r.mardia_classical = st.classical;
  r.mardia_pairwise = st.pairwise;
  r.gaussian_bound = gaussian_bound(r.rho2);
  r.nongaussian_bound = nongaussian_bound(r.rho2, r.kappa);
  return r;
}

void level_weights(InfoReport& rep, std::span<const std::size_t> level_lengths) {
  if (level_lengths.size() != rep.levels.size())
    throw DimensionError("level_weights: length per level required");
  double prev = 0.0, total = 0.0;
  std::vector<double> w(rep.levels.size());
  for (std::size_t l = 0; l < rep.levels.size(); ++l) {
    auto& li = rep.levels[l];
    const double gain = rep.sigma_f2 * (li.rho2 - prev) - (li.kappa - 1.0) * li.rho2;
    li.delta_ng = rep.eps0 > 0.0 ? gain / (2.0 * rep.eps0) : 0.0;
    const double tl = double(level_lengths[l]);
    w[l] = std::max(0.0, gain) / (tl * tl);
    total += w[l];
    prev = li.rho2;
  }
  rep.lambda_star_fallback = !(total > 0.0);
  for (std::size_t l = 0; l < w.size(); ++l)
    rep.levels[l].lambda_star = rep.lambda_star_fallback ? 1.0 / double(w.size()) : w[l] / total;
}

InfoReport info_bounds(const model::HktModel& m, const data::Dataset& d, const InfoOptions& opts) {
  const auto& c = m.config();
  if (opts.layer >= c.n_layers) throw ConfigError("info_bounds: layer out of range");
  const std::size_t n = d.size();
  if (n <= opts.pca_dims + 1) throw InputError("info_bounds: too few samples for pca_dims");

  const std::size_t L = c.n_levels, H = c.n_heads;
  std::vector<std::size_t> q(L);
  std::vector<Tensor> feats(L);
  std::vector<double> f(n);
  std::vector<std::size_t> lengths(L);
  for (std::size_t i = 0; i < n; ++i) {
    model::Trace trace;
    model::ForwardOptions fo;
    fo.trace = &trace;
    const auto logits = m.predict_logits(d.sequences[i], fo);
    const int y = d.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.size())
      throw InputError("info_bounds: label " + std::to_string(y) + " outside the class range");
    f[i] = logits[y];
    const auto& lt = trace.layers[opts.layer];
    for (std::size_t l = 0; l < L; ++l) {
      const Tensor& s0 = lt.scores[l][0];
      if (i == 0) {
        lengths[l] = s0.rows();
        q[l] = std::min(opts.block, s0.rows());
        feats[l] = Tensor::matrix(n, H * q[l] * q[l]);
      }
      std::size_t k = 0;
      for (std::size_t h = 0; h < H; ++h) {
        const Tensor& s = lt.scores[l][h];
        for (std::size_t a = 0; a < q[l]; ++a)
          for (std::size_t b = 0; b < q[l]; ++b) feats[l](i, k++) = s(a, b);
      }
    }
  }

  InfoReport rep;
  rep.layer = opts.layer;
  rep.block = opts.block;
  rep.eps0 = opts.eps0;
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= double(n);
  for (double v : f) rep.sigma_f2 += (v - mean) * (v - mean);
  rep.sigma_f2 /= double(n - 1);
  if (!(rep.sigma_f2 > 0.0)) throw DegenerateError("info_bounds: target logit has zero variance");

  for (std::size_t l = 0; l < L; ++l) {
    LevelInfo li = level_info(feats[l], f, opts.pca_dims, opts.penalty);
    li.level = l;
    rep.levels.push_back(li);
  }
  level_weights(rep, lengths);
  return rep;
}

namespace {

// Least squares e = a + b r^l for fixed r; returns rss.
double fit_fixed_rate(const std::vector<double>& e, double r, double& a, double& b) {
  const std::size_t n = e.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double x = 1.0;
  for (std::size_t l = 0; l < n; ++l, x *= r) {
    sx += x;
    sy += e[l];
    sxx += x * x;
    sxy += x * e[l];
  }
  const double det = double(n) * sxx - sx * sx;
  if (std::abs(det) < 1e-300) {
    a = sy / double(n);
    b = 0.0;
  } else {
    b = (double(n) * sxy - sx * sy) / det;
    a = (sy - b * sx) / double(n);
  }
  double rss = 0.0;
  x = 1.0;
  for (std::size_t l = 0; l < n; ++l, x *= r) {
    const double res = e[l] - a - b * x;
    rss += res * res;
  }
  return rss;
}

}  // namespace

DecayFit decay_calibration(const std::map<std::size_t, double>& accuracy_by_levels) {
  if (accuracy_by_levels.size() < 3)
    throw InputError("decay_calibration: need at least 3 values of L");
  std::vector<double> e;
  std::size_t expect = accuracy_by_levels.begin()->first;
  for (const auto& [levels, acc] : accuracy_by_levels) {
    if (levels != expect++) throw InputError("decay_calibration: L values must be consecutive");
    e.push_back(1.0 - acc / 100.0);
  }

  DecayFit fit;
  for (std::size_t l = 1; l < e.size(); ++l)
    if (e[l] > e[l - 1]) fit.monotone = false;
  const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
  if (*hi - *lo < 1e-12) {
    fit.degenerate = true;
    fit.eps_inf = e.front();
    fit.residuals.assign(e.size(), 0.0);
    return fit;
  }

  // coarse grid over delta, then golden section around the best cell
  auto rss_at = [&](double delta) {
    double a, b;
    return fit_fixed_rate(e, 1.0 - delta, a, b);
  };
  constexpr int kGrid = 2000;
  int best = 0;
  double best_rss = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kGrid; ++k) {
    const double v = rss_at(double(k) / kGrid);
    if (v < best_rss) {
      best_rss = v;
      best = k;
    }
  }
  double a = std::max(0.0, double(best - 1) / kGrid);
  double b = std::min(1.0 - 1e-12, double(best + 1) / kGrid);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = rss_at(x1), f2 = rss_at(x2);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = rss_at(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = rss_at(x2);
    }
  }
  fit.delta = 0.5 * (a + b);
  const double r = 1.0 - fit.delta;
  fit.rss = fit_fixed_rate(e, r, fit.eps_inf, fit.amplitude);
  double x = 1.0;
  for (std::size_t l = 0; l < e.size(); ++l, x *= r)
    fit.residuals.push_back(e[l] - fit.eps_inf - fit.amplitude * x);
  return fit;
}

}  // namespace hkt::analysis

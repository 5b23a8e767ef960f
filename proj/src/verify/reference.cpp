#include "hkt/verify/reference.hpp"

#include <cmath>

#include "hkt/error.hpp"

namespace hkt::verify::reference {

namespace {

using Mat = std::vector<std::vector<double>>;

Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

Mat from(const Tensor& t) {
  Mat m = zeros(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

// x W^T + b
Mat affine(const Mat& x, const Mat& w, const Mat* b) {
  Mat out = zeros(x.size(), w.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < w.size(); ++o) {
      double s = b ? (*b)[0][o] : 0.0;
      for (std::size_t k = 0; k < w[o].size(); ++k) s += x[i][k] * w[o][k];
      out[i][o] = s;
    }
  return out;
}

Mat layer_norm(const Mat& x, const Mat& g, const Mat& b) {
  Mat out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = double(x[i].size());
    double mean = 0.0, var = 0.0;
    for (double v : x[i]) mean += v;
    mean /= n;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-12);
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - mean) * inv * g[0][j] + b[0][j];
  }
  return out;
}

void gelu_inplace(Mat& x) {
  for (auto& row : x)
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
}

Mat attention(const Mat& h, const Mat& wq, const Mat& wk, const Mat& wv, std::size_t heads,
              bool causal) {
  const std::size_t T = h.size(), d = wv.size(), dk = wq.size() / heads, dh = d / heads;
  const Mat q = affine(h, wq, nullptr), k = affine(h, wk, nullptr), v = affine(h, wv, nullptr);
  Mat out = zeros(T, d);
  for (std::size_t hd = 0; hd < heads; ++hd)
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t last = causal ? i : T - 1;
      std::vector<double> w(last + 1);
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= last; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += q[i][hd * dk + c] * k[j][hd * dk + c];
        w[j] = s / std::sqrt(double(dk));
        mx = std::max(mx, w[j]);
      }
      double z = 0.0;
      for (double& x : w) z += x = std::exp(x - mx);
      for (std::size_t j = 0; j <= last; ++j)
        for (std::size_t c = 0; c < dh; ++c) out[i][hd * dh + c] += w[j] / z * v[j][hd * dh + c];
    }
  return out;
}

Mat conv(const Mat& h, const Mat& wv, const Mat& kernel, bool causal) {
  const Mat v = affine(h, wv, nullptr);
  const std::size_t T = v.size(), d = v[0].size(), K = kernel[0].size();
  Mat out = zeros(T, d);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t j = 0; j < K; ++j) {
        const long src = long(t) - long(K - 1) + long(j);
        double x;
        if (src >= 0) x = v[std::size_t(src)][c];
        else x = causal ? 0.0 : v[0][c];
        out[t][c] += kernel[c][j] * x;
      }
  return out;
}

}  // namespace

Output encode(const model::ModelConfig& c, const model::ParamStore& p,
              std::span<const int> tokens, Mixer mixer) {
  auto P = [&](const std::string& name) { return from(p.at(name)); };
  const Mat embed = P("embed");
  Mat x;
  for (int id : tokens) {
    if (id < 0 || std::size_t(id) >= embed.size())
      throw InputError("token id " + std::to_string(id) + " outside the vocabulary");
    x.push_back(embed[std::size_t(id)]);
  }
  for (std::size_t layer = 0; layer < c.n_layers; ++layer) {
    auto L = [&](const std::string& w) { return P(model::layer_key(layer, w)); };
    auto V = [&](const std::string& w) { return P(model::level_key(layer, 0, w)); };
    const Mat h = layer_norm(x, L("ln1.g"), L("ln1.b"));
    const Mat mixed = mixer == Mixer::attention
                          ? attention(h, V("wq"), V("wk"), V("wv"), c.n_heads, c.causal)
                          : conv(h, V("wv"), V("conv"), c.causal);
    const Mat o = affine(mixed, V("wo"), nullptr);
    for (std::size_t t = 0; t < x.size(); ++t)
      for (std::size_t j = 0; j < x[t].size(); ++j) x[t][j] += o[t][j];
    const Mat b1 = L("ffn.b1"), b2 = L("ffn.b2");
    Mat f = affine(layer_norm(x, L("ln2.g"), L("ln2.b")), L("ffn.w1"), &b1);
    gelu_inplace(f);
    f = affine(f, L("ffn.w2"), &b2);
    for (std::size_t t = 0; t < x.size(); ++t)
      for (std::size_t j = 0; j < x[t].size(); ++j) x[t][j] += f[t][j];
  }
  const Mat cb = P("cls.b");
  const Mat pos = affine(layer_norm(x, P("final.ln.g"), P("final.ln.b")), P("cls.w"), &cb);
  Output out;
  out.position_logits = Tensor::matrix(pos.size(), pos[0].size());
  out.logits.assign(pos[0].size(), 0.0);
  for (std::size_t t = 0; t < pos.size(); ++t)
    for (std::size_t k = 0; k < pos[t].size(); ++k) {
      out.position_logits(t, k) = pos[t][k];
      out.logits[k] += pos[t][k] / double(pos.size());
    }
  return out;
}

}  // namespace hkt::verify::reference

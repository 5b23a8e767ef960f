#include "hkt/model/hkt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hkt/error.hpp"

namespace hkt::model {

using namespace grad;

namespace {

Var linear(const Var& x, const Var& w, const Var& b) { return add_row_bias(matmul_nt(x, w), b); }

Var constant_row(Graph& g, std::span<const double> values) {
  return g.constant(Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end())));
}

std::vector<double> checked_simplex(const std::vector<double>& w, std::size_t L, const char* what) {
  if (w.size() != L)
    throw ConfigError(std::string(what) + " override has " + std::to_string(w.size()) +
                      " entries for " + std::to_string(L) + " levels");
  double total = 0.0;
  for (double v : w) {
    if (v < 0.0) throw ConfigError(std::string(what) + " override has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError(std::string(what) + " override must sum to 1");
  return w;
}

std::vector<std::size_t> upsample_rows(std::size_t T, std::size_t factor, std::size_t n) {
  std::vector<std::size_t> idx(T);
  for (std::size_t i = 0; i < T; ++i) idx[i] = block_index(i, factor, n);
  return idx;
}

}  // namespace

std::vector<Var> downsample_cascade(const Var& x0, const Bound& p, const ModelConfig& c,
                                    std::size_t layer) {
  const std::size_t T = x0.rows();
  if (T < c.level_factor(c.n_levels - 1))
    throw ConfigError("sequence of length " + std::to_string(T) + " too short for " +
                      std::to_string(c.n_levels) + " levels at stride " + std::to_string(c.stride));
  std::vector<Var> stack{x0};
  for (std::size_t l = 1; l < c.n_levels; ++l) {
    const Var& dw_b = p(level_key(layer, l, "down.dw_b"));
    Var h = conv1d_causal_depthwise(stack.back(), p(level_key(layer, l, "down.dw")), &dw_b,
                                    c.stride, c.level_len(l, T),
                                    c.causal ? ConvPad::zeros : ConvPad::edge);
    h = linear(h, p(level_key(layer, l, "down.pw")), p(level_key(layer, l, "down.pw_b")));
    h = layernorm(h, p(level_key(layer, l, "down.ln.g")), p(level_key(layer, l, "down.ln.b")));
    stack.push_back(gelu(h));
  }
  return stack;
}

std::vector<std::vector<Var>> level_scores(const std::vector<Var>& stack, const Bound& p,
                                           const ModelConfig& c, std::size_t layer) {
  std::vector<std::vector<Var>> out(stack.size());
  for (std::size_t l = 0; l < stack.size(); ++l) {
    const std::size_t dkl = c.level_head_dim(l);
    const Var q = matmul_nt(stack[l], p(level_key(layer, l, "wq")));
    const Var k = matmul_nt(stack[l], p(level_key(layer, l, "wk")));
    const double inv = 1.0 / std::sqrt(static_cast<double>(dkl));
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const Var qh = c.n_heads == 1 ? q : slice_cols(q, h * dkl, dkl);
      const Var kh = c.n_heads == 1 ? k : slice_cols(k, h * dkl, dkl);
      out[l].push_back(scale(matmul_nt(qh, kh), inv));
    }
  }
  return out;
}

Var fuse_scores(const std::vector<Var>& per_level, const Var& lambda, std::size_t T,
                std::size_t stride) {
  const std::size_t L = per_level.size();
  if (L == 0 || lambda.value().size() != L)
    throw DimensionError("fuse_scores: " + std::to_string(lambda.value().size()) + " weights for " +
                         std::to_string(L) + " levels");
  // maps[l][i] = block index of position i at level l
  std::vector<std::vector<std::size_t>> maps(L);
  std::vector<std::size_t> ids;
  std::vector<Var> inputs;
  std::size_t factor = 1;
  for (std::size_t l = 0; l < L; ++l, factor *= stride) {
    const Tensor& s = per_level[l].value();
    if (s.rows() != s.cols() || s.rows() == 0)
      throw DimensionError("fuse_scores: level " + std::to_string(l) + " scores " +
                           shape_str(s.shape()));
    maps[l] = upsample_rows(T, factor, s.rows());
    ids.push_back(per_level[l].id());
    inputs.push_back(per_level[l]);
  }
  inputs.push_back(lambda);
  const Tensor& lam = lambda.value();
  Tensor out = Tensor::matrix(T, T);
  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& s = per_level[l].value();
    const auto& m = maps[l];
    const double w = lam[l];
    for (std::size_t i = 0; i < T; ++i) {
      const double* src = &s.storage()[m[i] * s.cols()];
      double* dst = &out.storage()[i * T];
      for (std::size_t j = 0; j < T; ++j) dst[j] += w * src[m[j]];
    }
  }
  const std::size_t il = lambda.id();
  return lambda.graph()->record(
      "fuse_scores", std::move(out), inputs,
      [ids = std::move(ids), maps = std::move(maps), il, T](Graph& g, std::size_t self) {
        const Tensor& go = g.grad(self);
        const Tensor& lam = g.value(il);
        const bool want_lambda = g.requires_grad(il);
        for (std::size_t l = 0; l < ids.size(); ++l) {
          const Tensor& s = g.value(ids[l]);
          const auto& m = maps[l];
          const std::size_t c = s.cols();
          const bool want_s = g.requires_grad(ids[l]);
          Tensor* gs = want_s ? &g.grad_ref(ids[l]) : nullptr;
          double dl = 0.0;
          for (std::size_t i = 0; i < T; ++i) {
            const double* gi = &go.storage()[i * T];
            const std::size_t row = m[i] * c;
            if (gs) {
              double* dst = &gs->storage()[row];
              for (std::size_t j = 0; j < T; ++j) dst[m[j]] += lam[l] * gi[j];
            }
            if (want_lambda) {
              const double* src = &s.storage()[row];
              for (std::size_t j = 0; j < T; ++j) dl += gi[j] * src[m[j]];
            }
          }
          if (want_lambda) g.grad_ref(il)[l] += dl;
        }
      });
}

Tensor fuse_scores(const std::vector<Tensor>& per_level, std::span<const double> lambda,
                   std::size_t T, std::size_t stride, bool causal) {
  if (lambda.size() != per_level.size())
    throw DimensionError("fuse_scores: " + std::to_string(lambda.size()) + " weights for " +
                         std::to_string(per_level.size()) + " levels");
  Tensor out = Tensor::matrix(T, T);
  std::size_t factor = 1;
  for (std::size_t l = 0; l < per_level.size(); ++l, factor *= stride) {
    const Tensor& s = per_level[l];
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t bi = block_index(i, factor, s.rows());
      for (std::size_t j = 0; j < T; ++j)
        out(i, j) += lambda[l] * s(bi, block_index(j, factor, s.cols()));
    }
  }
  if (causal)
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = i + 1; j < T; ++j) out(i, j) = -std::numeric_limits<double>::infinity();
  return out;
}

namespace {

Var blend(const Var& attention, const Var& conv, const Var& beta) {
  if (!attention.valid()) return conv;
  if (!conv.valid()) return attention;
  Graph& g = *beta.graph();
  const Var one_minus = sub(g.constant(Tensor(beta.shape(), 1.0)), beta);
  return add(scale_by(attention, beta), scale_by(conv, one_minus));
}

Var attend(const Var& probs, const Var& values, std::size_t factor) {
  const bool same = factor == 1 && values.rows() == probs.cols();
  return matmul(same ? probs : block_sum_cols(probs, values.rows(), factor), values);
}

Var upsample_values(const Var& values, std::size_t T, std::size_t factor) {
  if (factor == 1 && values.rows() == T) return values;
  const auto idx = upsample_rows(T, factor, values.rows());
  return gather_rows(values, idx);
}

}  // namespace

HybridBranches hybrid_head(const Var& probs, const Var& values, const Var& conv_w,
                           const Var& beta, std::size_t T, std::size_t factor, ConvPad pad) {
  HybridBranches b;
  if (probs.valid()) b.attention = attend(probs, values, factor);
  if (conv_w.valid())
    b.conv = conv1d_causal_depthwise(upsample_values(values, T, factor), conv_w, nullptr, 1, 0, pad);
  b.blended = blend(b.attention, b.conv, beta);
  return b;
}

Var dynamic_fusion(const std::vector<Var>& level_outputs, const std::vector<Var>& wo,
                   const Var& alpha) {
  if (level_outputs.size() != wo.size() || alpha.cols() != level_outputs.size())
    throw DimensionError("dynamic_fusion: " + std::to_string(level_outputs.size()) +
                         " outputs, " + std::to_string(wo.size()) + " projections, alpha " +
                         shape_str(alpha.shape()));
  const bool per_position = alpha.rows() > 1;
  Var total;
  for (std::size_t l = 0; l < level_outputs.size(); ++l) {
    const Var o = matmul_nt(level_outputs[l], wo[l]);
    const Var term = per_position ? scale_rows(o, slice_cols(alpha, l, 1))
                                  : scale_by(o, element(alpha, l));
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

Var fusion_weights(const Var& pooled, const Bound& p, const ModelConfig& c, std::size_t layer) {
  (void)c;
  const Var h = gelu(linear(pooled, p(layer_key(layer, "fuse.w1")), p(layer_key(layer, "fuse.b1"))));
  return softmax_rows(linear(h, p(layer_key(layer, "fuse.w2")), p(layer_key(layer, "fuse.b2"))));
}

Var hkt_layer(const Var& x, const Bound& p, const ModelConfig& c, std::size_t layer,
              const ForwardOptions& opts, std::vector<Var>* lambdas) {
  Graph& g = p.graph();
  const std::size_t T = x.rows(), L = c.n_levels, H = c.n_heads, dh = c.head_dim();
  const Var h = layernorm(x, p(layer_key(layer, "ln1.g")), p(layer_key(layer, "ln1.b")));
  const std::vector<Var> stack = downsample_cascade(h, p, c, layer);
  const bool need_attn = c.beta_mode != BetaMode::fixed0;
  const bool need_conv = c.beta_mode != BetaMode::fixed1;
  const ConvPad pad = c.causal ? ConvPad::zeros : ConvPad::edge;

  Var lambda;
  if (opts.lambda_override) {
    lambda = constant_row(g, checked_simplex(*opts.lambda_override, L, "lambda"));
  } else {
    lambda = softmax_rows(p(layer_key(layer, "gamma")));
    if (lambdas) lambdas->push_back(lambda);
  }

  std::vector<std::vector<Var>> scores;
  std::vector<Var> probs(H);
  if (need_attn || opts.trace) scores = level_scores(stack, p, c, layer);
  if (need_attn) {
    Mask mask;
    const bool masked = c.causal && !opts.sabotage_mask;
    if (masked) mask = Mask::causal(T);
    for (std::size_t hd = 0; hd < H; ++hd) {
      std::vector<Var> per_level;
      for (std::size_t l = 0; l < L; ++l) per_level.push_back(scores[l][hd]);
      probs[hd] = softmax_rows(fuse_scores(per_level, lambda, T, c.stride), masked ? &mask : nullptr);
    }
  }

  const Var& gt = p(layer_key(layer, "gamma_tilde"));
  Tensor beta_values = Tensor::matrix(H, L);
  std::vector<Var> level_out, wo;
  for (std::size_t l = 0; l < L; ++l) {
    const Var v = matmul_nt(stack[l], p(level_key(layer, l, "wv")));
    const std::size_t factor = c.level_factor(l);
    // The conv branch is depthwise, so one pass over all d channels equals
    // the per-head convolutions side by side.
    Var conv;
    if (need_conv)
      conv = conv1d_causal_depthwise(upsample_values(v, T, factor), p(level_key(layer, l, "conv")),
                                     nullptr, 1, 0, pad);
    std::vector<Var> heads;
    for (std::size_t hd = 0; hd < H; ++hd) {
      Var beta;
      if (c.beta_mode == BetaMode::learned) {
        beta = sigmoid(element(gt, hd * L + l));
        beta_values(hd, l) = beta.value().item();
      } else {
        beta_values(hd, l) = c.beta_mode == BetaMode::fixed1 ? 1.0 : 0.0;
      }
      Var attn, conv_h;
      if (need_attn) attn = attend(probs[hd], H == 1 ? v : slice_cols(v, hd * dh, dh), factor);
      if (need_conv) conv_h = H == 1 ? conv : slice_cols(conv, hd * dh, dh);
      heads.push_back(blend(attn, conv_h, beta));
    }
    level_out.push_back(H == 1 ? heads[0] : concat_cols(heads));
    wo.push_back(p(level_key(layer, l, "wo")));
  }

  Var alpha;
  if (opts.alpha_override) {
    alpha = constant_row(g, checked_simplex(*opts.alpha_override, L, "alpha"));
  } else if (c.alpha_mode == AlphaMode::uniform) {
    alpha = g.constant(Tensor::matrix(1, L, 1.0 / static_cast<double>(L)));
  } else {
    // A global mean would let future positions steer the weights of the past.
    alpha = fusion_weights(c.causal ? prefix_mean(h) : mean_over_time(h), p, c, layer);
  }
  Var out = dynamic_fusion(level_out, wo, alpha);

  const bool drop = opts.training && c.dropout > 0.0;
  if (drop && !opts.rng) throw ConfigError("training with dropout needs a Prng");
  if (drop) out = dropout(out, c.dropout, *opts.rng);
  Var y = add(x, out);

  const Var h2 = layernorm(y, p(layer_key(layer, "ln2.g")), p(layer_key(layer, "ln2.b")));
  Var f = gelu(linear(h2, p(layer_key(layer, "ffn.w1")), p(layer_key(layer, "ffn.b1"))));
  f = linear(f, p(layer_key(layer, "ffn.w2")), p(layer_key(layer, "ffn.b2")));
  if (drop) f = dropout(f, c.dropout, *opts.rng);
  y = add(y, f);

  if (opts.trace) {
    LayerTrace lt;
    for (const auto& s : stack) lt.levels.push_back(s.value());
    for (const auto& lvl : scores) {
      lt.scores.emplace_back();
      for (const auto& s : lvl) lt.scores.back().push_back(s.value());
    }
    lt.lambda.assign(lambda.value().storage().begin(), lambda.value().storage().end());
    lt.alpha = alpha.value();
    lt.beta = std::move(beta_values);
    opts.trace->layers.push_back(std::move(lt));
  }
  return y;
}

Var lambda_regularizer(const Var& lambda, bool div, bool mono) {
  Graph& g = *lambda.graph();
  const Tensor& lv = lambda.value();
  const std::size_t L = lv.size();
  double v = 0.0;
  if (div)
    for (std::size_t l = 0; l < L; ++l)
      if (lv[l] > 0.0) v += lv[l] * std::log(lv[l]);
  if (mono)
    for (std::size_t l = 0; l + 1 < L; ++l) v += std::max(0.0, lv[l + 1] - lv[l]);
  const std::size_t il = lambda.id();
  return g.record("lambda_regularizer", Tensor::scalar(v), {lambda},
                  [il, div, mono](Graph& g, std::size_t self) {
                    const double go = g.grad(self).item();
                    const Tensor& lv = g.value(il);
                    Tensor& gl = g.grad_ref(il);
                    const std::size_t L = lv.size();
                    if (div)
                      for (std::size_t l = 0; l < L; ++l)
                        if (lv[l] > 0.0) gl[l] += go * (std::log(lv[l]) + 1.0);
                    if (mono)
                      for (std::size_t l = 0; l + 1 < L; ++l)
                        if (lv[l + 1] > lv[l]) {
                          gl[l + 1] += go;
                          gl[l] -= go;
                        }
                  });
}

ForwardResult encoder_forward_embedded(const Bound& p, const ModelConfig& c, const Var& x,
                                       const ForwardOptions& opts) {
  ForwardResult r;
  r.embedding = x;
  if (opts.trace) opts.trace->embedding = x.value();
  std::vector<Var> lambdas;
  Var h = x;
  for (std::size_t i = 0; i < c.n_layers; ++i) h = hkt_layer(h, p, c, i, opts, &lambdas);
  h = layernorm(h, p("final.ln.g"), p("final.ln.b"));
  r.position_logits = linear(h, p("cls.w"), p("cls.b"));
  r.logits = mean_over_time(r.position_logits);
  if ((c.div_loss || c.mono_loss) && !lambdas.empty() && c.n_levels > 1) {
    for (const auto& lam : lambdas) {
      const Var term = lambda_regularizer(lam, c.div_loss, c.mono_loss);
      r.regularizer = r.regularizer.valid() ? add(r.regularizer, term) : term;
    }
    r.regularizer = scale(r.regularizer, c.reg_weight);
  }
  return r;
}

ForwardResult encoder_forward(const Bound& p, const ModelConfig& c, std::span<const int> tokens,
                              const ForwardOptions& opts) {
  if (tokens.empty()) throw InputError("empty token sequence");
  return encoder_forward_embedded(p, c, embedding_lookup(p("embed"), tokens), opts);
}

HktModel::HktModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(init_params(config_, seed)) {}

HktModel::HktModel(ModelConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  check_params(config_, params_);
}

std::vector<double> HktModel::predict_logits(std::span<const int> tokens,
                                             const ForwardOptions& opts) const {
  Graph g;
  const Bound p(g, params_, false);
  ForwardOptions eval = opts;
  eval.training = false;
  const Tensor& lv = encoder_forward(p, config_, tokens, eval).logits.value();
  return {lv.storage().begin(), lv.storage().end()};
}

int HktModel::predict(std::span<const int> tokens) const {
  const auto logits = predict_logits(tokens);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

HktModel HktModel::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  return HktModel(std::move(ck.config), std::move(ck.params));
}

}  // namespace hkt::model

#include "hkt/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hkt/grad/ops.hpp"
#include "hkt/model/hkt.hpp"

namespace hkt::verify {

using grad::Graph;

Tensor central_difference(const std::function<double(const Tensor&)>& f, Tensor x, double eps) {
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double fp = f(x);
    x[i] = orig - eps;
    const double fm = f(x);
    x[i] = orig;
    out[i] = (fp - fm) / (2.0 * eps);
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, relative_error(analytic[i], numeric[i], floor));
  return worst;
}

Tensor random_tensor(grad::Shape shape, num::Prng& rng, double scale) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

namespace {

double weighted_output(const Builder& build, const std::vector<Tensor>& inputs,
                       const Tensor& weights) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t, false));
  const Var out = build(vars);
  double s = 0.0;
  for (std::size_t i = 0; i < out.value().size(); ++i) s += out.value()[i] * weights[i];
  return s;
}

}  // namespace

double check_gradients(const Builder& build, const std::vector<Tensor>& inputs,
                       std::uint64_t seed, double eps) {
  num::Prng rng(seed);
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t, true));
  const Var out = build(vars);
  const Tensor weights = random_tensor(out.shape(), rng);
  g.backward(grad::sum(grad::mul(out, g.constant(weights))));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& x) {
      std::vector<Tensor> probe = inputs;
      probe[k] = x;
      return weighted_output(build, probe, weights);
    };
    worst = std::max(worst, max_relative_error(vars[k].grad(), central_difference(f, inputs[k], eps)));
  }
  return worst;
}

std::vector<PrimitiveCheck> primitive_suite(std::uint64_t seed) {
  using namespace grad;
  struct Dims {
    std::size_t m, n, k;
  };
  const Dims dims[] = {{2, 3, 4}, {3, 5, 2}, {6, 4, 3}};
  std::vector<PrimitiveCheck> out;
  num::Prng rng(seed);
  auto run = [&](const std::string& name, const Builder& b, const std::vector<Tensor>& in) {
    const double e = check_gradients(b, in, rng.next_u64());
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.name == name; });
    if (it == out.end()) out.push_back({name, e});
    else it->max_rel_error = std::max(it->max_rel_error, e);
  };
  for (const auto& d : dims) {
    auto R = [&](std::size_t r, std::size_t c) { return random_tensor({r, c}, rng); };
    const Tensor a = R(d.m, d.n), b = R(d.m, d.n);
    run("matmul", [](const auto& v) { return matmul(v[0], v[1]); }, {R(d.m, d.k), R(d.k, d.n)});
    run("matmul_nt", [](const auto& v) { return matmul_nt(v[0], v[1]); }, {R(d.m, d.k), R(d.n, d.k)});
    run("transpose", [](const auto& v) { return transpose(v[0]); }, {a});
    run("add", [](const auto& v) { return add(v[0], v[1]); }, {a, b});
    run("sub", [](const auto& v) { return sub(v[0], v[1]); }, {a, b});
    run("mul", [](const auto& v) { return mul(v[0], v[1]); }, {a, b});
    run("scale", [](const auto& v) { return scale(v[0], -1.7); }, {a});
    run("scale_by", [](const auto& v) { return scale_by(v[0], v[1]); }, {a, R(1, 1)});
    run("scale_rows", [](const auto& v) { return scale_rows(v[0], v[1]); }, {a, R(d.m, 1)});
    run("add_row_bias", [](const auto& v) { return add_row_bias(v[0], v[1]); }, {a, R(1, d.n)});
    run("sum", [](const auto& v) { return sum(v[0]); }, {a});
    run("gelu", [](const auto& v) { return gelu(v[0]); }, {a});
    run("sigmoid", [](const auto& v) { return sigmoid(v[0]); }, {a});
    run("softmax_rows", [](const auto& v) { return softmax_rows(v[0]); }, {a});
    run("softmax_rows_causal",
        [](const auto& v) {
          const Mask mask = Mask::causal(v[0].rows());
          return softmax_rows(v[0], &mask);
        },
        {R(d.n, d.n)});
    run("layernorm", [](const auto& v) { return layernorm(v[0], v[1], v[2]); },
        {a, R(1, d.n), R(1, d.n)});
    for (std::size_t stride : {std::size_t(1), std::size_t(2)}) {
      const std::string s = std::to_string(stride);
      run("conv_zeros_s" + s,
          [stride](const auto& v) { return conv1d_causal_depthwise(v[0], v[1], &v[2], stride); },
          {R(d.k + 3, d.n), R(d.n, 3), R(1, d.n)});
      run("conv_edge_s" + s,
          [stride](const auto& v) {
            return conv1d_causal_depthwise(v[0], v[1], &v[2], stride, 0, ConvPad::edge);
          },
          {R(d.k + 3, d.n), R(d.n, 3), R(1, d.n)});
    }
    run("embedding_lookup",
        [](const auto& v) {
          const int ids[] = {0, 2, 1, 2};
          return embedding_lookup(v[0], ids);
        },
        {R(3, d.n)});
    run("mean_over_time", [](const auto& v) { return mean_over_time(v[0]); }, {a});
    run("prefix_mean", [](const auto& v) { return prefix_mean(v[0]); }, {a});
    run("cross_entropy",
        [](const auto& v) {
          std::vector<int> labels(v[0].rows());
          for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = int(i % v[0].cols());
          return cross_entropy_logits(v[0], labels);
        },
        {a});
    run("gather_rows",
        [](const auto& v) {
          const std::size_t rows[] = {1, 0, 1};
          return gather_rows(v[0], rows);
        },
        {a});
    run("block_upsample", [](const auto& v) { return block_upsample(v[0], 5, 7, 2); }, {R(3, 3)});
    run("block_sum_cols", [&](const auto& v) { return block_sum_cols(v[0], 2, 2); }, {R(d.m, 5)});
    run("slice_cols", [](const auto& v) { return slice_cols(v[0], 1, v[0].cols() - 1); }, {a});
    run("slice_rows", [](const auto& v) { return slice_rows(v[0], 1, v[0].rows() - 1); }, {a});
    run("concat_cols", [](const auto& v) { return concat_cols({v[0], v[1]}); }, {a, R(d.m, 2)});
    run("element", [](const auto& v) { return element(v[0], 1); }, {a});
  }
  return out;
}

ModelGradCheck model_gradient_check(const model::ModelConfig& config, std::uint64_t seed,
                                    std::size_t per_tensor, double eps, double floor) {
  model::ModelConfig c = config;
  c.dropout = 0.0;
  model::ParamStore params = model::init_params(c, seed);
  num::Prng rng(seed ^ 0x9e3779b97f4a7c15ull);
  // Fusion logits start at zero; perturb them so lambda, beta and alpha are
  // away from the symmetric point.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& n = params.name(i);
    if (n.find("gamma") != std::string::npos || n.find("ln") != std::string::npos ||
        n.find("_b") != std::string::npos || n.find(".b") != std::string::npos)
      for (auto& v : params.value(i).data()) v += 0.3 * rng.normal();
  }
  std::vector<int> tokens(c.max_seq_len);
  for (auto& t : tokens) t = int(rng.below(c.vocab_size));
  const int label = int(rng.below(c.n_classes));

  auto loss_of = [&](model::Bound& p) {
    const auto r = model::encoder_forward(p, c, tokens);
    Var loss = grad::cross_entropy_logits(r.logits, std::span<const int>(&label, 1));
    if (r.regularizer.valid()) loss = grad::add(loss, r.regularizer);
    return loss;
  };
  auto value_of = [&](const model::ParamStore& ps) {
    Graph g;
    model::Bound p(g, ps, false);
    return loss_of(p).value().item();
  };

  Graph g;
  model::Bound bound(g, params, true);
  g.backward(loss_of(bound));

  ModelGradCheck out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor analytic = bound.var(i).grad();
    std::vector<std::size_t> coords;
    const std::size_t n = params.value(i).size();
    if (per_tensor == 0 || per_tensor >= n) {
      for (std::size_t j = 0; j < n; ++j) coords.push_back(j);
    } else {
      for (std::size_t j = 0; j < per_tensor; ++j) coords.push_back(rng.below(n));
    }
    for (std::size_t j : coords) {
      model::ParamStore probe = params;
      const double orig = probe.value(i)[j];
      probe.value(i)[j] = orig + eps;
      const double fp = value_of(probe);
      probe.value(i)[j] = orig - eps;
      const double fm = value_of(probe);
      const double e = relative_error(analytic[j], (fp - fm) / (2.0 * eps), floor);
      ++out.coordinates;
      if (e > out.max_rel_error) {
        out.max_rel_error = e;
        out.worst_param = params.name(i) + "[" + std::to_string(j) + "]";
      }
    }
  }
  return out;
}

}  // namespace hkt::verify

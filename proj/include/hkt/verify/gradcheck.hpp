#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hkt/grad/graph.hpp"
#include "hkt/model/config.hpp"
#include "hkt/num/prng.hpp"

namespace hkt::verify {

using grad::Tensor;
using grad::Var;

// Central differences of a scalar function of one tensor argument.
Tensor central_difference(const std::function<double(const Tensor&)>& f, Tensor x,
                          double eps = 1e-5);

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
// turning round-off into large relative errors.
double relative_error(double analytic, double numeric, double floor = 1e-6);
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

Tensor random_tensor(grad::Shape shape, num::Prng& rng, double scale = 1.0);

using Builder = std::function<Var(const std::vector<Var>&)>;

// Worst relative error over all inputs between reverse mode and central
// differences. The output is projected on fixed random weights so every
// entry contributes.
double check_gradients(const Builder& build, const std::vector<Tensor>& inputs,
                       std::uint64_t seed = 7, double eps = 1e-5);

struct PrimitiveCheck {
  std::string name;
  double max_rel_error = 0.0;
};

// Every differentiable primitive on three random shapes.
std::vector<PrimitiveCheck> primitive_suite(std::uint64_t seed);

struct ModelGradCheck {
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
};

// Cross-entropy (+ regulariser when enabled) of a random labelled sequence.
// Checks `per_tensor` sampled coordinates of every parameter tensor, or all
// of them when per_tensor == 0.
ModelGradCheck model_gradient_check(const model::ModelConfig& config, std::uint64_t seed,
                                    std::size_t per_tensor, double eps = 1e-5,
                                    double floor = 1e-6);

}  // namespace hkt::verify

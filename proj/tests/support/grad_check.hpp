#pragma once

#include "hkt/grad/graph.hpp"
#include "hkt/grad/ops.hpp"
#include "support/finite_diff.hpp"

namespace hkt::testing {

using grad::Graph;
using grad::Var;
using verify::Builder;
using verify::check_gradients;
using verify::random_tensor;

}  // namespace hkt::testing

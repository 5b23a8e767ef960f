#pragma once

#include "hkt/verify/gradcheck.hpp"

namespace hkt::testing {

using grad::Tensor;
using verify::central_difference;
using verify::max_relative_error;
using verify::relative_error;

}  // namespace hkt::testing

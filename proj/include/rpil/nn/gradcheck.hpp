#pragma once

#include <cstdint>
#include <string>

#include "rpil/nn/network.hpp"

namespace rpil::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_array;
  std::size_t checked = 0;
  std::size_t nonzero = 0;  // scalars with a non-vanishing analytic gradient
};

/// Relative error with a floor on the denominator so that two vanishing
/// gradients compare as equal.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares backward_batch against central finite differences (step h) for
/// every trainable scalar of the shrunken `variant` on a random 3-sample batch,
/// in double precision. Dropout masks are drawn once and then frozen.
GradCheckReport gradient_check(Variant variant, std::uint64_t seed, LossKind loss = LossKind::kMse, double h = 1e-5);

}  // namespace rpil::nn

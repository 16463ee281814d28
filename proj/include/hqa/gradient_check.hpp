#pragma once

#include <cstdint>
#include <string>

#include "hqa/network.hpp"

namespace hqa {

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::string worst_parameter;  // "name[index]"
};

struct GradientCheckOptions {
  double epsilon = 1e-4;
  std::size_t min_samples = 100;
  std::size_t batch_size = 2;
};

/// Compares backpropagated gradients against central differences on a random
/// batch and random target distributions. Relative error per parameter is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
GradientCheckReport gradient_check(const NetworkSpec& spec, std::uint64_t seed,
                                   const GradientCheckOptions& options = {});

/// Convenience form returning just the maximum relative error.
double gradient_check(const NetworkSpec& spec, std::uint64_t seed, double epsilon);

}  // namespace hqa

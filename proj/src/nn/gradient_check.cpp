#include "hqa/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace hqa {

GradientCheckReport gradient_check(const NetworkSpec& spec, std::uint64_t seed, const GradientCheckOptions& options) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Parameters params = build_network(spec, seed);
  // Non-zero biases so that every code path carries signal.
  std::uniform_real_distribution<double> small(-0.1, 0.1);
  for (auto& t : params)
    if (t.value.rank() == 1)
      for (auto& v : t.value.data()) v = small(rng);

  const std::size_t n = options.batch_size;
  const std::size_t side = static_cast<std::size_t>(spec.input_side);
  Tensor batch({n, 3, side, side});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& v : batch.data()) v = unit(rng);
  Tensor targets({n, 10});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = targets.row(i);
    double s = 0.0;
    for (auto& v : row) s += (v = unit(rng) + 1e-3);
    for (auto& v : row) v /= s;
  }

  const auto analytic = loss_and_gradients(spec, params, batch, targets).gradients;

  // Every tensor contributes at least two samples; the rest are uniform over all scalars.
  std::set<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::uniform_int_distribution<std::size_t> idx(0, params[t].value.size() - 1);
    for (int k = 0; k < 2; ++k) picks.emplace(t, idx(rng));
  }
  const std::size_t total = params.count();
  const std::size_t want = std::min(total, std::max(options.min_samples, picks.size()));
  std::uniform_int_distribution<std::size_t> flat(0, total - 1);
  while (picks.size() < want) {
    std::size_t f = flat(rng);
    std::size_t t = 0;
    while (f >= params[t].value.size()) f -= params[t++].value.size();
    picks.emplace(t, f);
  }

  GradientCheckReport report;
  const double eps = options.epsilon;
  for (const auto& [t, i] : picks) {
    double& w = params[t].value[i];
    const double saved = w;
    w = saved + eps;
    const double up = distribution_mse(forward(spec, params, batch), targets);
    w = saved - eps;
    const double down = distribution_mse(forward(spec, params, batch), targets);
    w = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[t].value[i];
    const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    if (rel > report.max_relative_error || report.worst_parameter.empty()) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      if (rel >= report.max_relative_error) report.worst_parameter = params[t].name + "[" + std::to_string(i) + "]";
    }
    ++report.parameters_checked;
  }
  return report;
}

double gradient_check(const NetworkSpec& spec, std::uint64_t seed, double epsilon) {
  GradientCheckOptions opt;
  opt.epsilon = epsilon;
  return gradient_check(spec, seed, opt).max_relative_error;
}

}  // namespace hqa

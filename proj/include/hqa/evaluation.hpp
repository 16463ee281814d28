#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "hqa/corpus.hpp"

namespace hqa {

struct EvalReport {
  double r_squared = 0.0;
  double mse_avg = 0.0;
  double mse_std = 0.0;
  std::size_t n = 0;
};

/// Predicted vs. true weighted mean and standard deviation of one item.
struct MomentPair {
  double pred_mean = 0.0;
  double pred_std = 0.0;
  double true_mean = 0.0;
  double true_std = 0.0;
};

/// MSE of means, MSE of stds, and R^2 of means against the mean of true means.
/// Throws IdMismatch (empty input), ZeroVariance.
EvalReport eval_moments(std::span<const MomentPair> pairs);

/// Both maps must cover the same ids. Throws IdMismatch, ZeroVariance.
EvalReport eval_metrics(const std::map<std::string, ScoreDistribution>& pred,
                        const std::map<std::string, ScoreDistribution>& truth);

/// Throws LengthMismatch (also for n < 2), ConstantInput.
double pearson_r(std::span<const double> x, std::span<const double> y);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Unequal-variance t-test with Welch–Satterthwaite degrees of freedom.
/// Throws TooFewSamples (n < 2 in either sample, or both variances zero).
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// I_x(a, b) via Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

enum class Attribute { Floors, HasAc, Facade };
const char* to_string(Attribute a) noexcept;
Attribute attribute_from_string(const std::string& name);

struct ScoredImage {
  ImageRecord record;
  double mean = 0.0;
};

struct GroupStat {
  std::string label;
  double mean = 0.0;
  std::size_t count = 0;
};

struct PairTest {
  std::string a, b;
  WelchResult test;
};

struct GroupReport {
  Attribute attribute = Attribute::Floors;
  std::vector<GroupStat> groups;  // fixed label order, empty groups omitted
  std::vector<PairTest> pairs;    // groups with >= 2 members
  std::size_t attributed = 0;
};

/// Floors bucket into 1, 2, 3, >3; has_ac into ac / no_ac; facade by material.
/// Images without the attribute are ignored. Throws InsufficientGroups.
GroupReport attribute_group_report(std::span<const ScoredImage> images, Attribute attribute);

}  // namespace hqa

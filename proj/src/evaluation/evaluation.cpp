#include "hqa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hqa/error.hpp"

namespace hqa {
namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

EvalReport eval_moments(std::span<const MomentPair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::IdMismatch, "no items to evaluate");
  const double n = static_cast<double>(pairs.size());
  double truth_mean = 0.0;
  for (const auto& p : pairs) truth_mean += p.true_mean;
  truth_mean /= n;
  double sse_avg = 0.0, sse_std = 0.0, sst = 0.0;
  for (const auto& p : pairs) {
    sse_avg += (p.pred_mean - p.true_mean) * (p.pred_mean - p.true_mean);
    sse_std += (p.pred_std - p.true_std) * (p.pred_std - p.true_std);
    sst += (truth_mean - p.true_mean) * (truth_mean - p.true_mean);
  }
  if (sst == 0.0) throw Error(ErrorKind::ZeroVariance, "all true means are equal; R^2 is undefined");
  EvalReport r;
  r.n = pairs.size();
  r.mse_avg = sse_avg / n;
  r.mse_std = sse_std / n;
  r.r_squared = 1.0 - sse_avg / sst;
  return r;
}

EvalReport eval_metrics(const std::map<std::string, ScoreDistribution>& pred,
                        const std::map<std::string, ScoreDistribution>& truth) {
  if (pred.size() != truth.size())
    throw Error(ErrorKind::IdMismatch, std::to_string(pred.size()) + " predictions vs " +
                                           std::to_string(truth.size()) + " truths");
  std::vector<MomentPair> pairs;
  pairs.reserve(pred.size());
  auto t = truth.begin();
  for (auto p = pred.begin(); p != pred.end(); ++p, ++t) {
    if (p->first != t->first) throw Error(ErrorKind::IdMismatch, "id '" + p->first + "' vs '" + t->first + "'");
    pairs.push_back({p->second.mean, p->second.std, t->second.mean, t->second.std});
  }
  return eval_moments(pairs);
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "x and y differ in length");
  if (x.size() < 2) throw Error(ErrorKind::LengthMismatch, "need at least two pairs");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::ConstantInput, "correlation with a constant series");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorKind::TooFewSamples, "each sample needs at least two values");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 == 0.0) throw Error(ErrorKind::TooFewSamples, "both samples have zero variance");
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p = r.t == 0.0 ? 1.0 : student_t_two_sided_p(r.t, r.df);
  return r;
}

const char* to_string(Attribute a) noexcept {
  switch (a) {
    case Attribute::Floors: return "floors";
    case Attribute::HasAc: return "has_ac";
    case Attribute::Facade: return "facade";
  }
  return "floors";
}

Attribute attribute_from_string(const std::string& name) {
  if (name == "floors") return Attribute::Floors;
  if (name == "has_ac" || name == "ac") return Attribute::HasAc;
  if (name == "facade") return Attribute::Facade;
  throw Error(ErrorKind::InvalidConfig, "unknown attribute '" + name + "'");
}

GroupReport attribute_group_report(std::span<const ScoredImage> images, Attribute attribute) {
  std::vector<std::string> labels;
  switch (attribute) {
    case Attribute::Floors: labels = {"1", "2", "3", ">3"}; break;
    case Attribute::HasAc: labels = {"no_ac", "ac"}; break;
    case Attribute::Facade:
      for (Facade f : {Facade::CeramicTile, Facade::Cement, Facade::Paint, Facade::Raw}) labels.emplace_back(to_string(f));
      break;
  }
  std::vector<std::vector<double>> members(labels.size());
  GroupReport report;
  report.attribute = attribute;
  for (const auto& img : images) {
    int g = -1;
    const auto& r = img.record;
    if (attribute == Attribute::Floors && r.floors) g = std::min(*r.floors, 4) - 1;
    if (attribute == Attribute::HasAc && r.has_ac) g = *r.has_ac ? 1 : 0;
    if (attribute == Attribute::Facade && r.facade) g = static_cast<int>(*r.facade);
    if (g < 0) continue;
    members[g].push_back(img.mean);
    ++report.attributed;
  }
  std::vector<std::size_t> testable;
  for (std::size_t g = 0; g < labels.size(); ++g) {
    if (members[g].empty()) continue;
    report.groups.push_back({labels[g], mean_of(members[g]), members[g].size()});
    if (members[g].size() >= 2) testable.push_back(g);
  }
  if (testable.size() < 2)
    throw Error(ErrorKind::InsufficientGroups, std::string(to_string(attribute)) +
                                                   ": fewer than two groups with at least two images");
  for (std::size_t i = 0; i < testable.size(); ++i)
    for (std::size_t j = i + 1; j < testable.size(); ++j) {
      const auto gi = testable[i], gj = testable[j];
      try {
        report.pairs.push_back({labels[gi], labels[gj], welch_t_test(members[gi], members[gj])});
      } catch (const Error&) {
        // both groups constant: no test statistic
      }
    }
  return report;
}

}  // namespace hqa

#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "hqa/error.hpp"
#include "hqa/evaluation.hpp"
#include "hqa/synthetic.hpp"
#include "support.hpp"

using namespace hqa;

namespace {

ScoreDistribution dist_with_mean(double mean, double std) {
  ScoreDistribution d;
  d.mean = mean;
  d.std = std;
  return d;
}

std::vector<MomentPair> random_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1.0, 10.0), s(0.0, 2.0);
  std::vector<MomentPair> out(n);
  for (auto& m : out) m = {u(rng), s(rng), u(rng), s(rng)};
  return out;
}

// Textbook two-sample Welch statistic with Boost's Student t tail.
WelchResult welch_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  auto moments = [](const std::vector<double>& x) {
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair{m, ss / (x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double qa = va / a.size(), qb = vb / b.size();
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(qa + qb);
  r.df = (qa + qb) * (qa + qb) / (qa * qa / (a.size() - 1) + qb * qb / (b.size() - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

}  // namespace

TEST(Metrics, PerfectFit) {
  std::map<std::string, ScoreDistribution> truth{{"a", dist_with_mean(2, 1)}, {"b", dist_with_mean(5, 0.5)},
                                                 {"c", dist_with_mean(9, 0.2)}};
  const auto r = eval_metrics(truth, truth);
  EXPECT_EQ(r.r_squared, 1.0);
  EXPECT_EQ(r.mse_avg, 0.0);
  EXPECT_EQ(r.mse_std, 0.0);
  EXPECT_EQ(r.n, 3u);
}

TEST(Metrics, MeanPredictorScoresZero) {
  std::map<std::string, ScoreDistribution> truth{{"a", dist_with_mean(1, 0)}, {"b", dist_with_mean(2, 0)},
                                                 {"c", dist_with_mean(6, 0)}};
  std::map<std::string, ScoreDistribution> pred;
  for (const auto& [k, v] : truth) pred[k] = dist_with_mean(3.0, 0);
  EXPECT_NEAR(eval_metrics(pred, truth).r_squared, 0.0, 1e-12);
}

TEST(Metrics, HandCase) {
  std::map<std::string, ScoreDistribution> truth{{"a", dist_with_mean(1, 0)}, {"b", dist_with_mean(2, 0)},
                                                 {"c", dist_with_mean(3, 0)}};
  auto pred = truth;
  pred["c"] = dist_with_mean(4, 0);
  const auto r = eval_metrics(pred, truth);
  EXPECT_NEAR(r.mse_avg, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.r_squared, 0.5, 1e-12);
}

TEST(Metrics, AlgebraicIdentityProperty) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto pairs = random_pairs(2 + seed, seed);
    const auto r = eval_moments(pairs);
    double mean = 0;
    for (const auto& m : pairs) mean += m.true_mean;
    mean /= pairs.size();
    double ss = 0, se = 0, sd = 0;
    for (const auto& m : pairs) {
      ss += (m.true_mean - mean) * (m.true_mean - mean);
      se += (m.pred_mean - m.true_mean) * (m.pred_mean - m.true_mean);
      sd += (m.pred_std - m.true_std) * (m.pred_std - m.true_std);
    }
    EXPECT_NEAR(r.mse_avg, se / pairs.size(), 1e-12);
    EXPECT_NEAR(r.mse_std, sd / pairs.size(), 1e-12);
    EXPECT_NEAR(r.r_squared, 1.0 - r.mse_avg * pairs.size() / ss, 1e-12);
  }
}

TEST(Metrics, Errors) {
  std::map<std::string, ScoreDistribution> a{{"a", dist_with_mean(1, 0)}, {"b", dist_with_mean(2, 0)}};
  std::map<std::string, ScoreDistribution> b{{"a", dist_with_mean(1, 0)}, {"c", dist_with_mean(2, 0)}};
  std::map<std::string, ScoreDistribution> flat{{"a", dist_with_mean(4, 0)}, {"b", dist_with_mean(4, 0)}};
  auto kind = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoFailure;
  };
  EXPECT_EQ(kind([&] { eval_metrics(a, b); }), ErrorKind::IdMismatch);
  EXPECT_EQ(kind([&] { eval_metrics(a, flat); }), ErrorKind::ZeroVariance);
  EXPECT_EQ(kind([&] { eval_metrics({}, {}); }), ErrorKind::IdMismatch);
}

TEST(Pearson, Cases) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_NEAR(pearson_r(x, std::vector<double>{2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(pearson_r(x, std::vector<double>{-1, -2, -3}), -1.0, 1e-12);
  EXPECT_NEAR(pearson_r(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-12);
  EXPECT_THROW(pearson_r(x, std::vector<double>{1, 1, 1}), Error);
  EXPECT_THROW(pearson_r(x, std::vector<double>{1, 2}), Error);
}

TEST(Pearson, AffineInvarianceProperty) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(30), y(30), xt(30), yt(30);
    const double a = 0.1 + std::abs(n(rng)) * 5, b = n(rng) * 10, c = 0.1 + std::abs(n(rng)), d = n(rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = n(rng);
      y[i] = 0.5 * x[i] + n(rng);
      xt[i] = a * x[i] + b;
      yt[i] = c * y[i] + d;
    }
    EXPECT_NEAR(pearson_r(x, y), pearson_r(xt, yt), 1e-12);
  }
}

TEST(Welch, IdenticalSamples) {
  const std::vector<double> a{1, 2, 3, 4};
  const auto r = welch_t_test(a, a);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Welch, LargeShift) {
  const std::vector<double> a{1, 2, 3}, b{101, 102, 103};
  const auto r = welch_t_test(a, b);
  EXPECT_LT(r.p, 0.001);
  const auto oracle = welch_oracle(a, b);
  EXPECT_NEAR(r.t, oracle.t, 1e-12);
  EXPECT_NEAR(r.df, oracle.df, 1e-12);
  EXPECT_NEAR(r.p, oracle.p, 1e-8 * std::max(1.0, oracle.p) + 1e-300);
}

TEST(Welch, SwapNegatesTKeepsP) {
  const std::vector<double> a{1.0, 2.5, 3.1, 4.4}, b{2.0, 2.2, 5.9};
  const auto ab = welch_t_test(a, b);
  const auto ba = welch_t_test(b, a);
  EXPECT_EQ(ab.t, -ba.t);
  EXPECT_EQ(ab.p, ba.p);
}

TEST(Welch, AgreesWithOracleOnRandomSamples) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int> size(2, 25);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(size(rng)), b(size(rng));
    const double shift = n(rng);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng) * 2 + shift;
    const auto r = welch_t_test(a, b);
    const auto o = welch_oracle(a, b);
    EXPECT_NEAR(r.t, o.t, 1e-10 * std::max(1.0, std::abs(o.t)));
    EXPECT_NEAR(r.p, o.p, 1e-8);
  }
}

TEST(Welch, TooFewSamples) {
  EXPECT_THROW(welch_t_test(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(welch_t_test(std::vector<double>{3, 3}, std::vector<double>{3, 3}), Error);
}

TEST(IncompleteBeta, AgreesWithBoost) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ab(0.05, 60.0), x(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double a = ab(rng), b = ab(rng), xv = x(rng);
    EXPECT_NEAR(regularized_incomplete_beta(a, b, xv), boost::math::ibeta(a, b, xv), 1e-10)
        << a << " " << b << " " << xv;
  }
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 0.0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 1.0), 1.0);
}

TEST(IncompleteBeta, StudentTail) {
  for (double df : {1.0, 2.5, 10.0, 100.0})
    for (double t : {0.1, 1.0, 2.0, 5.0}) {
      boost::math::students_t dist(df);
      EXPECT_NEAR(student_t_two_sided_p(t, df), 2.0 * boost::math::cdf(boost::math::complement(dist, t)), 1e-10);
    }
}

class SyntheticGroups : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticConfig cfg;
    cfg.n_images = 2000;
    cfg.side = 4;
    synth = new SyntheticCorpus(generate_synthetic_corpus(cfg));
  }
  static void TearDownTestSuite() { delete synth; }

  static std::vector<ScoredImage> scored() {
    Corpus c;
    load_synthetic_corpus(c, *synth);
    std::vector<ScoredImage> out;
    for (const auto& r : synth->images) out.push_back({r, c.distribution_of(r.image_id).mean});
    return out;
  }

  static SyntheticCorpus* synth;
};
SyntheticCorpus* SyntheticGroups::synth = nullptr;

TEST_F(SyntheticGroups, FloorBucketsIncrease) {
  const auto report = attribute_group_report(scored(), Attribute::Floors);
  ASSERT_EQ(report.groups.size(), 4u);
  EXPECT_EQ(report.groups[0].label, "1");
  EXPECT_EQ(report.groups[3].label, ">3");
  for (std::size_t i = 1; i < report.groups.size(); ++i) EXPECT_GT(report.groups[i].mean, report.groups[i - 1].mean);
  EXPECT_EQ(report.pairs.size(), 6u);
}

TEST_F(SyntheticGroups, AirConditioningRaisesMean) {
  const auto report = attribute_group_report(scored(), Attribute::HasAc);
  std::map<std::string, double> means;
  for (const auto& g : report.groups) means[g.label] = g.mean;
  ASSERT_TRUE(means.contains("ac") && means.contains("no_ac"));
  EXPECT_GT(means["ac"], means["no_ac"]);
  ASSERT_EQ(report.pairs.size(), 1u);
  EXPECT_LT(report.pairs[0].test.p, 1e-6);
}

TEST(Groups, SingleGroupIsInsufficient) {
  std::vector<ScoredImage> imgs;
  for (int i = 0; i < 5; ++i) {
    auto r = hqa::testing::make_image("i" + std::to_string(i));
    r.has_ac = true;
    imgs.push_back({r, 5.0 + i});
  }
  try {
    attribute_group_report(imgs, Attribute::HasAc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientGroups);
  }
}

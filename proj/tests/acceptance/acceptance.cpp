// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hqa/checkpoint.hpp"
#include "hqa/error.hpp"
#include "hqa/evaluation.hpp"
#include "hqa/geostat.hpp"
#include "hqa/gradient_check.hpp"
#include "hqa/records_io.hpp"
#include "hqa/service.hpp"
#include "hqa/synthetic.hpp"
#include "hqa/training.hpp"

using namespace hqa;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::printf("%s %d %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double pairwise_gini(const std::vector<double>& x) {
  double diff = 0, sum = 0;
  for (double a : x) {
    sum += a;
    for (double b : x) diff += std::abs(a - b);
  }
  return diff / (2.0 * static_cast<double>(x.size()) * sum);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

struct Dataset {
  SyntheticCorpus synth;
  std::unique_ptr<Corpus> corpus = std::make_unique<Corpus>();
  std::map<std::string, Raster> rasters;

  explicit Dataset(const SyntheticConfig& cfg) : synth(generate_synthetic_corpus(cfg)) {
    load_synthetic_corpus(*corpus, synth);
    for (std::size_t i = 0; i < synth.images.size(); ++i) rasters[synth.images[i].image_id] = synth.rasters[i];
  }
  RasterSource source() const {
    return [this](const ImageRecord& r) { return rasters.at(r.image_id); };
  }
};

std::vector<MomentPair> moment_pairs(const Dataset& d, const std::vector<Prediction>& preds) {
  std::vector<MomentPair> out;
  for (const auto& p : preds) {
    const auto truth = d.corpus->distribution_of(p.image_id);
    out.push_back({p.distribution.mean, p.distribution.std, truth.mean, truth.std});
  }
  return out;
}

// Shared state for the learning-signal and aggregation criteria.
struct LearningRun {
  double untrained_test_r2 = 0, trained_test_r2 = 0, image_r2 = 0, county_r2 = 0;
  std::size_t test_n = 0, counties = 0;
};

LearningRun learning_run() {
  SyntheticConfig sc;
  sc.seed = 1;
  sc.n_images = 500;
  sc.raters_per_image = 15;
  sc.side = 64;
  Dataset data(sc);
  const auto spec = NetworkSpec::desk();
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.epochs = 30;

  const auto result = train(*data.corpus, cfg, spec, data.source());
  const auto initial = build_network(spec, derive_seed(cfg.seed, 1));
  LearningRun run;
  run.test_n = result.split.test.size();
  run.untrained_test_r2 =
      eval_moments(moment_pairs(data, predict_corpus(spec, initial, *data.corpus, result.split.test, 32, data.source())))
          .r_squared;
  run.trained_test_r2 =
      eval_moments(
          moment_pairs(data, predict_corpus(spec, result.params, *data.corpus, result.split.test, 32, data.source())))
          .r_squared;

  std::vector<std::string> all;
  for (const auto& r : data.synth.images) all.push_back(r.image_id);
  const auto preds = predict_corpus(spec, result.params, *data.corpus, all, 32, data.source());
  const auto pairs = moment_pairs(data, preds);
  run.image_r2 = eval_moments(pairs).r_squared;

  std::map<std::string, std::pair<MomentPair, int>> by_county;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& [sum, n] = by_county[data.corpus->image(preds[i].image_id).geo.county_code];
    sum.pred_mean += pairs[i].pred_mean;
    sum.pred_std += pairs[i].pred_std;
    sum.true_mean += pairs[i].true_mean;
    sum.true_std += pairs[i].true_std;
    ++n;
  }
  std::vector<MomentPair> county;
  for (const auto& [code, acc] : by_county) {
    const double n = acc.second;
    county.push_back({acc.first.pred_mean / n, acc.first.pred_std / n, acc.first.true_mean / n, acc.first.true_std / n});
  }
  run.counties = county.size();
  run.county_r2 = eval_moments(county).r_squared;
  return run;
}

}  // namespace

int main() {
  report(1, "gradient correctness", [] {
    const auto start = std::chrono::steady_clock::now();
    auto spec = NetworkSpec::tiny();
    for (auto& b : spec.blocks) b = {1, 4};
    const auto r = gradient_check(spec, 7);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return Verdict{r.max_relative_error < 1e-3 && secs < 60.0,
                   "max_rel_err=" + fmt("%.3g", r.max_relative_error) + " over " +
                       std::to_string(r.parameters_checked) + " entries, " + fmt("%.2fs", secs)};
  });

  report(2, "loss oracle equivalence", [] {
    SyntheticConfig sc;
    sc.n_images = 120;
    Dataset data(sc);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr0 = 1e-3;
    double worst = 0;
    int batches = 0;
    const auto observer = [&](const BatchRecord& b) {
      const Tensor pred = *b.predictions;
      const Tensor target = *b.targets;
      const std::size_t n = pred.dim(0);
      double outer = 0;
      for (int j = 0; j < 10; ++j) {
        double inner = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = pred.row(i)[j] - target.row(i)[j];
          inner += d * d;
        }
        outer += inner / static_cast<double>(n);
      }
      worst = std::max(worst, std::abs(outer / 10.0 - b.loss));
      ++batches;
    };
    train(*data.corpus, cfg, NetworkSpec::desk(), data.source(), observer);
    return Verdict{batches > 0 && worst <= 1e-10,
                   std::to_string(batches) + " batches, max |diff|=" + fmt("%.3g", worst)};
  });

  LearningRun run;
  bool run_ok = false;
  report(3, "learning signal", [&] {
    run = learning_run();
    run_ok = true;
    return Verdict{run.trained_test_r2 >= 0.5 && run.trained_test_r2 > run.untrained_test_r2,
                   "test R2=" + fmt("%.4f", run.trained_test_r2) + " (n=" + std::to_string(run.test_n) +
                       "), untrained R2=" + fmt("%.4f", run.untrained_test_r2)};
  });

  report(4, "aggregation improves fit", [&] {
    if (!run_ok) return Verdict{false, "learning run unavailable"};
    return Verdict{run.counties >= 20 && run.county_r2 >= run.image_r2,
                   "county R2=" + fmt("%.4f", run.county_r2) + " over " + std::to_string(run.counties) +
                       " counties, image R2=" + fmt("%.4f", run.image_r2)};
  });

  report(5, "gini oracle", [] {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> size(1, 200);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::bernoulli_distribution zero(0.2);
    double worst = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<double> x(size(rng));
      for (auto& v : x) v = zero(rng) ? 0.0 : u(rng);
      x[0] += 1.0;
      worst = std::max(worst, std::abs(gini(x) - pairwise_gini(x)));
    }
    const double a = gini(std::vector<double>{1, 2, 3, 4});
    const double b = gini(std::vector<double>{0, 0, 0, 1});
    const bool fixed = std::abs(a - 0.25) <= 1e-12 && std::abs(b - 0.75) <= 1e-12;
    return Verdict{worst <= 1e-12 && fixed, "max |diff| over 1000 vectors=" + fmt("%.3g", worst) +
                                                ", (1,2,3,4)=" + fmt("%.15g", a) + ", (0,0,0,1)=" + fmt("%.15g", b)};
  });

  report(6, "weighted inequality direction", [] {
    SyntheticConfig sc;
    sc.n_images = 500;
    sc.side = 16;
    Dataset data(sc);
    std::vector<GeoScore> scores;
    for (const auto& r : data.synth.images) scores.push_back({r.geo, data.corpus->distribution_of(r.image_id).mean});
    std::map<std::string, double> area;
    for (const auto& c : data.synth.counties) area[c.county_code] = c.area_per_capita;
    std::vector<CountyAreaQuality> rows, flat;
    for (const auto& agg : aggregate_regions(scores, RegionLevel::County)) {
      rows.push_back({agg.county_code, area.at(agg.county_code), agg.mean_quality});
      flat.push_back({agg.county_code, area.at(agg.county_code), 6.5});
    }
    const auto r = weighted_inequality_report(rows);
    const auto f = weighted_inequality_report(flat);
    const double gap = std::abs(f.gini_weighted - f.gini_area);
    return Verdict{r.gini_weighted > r.gini_area && gap <= 1e-12,
                   std::to_string(r.n_counties) + " counties: gini_area=" + fmt("%.4f", r.gini_area) +
                       " gini_weighted=" + fmt("%.4f", r.gini_weighted) + "; constant quality |diff|=" +
                       fmt("%.3g", gap)};
  });

  report(7, "metrics identities", [] {
    auto dist = [](double m, double s) {
      ScoreDistribution d;
      d.mean = m;
      d.std = s;
      return d;
    };
    std::map<std::string, ScoreDistribution> truth{{"a", dist(1, 0.5)}, {"b", dist(2, 1.0)}, {"c", dist(3, 0.2)}};
    const auto perfect = eval_metrics(truth, truth);
    std::map<std::string, ScoreDistribution> mean_pred;
    for (const auto& [k, v] : truth) mean_pred[k] = dist(2.0, v.std);
    const auto mean_r = eval_metrics(mean_pred, truth);
    auto hand_pred = truth;
    hand_pred["c"] = dist(4, 0.2);
    const auto hand = eval_metrics(hand_pred, truth);
    const bool ok = perfect.r_squared == 1.0 && perfect.mse_avg == 0.0 && std::abs(mean_r.r_squared) <= 1e-12 &&
                    std::abs(hand.mse_avg - 1.0 / 3.0) <= 1e-12 && std::abs(hand.r_squared - 0.5) <= 1e-12;
    return Verdict{ok, "perfect R2=" + fmt("%.15g", perfect.r_squared) + ", mean predictor R2=" +
                           fmt("%.3g", mean_r.r_squared) + ", hand case mse_avg=" + fmt("%.15g", hand.mse_avg) +
                           " R2=" + fmt("%.15g", hand.r_squared)};
  });

  report(8, "statistical kernels", [] {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> pos{-3, -1, 1, 3, 5}, neg{10, 7.5, 5, 2.5, 0};
    const double rp = pearson_r(x, pos), rn = pearson_r(x, neg);
    const auto same = welch_t_test(x, x);
    const auto shift = welch_t_test(std::vector<double>{1, 2, 3}, std::vector<double>{101, 102, 103});
    const bool ok = std::abs(rp - 1.0) <= 1e-12 && std::abs(rn + 1.0) <= 1e-12 && same.t == 0.0 && same.p == 1.0 &&
                    shift.p < 0.001;
    return Verdict{ok, "r=" + fmt("%.15g", rp) + "/" + fmt("%.15g", rn) + ", identical t=" + fmt("%g", same.t) +
                           " p=" + fmt("%g", same.p) + ", shifted p=" + fmt("%.3g", shift.p)};
  });

  report(9, "crowdsourcing pipeline", [] {
    const auto root = fs::temp_directory_path() / ("hqa-acceptance-" + std::to_string(std::random_device{}()));
    fs::create_directories(root / "data");
    struct Cleanup {
      fs::path p;
      ~Cleanup() {
        std::error_code ec;
        fs::remove_all(p, ec);
      }
    } cleanup{root};

    SyntheticConfig sc;
    sc.n_images = 60;
    sc.side = 8;
    sc.raters_per_image = 10;
    write_synthetic_corpus(generate_synthetic_corpus(sc), root / "data");
    ServiceConfig cfg;
    cfg.data_dir = root / "data";
    ScoringService service(cfg);

    bool flips = true;
    for (int i = 0; i < 5; ++i) {
      const auto t = service.record_ballot("extra" + std::to_string(i), "img00000", 1 + i);
      flips = flips && t.qualified == (t.n_ballots >= 15);
      if (t.n_ballots == 14 && t.qualified) flips = false;
      if (t.n_ballots == 15 && !t.qualified) flips = false;
    }
    const bool reached = service.corpus().ballot_count("img00000") == 15;

    auto rejected = [&](const std::string& rater, int score, ErrorKind want) {
      try {
        service.record_ballot(rater, "img00001", score);
      } catch (const Error& e) {
        return e.kind() == want;
      }
      return false;
    };
    service.record_ballot("dupe", "img00001", 5);
    const bool dup = rejected("dupe", 6, ErrorKind::DuplicateRaterImage);
    const bool low = rejected("fresh", 0, ErrorKind::ScoreOutOfRange);
    const bool high = rejected("fresh", 11, ErrorKind::ScoreOutOfRange);

    service.export_snapshot(root / "export");
    Corpus replay(root / "export");
    load_data_dir(replay, root / "export", false);
    std::size_t mismatches = 0;
    for (const auto& img : service.corpus().images()) {
      const auto a = service.distribution(img.image_id);
      const auto b = replay.distribution_of(img.image_id);
      bool same = a.n_ballots == b.n_ballots && a.qualified == b.qualified && same_bits(a.mean, b.mean) &&
                  same_bits(a.std, b.std);
      for (int j = 0; j < kScoreBins; ++j) same = same && same_bits(a.p[j], b.p[j]);
      if (!same) ++mismatches;
    }
    const bool ok = flips && reached && dup && low && high && mismatches == 0;
    return Verdict{ok, "replayed " + std::to_string(service.corpus().ballot_total()) + " ballots, " +
                           std::to_string(mismatches) + " mismatched distributions; qualified flip at 15 " +
                           (flips && reached ? "ok" : "wrong") + "; duplicate " + (dup ? "rejected" : "accepted") +
                           "; scores 0/11 " + (low && high ? "rejected" : "accepted")};
  });

  report(10, "checkpoint round-trip", [] {
    const auto spec = NetworkSpec::desk();
    const auto params = build_network(spec, 2024);
    const auto bytes = encode_checkpoint(spec, params);
    const auto loaded = decode_checkpoint(bytes);
    bool weights = loaded.params.size() == params.size() && loaded.spec == spec;
    for (std::size_t i = 0; weights && i < params.size(); ++i)
      weights = loaded.params[i].value.shape() == params[i].value.shape() &&
                std::memcmp(loaded.params[i].value.ptr(), params[i].value.ptr(),
                            params[i].value.size() * sizeof(double)) == 0;
    Tensor batch({4, 3, 64, 64});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& v : batch.data()) v = u(rng);
    const auto before = forward(spec, params, batch);
    const auto after = forward(loaded.spec, loaded.params, batch);
    const bool outputs = std::memcmp(before.ptr(), after.ptr(), before.size() * sizeof(double)) == 0;
    return Verdict{weights && outputs, std::to_string(params.count()) + " weights " +
                                           (weights ? "bitwise equal" : "differ") + ", forward outputs " +
                                           (outputs ? "bitwise equal" : "differ") + ", " +
                                           std::to_string(bytes.size()) + " bytes"};
  });

  std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
  return failures == 0 ? 0 : 1;
}

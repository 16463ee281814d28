#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "hqa/corpus.hpp"
#include "hqa/error.hpp"
#include "hqa/raster.hpp"
#include "hqa/records_io.hpp"
#include "hqa/synthetic.hpp"
#include "support.hpp"

using namespace hqa;
using hqa::testing::make_ballot;
using hqa::testing::make_image;
using hqa::testing::TempDir;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an hqa::Error";
  return ErrorKind::IoFailure;
}

double sample_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(CorpusIngest, ThreeValidRows) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a"), make_image("b"), make_image("c")};
  c.ingest(rows, false);
  EXPECT_EQ(c.size(), 3u);
}

TEST(CorpusIngest, DuplicateIdNamesTheId) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("dup"), make_image("dup")};
  try {
    c.ingest(rows, false);
    FAIL() << "expected DuplicateImageId";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DuplicateImageId);
    EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos);
  }
  EXPECT_EQ(c.size(), 0u);
}

TEST(CorpusIngest, VillageWithoutTownship) {
  Corpus c;
  auto r = make_image("a");
  r.geo.township.clear();
  std::vector<ImageRecord> rows{r};
  EXPECT_EQ(kind_of([&] { c.ingest(rows, false); }), ErrorKind::MalformedGeoPath);
}

TEST(CorpusIngest, IsAllOrNothing) {
  Corpus c;
  auto bad = make_image("z");
  bad.geo.county.clear();
  std::vector<ImageRecord> rows{make_image("a"), bad};
  EXPECT_THROW(c.ingest(rows, false), Error);
  EXPECT_EQ(c.size(), 0u);
  EXPECT_FALSE(c.contains("a"));
}

TEST(CorpusIngest, MissingRasterRejectedWhenVerifying) {
  TempDir dir("ingest");
  Corpus c(dir.path());
  std::vector<ImageRecord> rows{make_image("a")};
  EXPECT_EQ(kind_of([&] { c.ingest(rows, true); }), ErrorKind::UnreadableRaster);
}

TEST(Ballots, FirstBallotIsOneHot) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a")};
  c.ingest(rows, false);
  const auto d = c.submit_ballot(make_ballot("a", "r1", 7));
  EXPECT_EQ(d.n_ballots, 1);
  for (int j = 0; j < kScoreBins; ++j) EXPECT_EQ(d.p[j], j == 6 ? 1.0 : 0.0);
}

TEST(Ballots, OutOfRangeAndDuplicates) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a")};
  c.ingest(rows, false);
  EXPECT_EQ(kind_of([&] { c.submit_ballot(make_ballot("a", "r1", 11)); }), ErrorKind::ScoreOutOfRange);
  EXPECT_EQ(kind_of([&] { c.submit_ballot(make_ballot("a", "r1", 0)); }), ErrorKind::ScoreOutOfRange);
  c.submit_ballot(make_ballot("a", "r1", 4));
  EXPECT_EQ(kind_of([&] { c.submit_ballot(make_ballot("a", "r1", 5)); }), ErrorKind::DuplicateRaterImage);
  EXPECT_EQ(kind_of([&] { c.submit_ballot(make_ballot("nope", "r1", 5)); }), ErrorKind::UnknownImage);
  EXPECT_EQ(c.ballot_count("a"), 1);
}

TEST(Distribution, HandTally) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a")};
  c.ingest(rows, false);
  int r = 0;
  for (int s : {5, 5, 6, 6}) c.submit_ballot(make_ballot("a", "r" + std::to_string(r++), s));
  const auto d = c.distribution_of("a");
  EXPECT_DOUBLE_EQ(d.p[4], 0.5);
  EXPECT_DOUBLE_EQ(d.p[5], 0.5);
  EXPECT_NEAR(d.mean, 5.5, 1e-12);
  EXPECT_NEAR(d.std, 0.5, 1e-12);
  EXPECT_FALSE(d.qualified);
}

TEST(Distribution, QualifiedFlipsAtFifteen) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a")};
  c.ingest(rows, false);
  for (int i = 0; i < 14; ++i) EXPECT_FALSE(c.submit_ballot(make_ballot("a", "r" + std::to_string(i), 8)).qualified);
  const auto d = c.submit_ballot(make_ballot("a", "r14", 8));
  EXPECT_TRUE(d.qualified);
  EXPECT_DOUBLE_EQ(d.mean, 8.0);
  EXPECT_DOUBLE_EQ(d.std, 0.0);
}

TEST(Distribution, NoBallots) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a")};
  c.ingest(rows, false);
  EXPECT_EQ(kind_of([&] { c.distribution_of("a"); }), ErrorKind::NoBallots);
  EXPECT_EQ(kind_of([&] { c.distribution_of("zz"); }), ErrorKind::UnknownImage);
}

TEST(Distribution, SimplexAndMeanBoundsProperty) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> score(1, 10), count(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    BinCounts counts{};
    const int n = count(rng);
    int lo = 10, hi = 1;
    for (int i = 0; i < n; ++i) {
      const int s = score(rng);
      ++counts[s - 1];
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    const auto d = ScoreDistribution::from_counts(counts);
    EXPECT_NEAR(std::accumulate(d.p.begin(), d.p.end(), 0.0), 1.0, 1e-9);
    EXPECT_EQ(d.n_ballots, n);
    EXPECT_GE(d.mean, lo - 1e-12);
    EXPECT_LE(d.mean, hi + 1e-12);
  }
}

TEST(QualifiedImages, ThresholdFilter) {
  Corpus c;
  std::vector<ImageRecord> rows{make_image("a"), make_image("b"), make_image("c"), make_image("d")};
  c.ingest(rows, false);
  const std::map<std::string, int> want{{"a", 15}, {"b", 14}, {"c", 20}};
  for (const auto& [id, n] : want)
    for (int i = 0; i < n; ++i) c.submit_ballot(make_ballot(id, "r" + std::to_string(i), 1 + i % 10));
  EXPECT_EQ(c.qualified_images(), (std::vector<std::string>{"a", "c"}));
  EXPECT_EQ(c.qualified_images(1), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(QualifiedImages, EmptyCorpus) {
  Corpus c;
  EXPECT_TRUE(c.qualified_images().empty());
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticConfig cfg;
  cfg.n_images = 10;
  cfg.side = 16;
  const auto a = generate_synthetic_corpus(cfg);
  const auto b = generate_synthetic_corpus(cfg);
  EXPECT_EQ(a.rasters, b.rasters);
  EXPECT_EQ(a.ballots, b.ballots);
  EXPECT_EQ(a.images, b.images);
  cfg.seed = 2;
  const auto c = generate_synthetic_corpus(cfg);
  EXPECT_NE(a.ballots, c.ballots);
}

TEST(Synthetic, NoiselessBallotsEqualRoundedLatent) {
  SyntheticConfig cfg;
  cfg.n_images = 50;
  cfg.side = 8;
  cfg.noise_sigma = 0.0;
  const auto s = generate_synthetic_corpus(cfg);
  std::map<std::string, double> latent;
  for (std::size_t i = 0; i < s.images.size(); ++i) latent[s.images[i].image_id] = s.latent_quality[i];
  for (const auto& b : s.ballots) EXPECT_EQ(b.score, static_cast<int>(std::lround(latent.at(b.image_id))));
}

TEST(Synthetic, BallotMeansTrackLatentQuality) {
  SyntheticConfig cfg;
  cfg.n_images = 500;
  cfg.side = 8;
  const auto s = generate_synthetic_corpus(cfg);
  Corpus c;
  load_synthetic_corpus(c, s);
  std::vector<double> means, latent;
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    means.push_back(c.distribution_of(s.images[i].image_id).mean);
    latent.push_back(s.latent_quality[i]);
  }
  const double mean_of_means = std::accumulate(means.begin(), means.end(), 0.0) / means.size();
  const double mean_latent = std::accumulate(latent.begin(), latent.end(), 0.0) / latent.size();
  EXPECT_NEAR(mean_of_means, mean_latent, 0.15);
  EXPECT_GT(sample_pearson(latent, means), 0.9);
}

TEST(Synthetic, BrightnessMonotoneInLatent) {
  SyntheticConfig cfg;
  cfg.n_images = 200;
  cfg.side = 16;
  const auto s = generate_synthetic_corpus(cfg);
  std::vector<double> brightness;
  for (const auto& r : s.rasters)
    brightness.push_back(std::accumulate(r.rgb.begin(), r.rgb.end(), 0.0) / r.rgb.size());
  EXPECT_GT(sample_pearson(s.latent_quality, brightness), 0.9);
}

TEST(Synthetic, InvalidDimensions) {
  SyntheticConfig cfg;
  cfg.n_images = 0;
  EXPECT_EQ(kind_of([&] { generate_synthetic_corpus(cfg); }), ErrorKind::InvalidDimensions);
}

TEST(Raster, PpmAndPngRoundTrip) {
  Raster r{5, 3, {}};
  for (int i = 0; i < 5 * 3 * 3; ++i) r.rgb.push_back(static_cast<std::uint8_t>(i * 7));
  EXPECT_EQ(decode_raster(encode_ppm(r)), r);
  EXPECT_EQ(decode_raster(encode_png(r)), r);
  const std::vector<std::uint8_t> junk{1, 2, 3, 4};
  EXPECT_EQ(kind_of([&] { decode_raster(junk); }), ErrorKind::UnreadableRaster);
}

TEST(Raster, WriteReadByExtension) {
  TempDir dir("raster");
  Raster r{2, 2, {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120}};
  write_raster(dir / "x.png", r);
  write_raster(dir / "x.ppm", r);
  EXPECT_EQ(read_raster(dir / "x.png"), r);
  EXPECT_EQ(read_raster(dir / "x.ppm"), r);
}

TEST(RecordsIo, JsonlRoundTrip) {
  auto r = make_image("a");
  r.floors = 3;
  r.has_ac = true;
  r.facade = Facade::CeramicTile;
  r.area_per_capita = 31.5;
  EXPECT_EQ(image_from_jsonl(image_to_jsonl(r)), r);
  EXPECT_EQ(image_from_jsonl(image_to_jsonl(make_image("b", "C", ""))), make_image("b", "C", ""));
  const auto b = make_ballot("a", "r1", 9);
  EXPECT_EQ(ballot_from_jsonl(ballot_to_jsonl(b)), b);
  EXPECT_EQ(kind_of([] { image_from_jsonl("{not json"); }), ErrorKind::MalformedRecord);
}

TEST(BallotLogRecovery, TornTailIsTruncated) {
  TempDir dir("log");
  const auto path = dir / "ballots.jsonl";
  {
    BallotLog log(path);
    log.append(make_ballot("a", "r1", 3));
    log.append(make_ballot("a", "r2", 4));
  }
  const auto intact = std::filesystem::file_size(path);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "{\"ballot_id\":\"x\",\"image";
  }
  BallotLog reopened(path);
  ASSERT_EQ(reopened.recovered().size(), 2u);
  EXPECT_EQ(reopened.recovered()[1], make_ballot("a", "r2", 4));
  EXPECT_GT(reopened.dropped_tail_bytes(), 0u);
  EXPECT_EQ(std::filesystem::file_size(path), intact);
  reopened.append(make_ballot("a", "r3", 5));
  EXPECT_EQ(read_ballots_jsonl(path).ballots.size(), 3u);
}

TEST(RecordsIo, ReplayReproducesDistributionsBitForBit) {
  SyntheticConfig cfg;
  cfg.n_images = 40;
  cfg.side = 8;
  const auto s = generate_synthetic_corpus(cfg);
  TempDir dir("replay");
  write_synthetic_corpus(s, dir.path());
  Corpus original;
  load_synthetic_corpus(original, s);
  Corpus replayed(dir.path());
  load_data_dir(replayed, dir.path(), true);
  for (const auto& img : s.images) {
    const auto a = original.distribution_of(img.image_id);
    const auto b = replayed.distribution_of(img.image_id);
    EXPECT_EQ(a.p, b.p);
    EXPECT_EQ(std::memcmp(&a.mean, &b.mean, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&a.std, &b.std, sizeof(double)), 0);
  }
}

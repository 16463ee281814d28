#include "hqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "hqa/error.hpp"
#include "hqa/records_io.hpp"

namespace hqa {
namespace {

std::string padded(const char* prefix, int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, value);
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Raster render_house(double quality, int side, std::mt19937_64& rng) {
  const double t = (quality - 1.0) / 9.0;
  const double base = 45.0 + 150.0 * t;
  const int block = std::max(2, static_cast<int>(std::lround(side / 4.0 * (1.0 - 0.8 * t))));
  std::uniform_int_distribution<int> phase(0, block - 1);
  const int ox = phase(rng);
  const int oy = phase(rng);
  std::normal_distribution<double> noise(0.0, 6.0);
  constexpr double amplitude = 25.0;
  constexpr double tint[3] = {10.0, 0.0, -10.0};

  Raster r;
  r.width = r.height = side;
  r.rgb.resize(static_cast<std::size_t>(side) * side * 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool odd = (((x + ox) / block) + ((y + oy) / block)) % 2 != 0;
      const double v = base + (odd ? amplitude : -amplitude);
      for (int c = 0; c < 3; ++c)
        r.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v + tint[c] + noise(rng)), 0L, 255L));
    }
  }
  return r;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.n_images < 1) throw Error(ErrorKind::InvalidDimensions, "n_images must be >= 1");
  if (cfg.raters_per_image < 1) throw Error(ErrorKind::InvalidDimensions, "raters_per_image must be >= 1");
  if (cfg.side < 1) throw Error(ErrorKind::InvalidDimensions, "side must be >= 1");
  if (cfg.counties < 1 || cfg.townships_per_county < 1 || cfg.villages_per_township < 1)
    throw Error(ErrorKind::InvalidDimensions, "geo hierarchy sizes must be >= 1");
  if (!(cfg.noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidDimensions, "noise_sigma must be >= 0");
  if (!(cfg.county_clustering >= 0.0 && cfg.county_clustering <= 1.0))
    throw Error(ErrorKind::InvalidDimensions, "county_clustering must lie in [0,1]");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = cfg.n_images;

  std::vector<double> affluence(cfg.counties);
  for (auto& a : affluence) a = unit(rng);

  // Latent qualities are an i.i.d. uniform sample permuted so that rank
  // follows a county-affluence key.
  std::vector<double> draws(n);
  for (auto& d : draws) d = 1.0 + 9.0 * unit(rng);
  std::sort(draws.begin(), draws.end());
  std::vector<double> key(n);
  for (int i = 0; i < n; ++i)
    key[i] = cfg.county_clustering * affluence[i % cfg.counties] + (1.0 - cfg.county_clustering) * unit(rng);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] < key[b]; });

  SyntheticCorpus out;
  out.latent_quality.resize(n);
  for (int r = 0; r < n; ++r) out.latent_quality[order[r]] = draws[r];

  std::normal_distribution<double> ballot_noise(0.0, cfg.noise_sigma > 0 ? cfg.noise_sigma : 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  out.images.reserve(n);
  out.rasters.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double q = out.latent_quality[i];
    const double t = (q - 1.0) / 9.0;
    const int c = i % cfg.counties;
    const int j = i / cfg.counties;
    const int township = j % cfg.townships_per_county;
    const int village = (j / cfg.townships_per_county) % cfg.villages_per_township;

    ImageRecord rec;
    rec.image_id = padded("img", i, 5);
    rec.geo.province = padded("P", c % 4, 2);
    rec.geo.county = padded("County", c, 3);
    rec.geo.county_code = padded("C", c, 4);
    rec.geo.township = rec.geo.county + "-T" + std::to_string(township);
    rec.geo.village = rec.geo.township + "-V" + std::to_string(village);
    rec.pixels_ref = "rasters/" + rec.image_id + ".ppm";

    rec.floors = 1 + static_cast<int>(std::floor(std::clamp(3.99 * t + 0.6 * gauss(rng), 0.0, 4.99)));
    rec.has_ac = unit(rng) < 0.1 + 0.8 * t;
    const double fs = t + 0.25 * gauss(rng);
    rec.facade = fs > 0.75 ? Facade::CeramicTile : fs > 0.5 ? Facade::Paint : fs > 0.25 ? Facade::Cement : Facade::Raw;
    rec.area_per_capita = std::max(1.0, 20.0 + 30.0 * t + 5.0 * gauss(rng));

    out.rasters.push_back(render_house(q, cfg.side, rng));

    for (int r = 0; r < cfg.raters_per_image; ++r) {
      const double noisy = cfg.noise_sigma > 0 ? q + ballot_noise(rng) : q;
      ScoreBallot b;
      b.image_id = rec.image_id;
      b.rater_id = padded("rater", r, 3);
      b.ballot_id = rec.image_id + "-" + b.rater_id;
      b.score = static_cast<int>(std::clamp(std::lround(noisy), static_cast<long>(kMinScore), static_cast<long>(kMaxScore)));
      b.submitted_at = "2024-01-01T00:00:00Z";
      out.ballots.push_back(std::move(b));
    }
    out.images.push_back(std::move(rec));
  }

  // County tables.
  std::vector<double> sum(cfg.counties, 0.0);
  std::vector<int> cnt(cfg.counties, 0);
  for (int i = 0; i < n; ++i) {
    sum[i % cfg.counties] += out.latent_quality[i];
    ++cnt[i % cfg.counties];
  }
  std::vector<double> sorted_aff = affluence;
  std::sort(sorted_aff.begin(), sorted_aff.end());
  const auto tercile = [&](double a) {
    const auto rank = std::lower_bound(sorted_aff.begin(), sorted_aff.end(), a) - sorted_aff.begin();
    return static_cast<int>(3 * rank / cfg.counties);
  };
  for (int c = 0; c < cfg.counties; ++c) {
    if (cnt[c] == 0) continue;
    SyntheticCounty sc;
    sc.county_code = padded("C", c, 4);
    sc.affluence = affluence[c];
    sc.latent_mean = sum[c] / cnt[c];
    sc.household_income_index = std::clamp(0.05 + 0.08 * (sc.latent_mean - 1.0) + 0.03 * gauss(rng), 0.0, 1.0);
    sc.disposable_income = std::max(0.0, 6000.0 + 1200.0 * sc.latent_mean + 2500.0 * gauss(rng));
    sc.area_per_capita = std::max(1.0, 18.0 + 5.0 * sc.latent_mean + 3.0 * gauss(rng));
    sc.ns_class = affluence[c] >= 0.5 ? "south" : "north";
    const int tc = tercile(affluence[c]);
    sc.ew_class = tc >= 2 ? "east" : tc == 1 ? "central" : "west";
    out.counties.push_back(std::move(sc));
  }
  return out;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "rasters", ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + (dir / "rasters").string());
  for (std::size_t i = 0; i < corpus.images.size(); ++i)
    write_raster(dir / corpus.images[i].pixels_ref, corpus.rasters[i]);
  write_images_jsonl(dir / "images.jsonl", corpus.images);
  write_ballots_jsonl(dir / "ballots.jsonl", corpus.ballots);

  std::ofstream latent(dir / "latent.csv", std::ios::binary | std::ios::trunc);
  latent << "image_id,latent_quality\n";
  for (std::size_t i = 0; i < corpus.images.size(); ++i)
    latent << corpus.images[i].image_id << ',' << fmt_double(corpus.latent_quality[i]) << '\n';

  std::ofstream ind(dir / "indicators.csv", std::ios::binary | std::ios::trunc);
  ind << "county_code,household_income_index,disposable_income,area_per_capita\n";
  std::ofstream cls(dir / "region_classes.csv", std::ios::binary | std::ios::trunc);
  cls << "county_code,ns_class,ew_class\n";
  for (const auto& c : corpus.counties) {
    ind << c.county_code << ',' << fmt_double(c.household_income_index) << ','
        << fmt_double(c.disposable_income) << ',' << fmt_double(c.area_per_capita) << '\n';
    cls << c.county_code << ',' << c.ns_class << ',' << c.ew_class << '\n';
  }
  if (!latent || !ind || !cls) throw Error(ErrorKind::IoFailure, "cannot write tables under " + dir.string());
}

void load_synthetic_corpus(Corpus& corpus, const SyntheticCorpus& synth) {
  corpus.ingest(synth.images, false);
  for (const auto& b : synth.ballots) corpus.submit_ballot(b);
}

}  // namespace hqa

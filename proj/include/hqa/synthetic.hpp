#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hqa/corpus.hpp"
#include "hqa/raster.hpp"

namespace hqa {

struct SyntheticConfig {
  std::uint64_t seed = 1;
  int n_images = 200;
  int raters_per_image = 15;
  int side = 64;
  /// Ballot noise around the latent quality, in score units.
  double noise_sigma = 0.85;
  int counties = 20;
  int townships_per_county = 2;
  int villages_per_township = 3;
  /// 0 scatters latent quality independently of county; 1 sorts it fully by
  /// county affluence. The marginal distribution stays uniform on [1,10].
  double county_clustering = 0.6;
};

/// County-level side tables consistent with the generated images.
struct SyntheticCounty {
  std::string county_code;
  double affluence = 0.0;     // latent rank driver in [0,1]
  double latent_mean = 0.0;   // mean latent quality of member images
  double household_income_index = 0.0;
  double disposable_income = 0.0;
  double area_per_capita = 0.0;
  std::string ns_class;  // north | south
  std::string ew_class;  // east | central | west
};

struct SyntheticCorpus {
  std::vector<ImageRecord> images;
  std::vector<Raster> rasters;          // parallel to images
  std::vector<double> latent_quality;   // parallel to images
  std::vector<ScoreBallot> ballots;
  std::vector<SyntheticCounty> counties;
};

/// Deterministic per seed. Raster brightness and checker frequency rise with
/// latent quality; ballots are round(q + N(0, sigma)) clamped to [1,10].
/// Throws InvalidDimensions.
SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg);

/// Writes rasters/, images.jsonl, ballots.jsonl, latent.csv, indicators.csv
/// and region_classes.csv into dir.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

/// Ingests images (rasters kept in memory are not re-read) and ballots.
/// Pixel refs resolve against base_dir.
void load_synthetic_corpus(Corpus& corpus, const SyntheticCorpus& synth);

}  // namespace hqa

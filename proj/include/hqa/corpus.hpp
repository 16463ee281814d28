#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hqa {

inline constexpr int kScoreBins = 10;
inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 10;
inline constexpr int kQualifiedRaters = 15;

/// Administrative location of an image. Aggregation levels are county,
/// township and village; an empty township means the path stops at county.
struct GeoPath {
  std::string province;
  std::string county;
  std::string township;
  std::string village;
  std::string county_code;

  /// Throws MalformedGeoPath when the hierarchy has gaps.
  void validate() const;

  bool operator==(const GeoPath&) const = default;
};

enum class Facade { CeramicTile, Cement, Paint, Raw };

const char* to_string(Facade f) noexcept;
/// Throws MalformedRecord on an unknown name.
Facade facade_from_string(const std::string& name);

struct ImageRecord {
  std::string image_id;
  GeoPath geo;
  std::string pixels_ref;
  std::optional<int> floors;
  std::optional<bool> has_ac;
  std::optional<Facade> facade;
  std::optional<double> area_per_capita;

  bool operator==(const ImageRecord&) const = default;
};

struct ScoreBallot {
  std::string ballot_id;
  std::string image_id;
  std::string rater_id;
  int score = 0;
  std::string submitted_at;  // ISO-8601 UTC

  bool operator==(const ScoreBallot&) const = default;
};

using BinCounts = std::array<int, kScoreBins>;

/// Ten-bin score distribution; index 0 holds score 1.
struct ScoreDistribution {
  std::array<double, kScoreBins> p{};
  int n_ballots = 0;
  double mean = 0.0;
  double std = 0.0;
  bool qualified = false;

  /// Ballot-frequency distribution. Throws NoBallots on an all-zero tally.
  static ScoreDistribution from_counts(const BinCounts& counts,
                                       int min_raters = kQualifiedRaters);
  /// Distribution with mean/std derived from given probabilities (predictions).
  static ScoreDistribution from_probabilities(std::span<const double> p);
};

/// Weighted mean and standard deviation of a 10-bin distribution.
double distribution_mean(std::span<const double> p);
double distribution_std(std::span<const double> p, double mean);

/// In-memory crowdsourcing corpus. Ballot submission is serialized per
/// corpus; reads take a shared lock and see a consistent state.
class Corpus {
 public:
  explicit Corpus(std::filesystem::path base_dir = {});

  Corpus(const Corpus&) = delete;
  Corpus& operator=(const Corpus&) = delete;

  /// Adds all rows or none. Throws DuplicateImageId, MalformedGeoPath,
  /// UnreadableRaster (only when verify_rasters is set).
  void ingest(std::span<const ImageRecord> rows, bool verify_rasters = true);

  /// Accepts one ballot and returns the updated tally of its image.
  /// Throws UnknownImage, ScoreOutOfRange, DuplicateRaterImage.
  ScoreDistribution submit_ballot(const ScoreBallot& ballot);

  /// Throws UnknownImage, NoBallots.
  ScoreDistribution distribution_of(const std::string& image_id) const;

  /// Images with at least min_raters ballots, sorted by id.
  std::vector<std::string> qualified_images(int min_raters = kQualifiedRaters) const;

  std::size_t size() const;
  /// Number of accepted ballots.
  std::size_t ballot_total() const;
  bool contains(const std::string& image_id) const;
  int ballot_count(const std::string& image_id) const;
  bool has_scored(const std::string& rater_id, const std::string& image_id) const;

  /// Throws UnknownImage.
  ImageRecord image(const std::string& image_id) const;
  /// All records sorted by image id.
  std::vector<ImageRecord> images() const;
  /// Accepted ballots in acceptance order.
  std::vector<ScoreBallot> ballots() const;
  /// Ballot counts for every image, keyed by id.
  std::map<std::string, int> ballot_counts() const;

  struct Snapshot {
    std::vector<ImageRecord> images;
    std::vector<ScoreBallot> ballots;
  };
  /// Images and ballots taken under one lock: the ballots are a prefix of the log.
  Snapshot snapshot() const;

  /// Resolves a pixels_ref against the corpus base directory.
  std::filesystem::path resolve(const std::string& pixels_ref) const;
  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

 private:
  struct Entry {
    ImageRecord record;
    BinCounts counts{};
    int n = 0;
  };

  std::filesystem::path base_dir_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Entry> entries_;
  std::unordered_set<std::string> rater_image_;
  std::vector<ScoreBallot> log_;
};

}  // namespace hqa

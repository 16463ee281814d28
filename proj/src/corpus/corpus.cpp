#include "hqa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "hqa/error.hpp"
#include "hqa/raster.hpp"

namespace hqa {
namespace {

std::string pair_key(const std::string& rater, const std::string& image) {
  std::string key = rater;
  key.push_back('\x1f');
  key += image;
  return key;
}

}  // namespace

void GeoPath::validate() const {
  if (province.empty()) throw Error(ErrorKind::MalformedGeoPath, "province is empty");
  if (county.empty()) throw Error(ErrorKind::MalformedGeoPath, "county is empty");
  if (!village.empty() && township.empty())
    throw Error(ErrorKind::MalformedGeoPath, "village '" + village + "' set without a township");
  if (!township.empty() && village.empty())
    throw Error(ErrorKind::MalformedGeoPath, "township '" + township + "' set without a village");
}

const char* to_string(Facade f) noexcept {
  switch (f) {
    case Facade::CeramicTile: return "ceramic_tile";
    case Facade::Cement: return "cement";
    case Facade::Paint: return "paint";
    case Facade::Raw: return "raw";
  }
  return "raw";
}

Facade facade_from_string(const std::string& name) {
  if (name == "ceramic_tile") return Facade::CeramicTile;
  if (name == "cement") return Facade::Cement;
  if (name == "paint") return Facade::Paint;
  if (name == "raw") return Facade::Raw;
  throw Error(ErrorKind::MalformedRecord, "unknown facade '" + name + "'");
}

double distribution_mean(std::span<const double> p) {
  double m = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) m += static_cast<double>(j + 1) * p[j];
  return m;
}

double distribution_std(std::span<const double> p, double mean) {
  double v = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double d = static_cast<double>(j + 1) - mean;
    v += p[j] * d * d;
  }
  return std::sqrt(v);
}

ScoreDistribution ScoreDistribution::from_counts(const BinCounts& counts, int min_raters) {
  int n = 0;
  for (int c : counts) n += c;
  if (n <= 0) throw Error(ErrorKind::NoBallots, "tally is empty");
  ScoreDistribution d;
  for (int j = 0; j < kScoreBins; ++j) d.p[j] = static_cast<double>(counts[j]) / n;
  d.n_ballots = n;
  d.mean = distribution_mean(d.p);
  d.std = distribution_std(d.p, d.mean);
  d.qualified = n >= min_raters;
  return d;
}

ScoreDistribution ScoreDistribution::from_probabilities(std::span<const double> p) {
  if (p.size() != kScoreBins) throw Error(ErrorKind::ShapeMismatch, "distribution needs 10 bins");
  ScoreDistribution d;
  std::copy(p.begin(), p.end(), d.p.begin());
  d.mean = distribution_mean(d.p);
  d.std = distribution_std(d.p, d.mean);
  return d;
}

Corpus::Corpus(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

std::filesystem::path Corpus::resolve(const std::string& pixels_ref) const {
  std::filesystem::path p(pixels_ref);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

void Corpus::ingest(std::span<const ImageRecord> rows, bool verify_rasters) {
  std::unordered_set<std::string> batch_ids;
  for (const auto& row : rows) {
    if (row.image_id.empty()) throw Error(ErrorKind::MalformedRecord, "empty image_id");
    row.geo.validate();
    if (row.floors && *row.floors < 1)
      throw Error(ErrorKind::MalformedRecord, row.image_id + ": floors must be positive");
    if (row.area_per_capita && !(*row.area_per_capita >= 0.0))
      throw Error(ErrorKind::MalformedRecord, row.image_id + ": area_per_capita must be >= 0");
    if (!batch_ids.insert(row.image_id).second)
      throw Error(ErrorKind::DuplicateImageId, row.image_id);
    if (verify_rasters) read_raster(resolve(row.pixels_ref));
  }
  std::unique_lock lock(mutex_);
  for (const auto& row : rows)
    if (entries_.contains(row.image_id)) throw Error(ErrorKind::DuplicateImageId, row.image_id);
  for (const auto& row : rows) entries_.emplace(row.image_id, Entry{row, {}, 0});
}

ScoreDistribution Corpus::submit_ballot(const ScoreBallot& ballot) {
  if (ballot.score < kMinScore || ballot.score > kMaxScore)
    throw Error(ErrorKind::ScoreOutOfRange,
                "score " + std::to_string(ballot.score) + " outside [1,10]");
  std::unique_lock lock(mutex_);
  auto it = entries_.find(ballot.image_id);
  if (it == entries_.end()) throw Error(ErrorKind::UnknownImage, ballot.image_id);
  if (!rater_image_.insert(pair_key(ballot.rater_id, ballot.image_id)).second)
    throw Error(ErrorKind::DuplicateRaterImage,
                "rater '" + ballot.rater_id + "' already scored '" + ballot.image_id + "'");
  Entry& e = it->second;
  ++e.counts[ballot.score - 1];
  ++e.n;
  log_.push_back(ballot);
  return ScoreDistribution::from_counts(e.counts);
}

ScoreDistribution Corpus::distribution_of(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(image_id);
  if (it == entries_.end()) throw Error(ErrorKind::UnknownImage, image_id);
  if (it->second.n == 0) throw Error(ErrorKind::NoBallots, image_id);
  return ScoreDistribution::from_counts(it->second.counts);
}

std::vector<std::string> Corpus::qualified_images(int min_raters) const {
  std::vector<std::string> out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, e] : entries_)
      if (e.n > 0 && e.n >= min_raters) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Corpus::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t Corpus::ballot_total() const {
  std::shared_lock lock(mutex_);
  return log_.size();
}

bool Corpus::contains(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  return entries_.contains(image_id);
}

int Corpus::ballot_count(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(image_id);
  if (it == entries_.end()) throw Error(ErrorKind::UnknownImage, image_id);
  return it->second.n;
}

bool Corpus::has_scored(const std::string& rater_id, const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  return rater_image_.contains(pair_key(rater_id, image_id));
}

ImageRecord Corpus::image(const std::string& image_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(image_id);
  if (it == entries_.end()) throw Error(ErrorKind::UnknownImage, image_id);
  return it->second.record;
}

std::vector<ImageRecord> Corpus::images() const {
  std::vector<ImageRecord> out;
  {
    std::shared_lock lock(mutex_);
    out.reserve(entries_.size());
    for (const auto& [id, e] : entries_) out.push_back(e.record);
  }
  std::sort(out.begin(), out.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
  return out;
}

std::vector<ScoreBallot> Corpus::ballots() const {
  std::shared_lock lock(mutex_);
  return log_;
}

std::map<std::string, int> Corpus::ballot_counts() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, int> out;
  for (const auto& [id, e] : entries_) out.emplace(id, e.n);
  return out;
}

Corpus::Snapshot Corpus::snapshot() const {
  Snapshot s;
  {
    std::shared_lock lock(mutex_);
    s.images.reserve(entries_.size());
    for (const auto& [id, e] : entries_) s.images.push_back(e.record);
    s.ballots = log_;
  }
  std::sort(s.images.begin(), s.images.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
  return s;
}

}  // namespace hqa

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hqa/checkpoint.hpp"
#include "hqa/corpus.hpp"
#include "hqa/error.hpp"
#include "hqa/geostat.hpp"
#include "hqa/records_io.hpp"

namespace httplib {
class Server;
}

namespace hqa {

struct ServiceConfig {
  std::filesystem::path data_dir;
  /// Defaults to data_dir/model.ckpt.
  std::filesystem::path checkpoint;
  bool verify_rasters = true;
};

struct ImageDescriptor {
  std::string image_id;
  std::string pixels_url;
  int n_ballots = 0;
};

struct TallySummary {
  std::string image_id;
  int n_ballots = 0;
  bool qualified = false;
};

struct SnapshotCounts {
  std::size_t images = 0;
  std::size_t ballots = 0;
};

struct RaterSession {
  std::set<std::string> served;
  int completed = 0;
};

/// Crowdsourcing backend over a data directory holding images.jsonl and the
/// append-only ballots.jsonl.
class ScoringService {
 public:
  explicit ScoringService(ServiceConfig config);

  /// Unscored-by-rater image with the fewest ballots, ties by id. Throws NothingLeft.
  ImageDescriptor next_image_for(const std::string& rater_id);
  /// Throws UnknownImage, ScoreOutOfRange, DuplicateRaterImage, IoFailure.
  TallySummary record_ballot(const std::string& rater_id, const std::string& image_id, int score);
  /// Writes images.jsonl and ballots.jsonl under dir from one consistent view.
  SnapshotCounts export_snapshot(const std::filesystem::path& dir) const;

  ScoreDistribution distribution(const std::string& image_id) const;
  std::vector<RegionAggregate> aggregates(RegionLevel level, int min_images = -1) const;
  /// Loads the checkpoint on first use. Throws IoFailure/CorruptCheckpoint when unavailable.
  ScoreDistribution predict(const std::string& image_id);
  std::vector<std::uint8_t> image_png(const std::string& image_id) const;

  RaterSession session(const std::string& rater_id) const;
  const Corpus& corpus() const noexcept { return corpus_; }
  std::size_t recovered_tail_bytes() const noexcept { return log_.dropped_tail_bytes(); }

 private:
  ServiceConfig config_;
  Corpus corpus_;
  BallotLog log_;
  std::mutex write_mutex_;
  mutable std::mutex session_mutex_;
  std::map<std::string, RaterSession> sessions_;
  std::mutex model_mutex_;
  std::shared_ptr<const Checkpoint> model_;
};

int http_status_for(ErrorKind kind) noexcept;

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent request dispatch for the JSON API.
HttpResponse handle_request(ScoringService& service, const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& query, const std::string& body);

/// Routes every endpoint of the API onto an httplib server.
void install_routes(httplib::Server& server, ScoringService& service);

}  // namespace hqa

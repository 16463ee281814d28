#include "hqa/service.hpp"

#include <httplib.h>

#include <climits>
#include <nlohmann/json.hpp>

#include "hqa/reports.hpp"
#include "hqa/training.hpp"

namespace hqa {
namespace {

HttpResponse json_response(int status, const ordered_json& j) { return {status, "application/json", j.dump()}; }

HttpResponse error_response(int status, const std::string& code, const std::string& message) {
  return json_response(status, {{"code", code}, {"message", message}});
}

HttpResponse error_response(const Error& e) { return error_response(http_status_for(e.kind()), to_string(e.kind()), e.what()); }

}  // namespace

ScoringService::ScoringService(ServiceConfig config)
    : config_(std::move(config)), corpus_(config_.data_dir), log_(config_.data_dir / "ballots.jsonl") {
  if (config_.checkpoint.empty()) config_.checkpoint = config_.data_dir / "model.ckpt";
  const auto images = config_.data_dir / "images.jsonl";
  if (std::filesystem::exists(images)) corpus_.ingest(read_images_jsonl(images), config_.verify_rasters);
  for (const auto& b : log_.recovered()) corpus_.submit_ballot(b);
  std::lock_guard lock(session_mutex_);
  for (const auto& b : log_.recovered()) ++sessions_[b.rater_id].completed;
}

ImageDescriptor ScoringService::next_image_for(const std::string& rater_id) {
  std::optional<ImageDescriptor> best;
  for (const auto& [id, count] : corpus_.ballot_counts()) {
    if (corpus_.has_scored(rater_id, id)) continue;
    if (!best || count < best->n_ballots) best = ImageDescriptor{id, "/images/" + id + ".png", count};
  }
  if (!best) throw Error(ErrorKind::NothingLeft, "rater '" + rater_id + "' has scored every image");
  std::lock_guard lock(session_mutex_);
  sessions_[rater_id].served.insert(best->image_id);
  return *best;
}

TallySummary ScoringService::record_ballot(const std::string& rater_id, const std::string& image_id, int score) {
  std::lock_guard lock(write_mutex_);
  if (score < kMinScore || score > kMaxScore)
    throw Error(ErrorKind::ScoreOutOfRange, "score " + std::to_string(score) + " outside [1,10]");
  if (!corpus_.contains(image_id)) throw Error(ErrorKind::UnknownImage, image_id);
  if (corpus_.has_scored(rater_id, image_id))
    throw Error(ErrorKind::DuplicateRaterImage, "rater '" + rater_id + "' already scored '" + image_id + "'");
  char id[32];
  std::snprintf(id, sizeof id, "b%08zu", corpus_.ballot_total() + 1);
  const ScoreBallot ballot{id, image_id, rater_id, score, utc_now_iso8601()};
  log_.append(ballot);
  const auto d = corpus_.submit_ballot(ballot);
  {
    std::lock_guard slock(session_mutex_);
    ++sessions_[rater_id].completed;
  }
  return {image_id, d.n_ballots, d.qualified};
}

SnapshotCounts ScoringService::export_snapshot(const std::filesystem::path& dir) const {
  const auto snap = corpus_.snapshot();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());
  write_images_jsonl(dir / "images.jsonl", snap.images);
  write_ballots_jsonl(dir / "ballots.jsonl", snap.ballots);
  return {snap.images.size(), snap.ballots.size()};
}

ScoreDistribution ScoringService::distribution(const std::string& image_id) const {
  return corpus_.distribution_of(image_id);
}

std::vector<RegionAggregate> ScoringService::aggregates(RegionLevel level, int min_images) const {
  std::vector<GeoScore> scores;
  for (const auto& img : corpus_.images())
    if (corpus_.ballot_count(img.image_id) > 0) scores.push_back({img.geo, corpus_.distribution_of(img.image_id).mean});
  return aggregate_regions(scores, level, min_images);
}

ScoreDistribution ScoringService::predict(const std::string& image_id) {
  std::shared_ptr<const Checkpoint> model;
  {
    std::lock_guard lock(model_mutex_);
    if (!model_) model_ = std::make_shared<const Checkpoint>(load_checkpoint(config_.checkpoint));
    model = model_;
  }
  return predict_corpus(model->spec, model->params, corpus_, {image_id}, 1).front().distribution;
}

std::vector<std::uint8_t> ScoringService::image_png(const std::string& image_id) const {
  const auto rec = corpus_.image(image_id);
  return encode_png(read_raster(corpus_.resolve(rec.pixels_ref)));
}

RaterSession ScoringService::session(const std::string& rater_id) const {
  std::lock_guard lock(session_mutex_);
  auto it = sessions_.find(rater_id);
  return it == sessions_.end() ? RaterSession{} : it->second;
}

int http_status_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::UnknownImage:
    case ErrorKind::NothingLeft:
    case ErrorKind::NoBallots:
      return 404;
    case ErrorKind::ScoreOutOfRange:
      return 422;
    case ErrorKind::DuplicateRaterImage:
      return 409;
    case ErrorKind::MalformedRecord:
    case ErrorKind::InvalidConfig:
      return 400;
    case ErrorKind::IoFailure:
    case ErrorKind::CorruptCheckpoint:
      return 503;
    default:
      return 500;
  }
}

HttpResponse handle_request(ScoringService& service, const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& query, const std::string& body) {
  auto param = [&](const char* key) -> std::string {
    auto it = query.find(key);
    return it == query.end() ? std::string{} : it->second;
  };
  try {
    if (method == "GET" && path == "/api/next") {
      const auto rater = param("rater");
      if (rater.empty()) return error_response(400, "MalformedRequest", "missing rater parameter");
      const auto d = service.next_image_for(rater);
      return json_response(200, {{"image_id", d.image_id}, {"pixels_url", d.pixels_url}, {"n_ballots", d.n_ballots}});
    }
    if (method == "POST" && path == "/api/ballots") {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        return error_response(400, "MalformedRequest", e.what());
      }
      if (!j.is_object() || !j.contains("rater_id") || !j["rater_id"].is_string() || !j.contains("image_id") ||
          !j["image_id"].is_string() || !j.contains("score") || !j["score"].is_number())
        return error_response(400, "MalformedRequest", "expected {rater_id, image_id, score}");
      if (!j["score"].is_number_integer())
        return error_response(422, to_string(ErrorKind::ScoreOutOfRange), "score must be an integer in [1,10]");
      const auto raw = j["score"].get<long long>();
      const int score = raw < INT_MIN || raw > INT_MAX ? 0 : static_cast<int>(raw);
      const auto t = service.record_ballot(j["rater_id"].get<std::string>(), j["image_id"].get<std::string>(), score);
      return json_response(200, {{"image_id", t.image_id}, {"n_ballots", t.n_ballots}, {"qualified", t.qualified}});
    }
    const std::string images_prefix = "/api/images/";
    const std::string dist_suffix = "/distribution";
    if (method == "GET" && path.starts_with(images_prefix) && path.ends_with(dist_suffix) &&
        path.size() > images_prefix.size() + dist_suffix.size()) {
      const auto id = path.substr(images_prefix.size(), path.size() - images_prefix.size() - dist_suffix.size());
      auto j = distribution_json(service.distribution(id));
      j["image_id"] = id;
      return json_response(200, j);
    }
    if (method == "GET" && path == "/api/aggregates") {
      const auto level = region_level_from_string(param("level").empty() ? "county" : param("level"));
      int min_images = -1;
      if (!param("min_images").empty()) min_images = std::stoi(param("min_images"));
      ordered_json arr = ordered_json::array();
      for (const auto& a : service.aggregates(level, min_images)) arr.push_back(aggregate_json(a));
      return json_response(200, arr);
    }
    const std::string predict_prefix = "/api/predict/";
    if (method == "GET" && path.starts_with(predict_prefix) && path.size() > predict_prefix.size()) {
      const auto id = path.substr(predict_prefix.size());
      if (!service.corpus().contains(id)) throw Error(ErrorKind::UnknownImage, id);
      auto j = distribution_json(service.predict(id));
      j["image_id"] = id;
      return json_response(200, j);
    }
    if (method == "GET" && path.starts_with("/images/") && path.ends_with(".png") && path.size() > 12) {
      const auto id = path.substr(8, path.size() - 12);
      const auto png = service.image_png(id);
      return {200, "image/png", std::string(png.begin(), png.end())};
    }
    return error_response(404, "NotFound", method + " " + path);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return error_response(400, "MalformedRequest", e.what());
  }
}

void install_routes(httplib::Server& server, ScoringService& service) {
  auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto out = handle_request(service, req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  server.Get(R"(/api/.*)", dispatch);
  server.Post(R"(/api/.*)", dispatch);
  server.Get(R"(/images/.*)", dispatch);
}

}  // namespace hqa

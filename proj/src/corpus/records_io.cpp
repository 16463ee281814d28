#include "hqa/records_io.hpp"

#include <chrono>
#include <ctime>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hqa/error.hpp"

namespace hqa {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string required_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string())
    throw Error(ErrorKind::MalformedRecord, std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

std::string optional_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorKind::MalformedRecord, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

nlohmann::json parse_line(const std::string& line) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw Error(ErrorKind::MalformedRecord, "line is not a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
}

}  // namespace

std::string image_to_jsonl(const ImageRecord& r) {
  ordered_json j;
  j["image_id"] = r.image_id;
  j["province"] = r.geo.province;
  j["county"] = r.geo.county;
  j["county_code"] = r.geo.county_code;
  j["township"] = r.geo.township;
  j["village"] = r.geo.village;
  j["pixels_ref"] = r.pixels_ref;
  if (r.floors) j["floors"] = *r.floors;
  if (r.has_ac) j["has_ac"] = *r.has_ac;
  if (r.facade) j["facade"] = to_string(*r.facade);
  if (r.area_per_capita) j["area_per_capita"] = *r.area_per_capita;
  return j.dump();
}

ImageRecord image_from_jsonl(const std::string& line) {
  const auto j = parse_line(line);
  ImageRecord r;
  try {
    r.image_id = required_string(j, "image_id");
    r.geo.province = required_string(j, "province");
    r.geo.county = required_string(j, "county");
    r.geo.county_code = optional_string(j, "county_code");
    r.geo.township = optional_string(j, "township");
    r.geo.village = optional_string(j, "village");
    r.pixels_ref = required_string(j, "pixels_ref");
    if (auto it = j.find("floors"); it != j.end() && !it->is_null()) r.floors = it->get<int>();
    if (auto it = j.find("has_ac"); it != j.end() && !it->is_null()) r.has_ac = it->get<bool>();
    if (auto it = j.find("facade"); it != j.end() && !it->is_null())
      r.facade = facade_from_string(it->get<std::string>());
    if (auto it = j.find("area_per_capita"); it != j.end() && !it->is_null())
      r.area_per_capita = it->get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedRecord, e.what());
  }
  return r;
}

std::string ballot_to_jsonl(const ScoreBallot& b) {
  ordered_json j;
  j["ballot_id"] = b.ballot_id;
  j["image_id"] = b.image_id;
  j["rater_id"] = b.rater_id;
  j["score"] = b.score;
  j["submitted_at"] = b.submitted_at;
  return j.dump();
}

ScoreBallot ballot_from_jsonl(const std::string& line) {
  const auto j = parse_line(line);
  ScoreBallot b;
  b.ballot_id = required_string(j, "ballot_id");
  b.image_id = required_string(j, "image_id");
  b.rater_id = required_string(j, "rater_id");
  auto it = j.find("score");
  if (it == j.end() || !it->is_number_integer())
    throw Error(ErrorKind::MalformedRecord, "missing integer field 'score'");
  b.score = it->get<int>();
  b.submitted_at = optional_string(j, "submitted_at");
  return b;
}

std::vector<ImageRecord> read_images_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ImageRecord> rows;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      rows.push_back(image_from_jsonl(line));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_images_jsonl(const std::filesystem::path& path, const std::vector<ImageRecord>& rows) {
  std::string body;
  for (const auto& r : rows) {
    body += image_to_jsonl(r);
    body.push_back('\n');
  }
  write_file(path, body);
}

BallotLogContents read_ballots_jsonl(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  BallotLogContents out;
  std::size_t pos = 0;
  for (int lineno = 1; pos < text.size(); ++lineno) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      out.dropped_tail_bytes = text.size() - pos;
      break;
    }
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      out.ballots.push_back(ballot_from_jsonl(line));
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_ballots_jsonl(const std::filesystem::path& path, const std::vector<ScoreBallot>& rows) {
  std::string body;
  for (const auto& b : rows) {
    body += ballot_to_jsonl(b);
    body.push_back('\n');
  }
  write_file(path, body);
}

void load_data_dir(Corpus& corpus, const std::filesystem::path& dir, bool verify_rasters) {
  const auto images = dir / "images.jsonl";
  if (std::filesystem::exists(images)) corpus.ingest(read_images_jsonl(images), verify_rasters);
  const auto ballots = dir / "ballots.jsonl";
  if (std::filesystem::exists(ballots))
    for (const auto& b : read_ballots_jsonl(ballots).ballots) corpus.submit_ballot(b);
}

BallotLog::BallotLog(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    auto contents = read_ballots_jsonl(path_);
    recovered_ = std::move(contents.ballots);
    dropped_tail_ = contents.dropped_tail_bytes;
    if (dropped_tail_ > 0) {
      const auto size = std::filesystem::file_size(path_);
      std::filesystem::resize_file(path_, size - dropped_tail_);
    }
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorKind::IoFailure, "cannot open ballot log " + path_.string());
}

void BallotLog::append(const ScoreBallot& b) {
  std::string line = ballot_to_jsonl(b);
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw Error(ErrorKind::IoFailure, "append to " + path_.string() + " failed");
}

std::string utc_now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace hqa

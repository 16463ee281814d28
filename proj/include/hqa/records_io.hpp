#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "hqa/corpus.hpp"

namespace hqa {

// images.jsonl / ballots.jsonl line codecs; throw MalformedRecord.
std::string image_to_jsonl(const ImageRecord& r);
ImageRecord image_from_jsonl(const std::string& line);
std::string ballot_to_jsonl(const ScoreBallot& b);
ScoreBallot ballot_from_jsonl(const std::string& line);

/// Reads every non-empty line. Throws IoFailure or MalformedRecord (with line number).
std::vector<ImageRecord> read_images_jsonl(const std::filesystem::path& path);
void write_images_jsonl(const std::filesystem::path& path, const std::vector<ImageRecord>& rows);

struct BallotLogContents {
  std::vector<ScoreBallot> ballots;
  /// Bytes of a trailing line with no LF terminator (an interrupted append).
  std::size_t dropped_tail_bytes = 0;
};

/// Reads a ballot log. A final line without LF is treated as a torn write and
/// dropped; malformed complete lines throw MalformedRecord.
BallotLogContents read_ballots_jsonl(const std::filesystem::path& path);
void write_ballots_jsonl(const std::filesystem::path& path, const std::vector<ScoreBallot>& rows);

/// Loads images.jsonl and ballots.jsonl from a data directory into a corpus.
/// Missing files are treated as empty. Relative pixel refs resolve against dir.
void load_data_dir(Corpus& corpus, const std::filesystem::path& dir, bool verify_rasters = true);

/// Append-only ballot log. Each append writes one complete LF-terminated line
/// and flushes; opening truncates a torn trailing line left by a crash.
class BallotLog {
 public:
  explicit BallotLog(std::filesystem::path path);

  /// Existing ballots, in file order, as read when the log was opened.
  const std::vector<ScoreBallot>& recovered() const noexcept { return recovered_; }
  std::size_t dropped_tail_bytes() const noexcept { return dropped_tail_; }

  void append(const ScoreBallot& b);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<ScoreBallot> recovered_;
  std::size_t dropped_tail_ = 0;
  std::mutex mutex_;
  std::ofstream out_;
};

/// Current UTC time as ISO-8601 with second precision.
std::string utc_now_iso8601();

}  // namespace hqa

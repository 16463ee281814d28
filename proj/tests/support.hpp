#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hqa/corpus.hpp"

namespace hqa::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("hqa-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ImageRecord make_image(const std::string& id, const std::string& county = "CountyA",
                              const std::string& village = "V1") {
  ImageRecord r;
  r.image_id = id;
  r.geo.province = "P";
  r.geo.county = county;
  r.geo.county_code = "code-" + county;
  if (!village.empty()) {
    r.geo.township = "T1";
    r.geo.village = village;
  }
  r.pixels_ref = "rasters/" + id + ".ppm";
  return r;
}

inline ScoreBallot make_ballot(const std::string& image, const std::string& rater, int score) {
  return {image + "-" + rater, image, rater, score, "2024-01-01T00:00:00Z"};
}

}  // namespace hqa::testing

#include "hqa/geostat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hqa/error.hpp"
#include "hqa/evaluation.hpp"

namespace hqa {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Rows of a CSV whose header must match exactly.
std::vector<std::vector<std::string>> parse_table(const std::string& text, const std::vector<std::string>& header) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw Error(ErrorKind::MalformedRecord, "expected header '" + want + "'");
  }
  std::vector<std::vector<std::string>> rows;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(lineno) + ": expected " +
                                                  std::to_string(header.size()) + " fields");
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::optional<double> parse_cell(const std::string& cell) {
  if (cell.empty() || cell == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedRecord, "not a number: '" + cell + "'");
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const char* to_string(RegionLevel level) noexcept {
  switch (level) {
    case RegionLevel::Village: return "village";
    case RegionLevel::Township: return "township";
    case RegionLevel::County: return "county";
  }
  return "county";
}

RegionLevel region_level_from_string(const std::string& name) {
  if (name == "village") return RegionLevel::Village;
  if (name == "township") return RegionLevel::Township;
  if (name == "county") return RegionLevel::County;
  throw Error(ErrorKind::InvalidConfig, "unknown level '" + name + "'");
}

int default_min_images(RegionLevel level) noexcept { return level == RegionLevel::Village ? 6 : 1; }

std::vector<RegionAggregate> aggregate_regions(std::span<const GeoScore> images, RegionLevel level, int min_images) {
  if (min_images < 0) min_images = default_min_images(level);
  struct Acc {
    std::string county_code;
    double sum = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> groups;
  for (const auto& img : images) {
    const auto& g = img.geo;
    if (g.province.empty() || g.county.empty()) throw Error(ErrorKind::MissingGeoField, "image without province/county");
    std::string key = g.province + "/" + g.county;
    if (level != RegionLevel::County) {
      if (g.township.empty()) throw Error(ErrorKind::MissingGeoField, key + ": township missing");
      key += "/" + g.township;
    }
    if (level == RegionLevel::Village) {
      if (g.village.empty()) throw Error(ErrorKind::MissingGeoField, key + ": village missing");
      key += "/" + g.village;
    }
    auto& acc = groups[key];
    acc.county_code = g.county_code;
    acc.sum += img.mean;
    ++acc.n;
  }
  std::vector<RegionAggregate> out;
  out.reserve(groups.size());
  for (const auto& [key, acc] : groups)
    out.push_back({level, key, acc.county_code, acc.sum / static_cast<double>(acc.n), acc.n,
                   acc.n >= static_cast<std::size_t>(min_images)});
  return out;
}

double gini(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::TooFewSamples, "gini of an empty set");
  std::vector<double> v(values.begin(), values.end());
  double total = 0.0;
  for (double x : v) {
    if (x < 0.0) throw Error(ErrorKind::NegativeValue, "gini requires non-negative values");
    total += x;
  }
  if (total == 0.0) throw Error(ErrorKind::AllZero, "gini of an all-zero set");
  std::sort(v.begin(), v.end());
  // sum_{i<j} (x_j - x_i) = sum_k (2k - n + 1) x_(k), 0-based k
  const double n = static_cast<double>(v.size());
  double weighted = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) weighted += (2.0 * static_cast<double>(k) - n + 1.0) * v[k];
  // G = 2 * sum_{i<j} |x_i - x_j| / (2 n^2 mean) = weighted / (n * total)
  return weighted / (n * total);
}

InequalityReport weighted_inequality_report(std::span<const CountyAreaQuality> counties) {
  std::vector<double> area, weighted;
  for (const auto& c : counties) {
    if (c.area_per_capita < 0.0) throw Error(ErrorKind::NegativeValue, c.county_code + ": negative area");
    area.push_back(c.area_per_capita);
    weighted.push_back(c.area_per_capita * c.mean_quality);
  }
  const auto positive = std::count_if(area.begin(), area.end(), [](double a) { return a > 0.0; });
  if (positive < 2) throw Error(ErrorKind::TooFewRegions, "need at least two counties with positive area");
  InequalityReport r;
  r.n_counties = counties.size();
  r.gini_area = gini(area);
  r.gini_weighted = gini(weighted);
  r.relative_increase_defined = r.gini_area > 0.0;
  r.relative_increase = r.relative_increase_defined ? r.gini_weighted / r.gini_area - 1.0 : 0.0;
  return r;
}

std::vector<IndicatorRow> parse_indicators_csv(const std::string& text) {
  const auto rows = parse_table(text, {"county_code", "household_income_index", "disposable_income", "area_per_capita"});
  std::vector<IndicatorRow> out;
  std::set<std::string> seen;
  for (const auto& cells : rows) {
    if (cells[0].empty()) throw Error(ErrorKind::MalformedRecord, "empty county_code");
    if (!seen.insert(cells[0]).second) throw Error(ErrorKind::DuplicateCountyCode, cells[0]);
    out.push_back({cells[0], parse_cell(cells[1]), parse_cell(cells[2]), parse_cell(cells[3])});
  }
  return out;
}

std::vector<IndicatorRow> read_indicators_csv(const std::filesystem::path& path) {
  try {
    return parse_indicators_csv(read_text(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::IoFailure) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

CorrelationTable indicator_correlations(std::span<const RegionAggregate> counties,
                                        std::span<const IndicatorRow> indicators) {
  std::map<std::string, const IndicatorRow*> by_code;
  for (const auto& row : indicators)
    if (!by_code.emplace(row.county_code, &row).second) throw Error(ErrorKind::DuplicateCountyCode, row.county_code);
  std::set<std::string> seen;
  for (const auto& c : counties)
    if (!seen.insert(c.county_code).second) throw Error(ErrorKind::DuplicateCountyCode, c.county_code);

  struct Column {
    const char* name;
    std::optional<double> IndicatorRow::*field;
  };
  const Column columns[] = {{"household_income_index", &IndicatorRow::household_income_index},
                            {"disposable_income", &IndicatorRow::disposable_income},
                            {"area_per_capita", &IndicatorRow::area_per_capita}};
  CorrelationTable table;
  std::vector<std::pair<const RegionAggregate*, const IndicatorRow*>> joined;
  for (const auto& c : counties)
    if (auto it = by_code.find(c.county_code); it != by_code.end()) joined.emplace_back(&c, it->second);
  table.joined_counties = joined.size();
  if (joined.size() < 3)
    throw Error(ErrorKind::JoinTooSmall, std::to_string(joined.size()) + " counties joined; need at least 3");
  for (const auto& col : columns) {
    std::vector<double> q, ind;
    for (const auto& [agg, row] : joined)
      if (const auto& v = row->*col.field; v) {
        q.push_back(agg->mean_quality);
        ind.push_back(*v);
      }
    IndicatorCorrelation ic{col.name, std::nullopt, q.size()};
    if (q.size() >= 3) {
      try {
        ic.r = pearson_r(q, ind);
      } catch (const Error&) {
        // constant column
      }
    }
    table.rows.push_back(std::move(ic));
  }
  return table;
}

RegionClassMap parse_region_classes_csv(const std::string& text) {
  RegionClassMap out;
  for (const auto& cells : parse_table(text, {"county_code", "ns_class", "ew_class"})) {
    if (cells[1] != "north" && cells[1] != "south")
      throw Error(ErrorKind::MalformedRecord, cells[0] + ": ns_class must be north or south");
    if (cells[2] != "east" && cells[2] != "central" && cells[2] != "west")
      throw Error(ErrorKind::MalformedRecord, cells[0] + ": ew_class must be east, central or west");
    if (!out.emplace(cells[0], RegionClass{cells[1], cells[2]}).second)
      throw Error(ErrorKind::DuplicateCountyCode, cells[0]);
  }
  return out;
}

RegionClassMap read_region_classes_csv(const std::filesystem::path& path) {
  try {
    return parse_region_classes_csv(read_text(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::IoFailure) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

GapReport directional_gap_report(std::span<const RegionAggregate> regions, const RegionClassMap& classes) {
  const char* names[] = {"north", "south", "east", "central", "west"};
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& r : regions) {
    auto it = classes.find(r.county_code);
    if (it == classes.end()) throw Error(ErrorKind::UnmappedCounty, "'" + r.county_code + "' has no region class");
    if (!r.included) continue;
    for (const auto& cls : {it->second.ns, it->second.ew}) {
      acc[cls].first += r.mean_quality;
      ++acc[cls].second;
    }
  }
  GapReport report;
  std::map<std::string, std::optional<double>> means;
  for (const char* name : names) {
    ClassMean cm{name, std::nullopt, 0};
    if (auto it = acc.find(name); it != acc.end() && it->second.second > 0) {
      cm.n_regions = it->second.second;
      cm.mean = it->second.first / static_cast<double>(cm.n_regions);
    }
    means[name] = cm.mean;
    report.classes.push_back(cm);
  }
  auto gap = [&](const std::string& hi, const std::string& lo) {
    Gap g{hi + "_minus_" + lo, std::nullopt};
    if (means[hi] && means[lo]) g.value = *means[hi] - *means[lo];
    report.gaps.push_back(g);
  };
  gap("south", "north");
  gap("east", "west");
  gap("east", "central");
  gap("central", "west");
  return report;
}

}  // namespace hqa

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqa/corpus.hpp"

namespace hqa {

enum class RegionLevel { Village, Township, County };
const char* to_string(RegionLevel level) noexcept;
RegionLevel region_level_from_string(const std::string& name);
/// Villages need more than five images; townships and counties need one.
int default_min_images(RegionLevel level) noexcept;

struct GeoScore {
  GeoPath geo;
  double mean = 0.0;
};

struct RegionAggregate {
  RegionLevel level = RegionLevel::County;
  std::string key;  // path prefix joined with '/'
  std::string county_code;
  double mean_quality = 0.0;
  std::size_t n_images = 0;
  bool included = false;
};

/// Unweighted mean over member images, sorted by key.
/// min_images < 0 selects default_min_images(level). Throws MissingGeoField.
std::vector<RegionAggregate> aggregate_regions(std::span<const GeoScore> images, RegionLevel level,
                                               int min_images = -1);

/// Pairwise-difference Gini, computed from the sorted values in O(n log n).
/// Throws AllZero, NegativeValue, TooFewSamples (empty input).
double gini(std::span<const double> values);

struct CountyAreaQuality {
  std::string county_code;
  double area_per_capita = 0.0;
  double mean_quality = 0.0;
};

struct InequalityReport {
  std::size_t n_counties = 0;
  double gini_area = 0.0;
  double gini_weighted = 0.0;  // over area_per_capita * mean_quality
  double relative_increase = 0.0;
  bool relative_increase_defined = false;
};

/// Throws TooFewRegions (fewer than two counties with positive area).
InequalityReport weighted_inequality_report(std::span<const CountyAreaQuality> counties);

struct IndicatorRow {
  std::string county_code;
  std::optional<double> household_income_index;
  std::optional<double> disposable_income;
  std::optional<double> area_per_capita;
};

/// Header: county_code,household_income_index,disposable_income,area_per_capita.
/// Empty cells are missing values. Throws MalformedRecord, DuplicateCountyCode.
std::vector<IndicatorRow> parse_indicators_csv(const std::string& text);
std::vector<IndicatorRow> read_indicators_csv(const std::filesystem::path& path);

struct IndicatorCorrelation {
  std::string indicator;
  std::optional<double> r;  // absent when fewer than 3 pairs or a constant column
  std::size_t n = 0;        // pairs used
};

struct CorrelationTable {
  std::size_t joined_counties = 0;
  std::vector<IndicatorCorrelation> rows;
};

/// Inner join on county_code, pairwise deletion per indicator.
/// Throws DuplicateCountyCode, JoinTooSmall (fewer than 3 joined counties).
CorrelationTable indicator_correlations(std::span<const RegionAggregate> counties,
                                        std::span<const IndicatorRow> indicators);

struct RegionClass {
  std::string ns;  // north | south
  std::string ew;  // east | central | west
};
using RegionClassMap = std::map<std::string, RegionClass>;

/// Header: county_code,ns_class,ew_class. Throws MalformedRecord, DuplicateCountyCode.
RegionClassMap parse_region_classes_csv(const std::string& text);
RegionClassMap read_region_classes_csv(const std::filesystem::path& path);

struct ClassMean {
  std::string name;
  std::optional<double> mean;
  std::size_t n_regions = 0;
};

struct Gap {
  std::string name;  // e.g. south_minus_north
  std::optional<double> value;
};

struct GapReport {
  std::vector<ClassMean> classes;  // north, south, east, central, west
  std::vector<Gap> gaps;           // south-north, east-west, east-central, central-west
};

/// Mean of included region means per class. Throws UnmappedCounty.
GapReport directional_gap_report(std::span<const RegionAggregate> regions, const RegionClassMap& classes);

}  // namespace hqa

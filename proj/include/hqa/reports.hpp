#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hqa/corpus.hpp"
#include "hqa/evaluation.hpp"
#include "hqa/geostat.hpp"

namespace hqa {

using ordered_json = nlohmann::ordered_json;

ordered_json distribution_json(const ScoreDistribution& d);
ordered_json eval_report_json(const EvalReport& r);
ordered_json group_report_json(const GroupReport& r);
ordered_json aggregate_json(const RegionAggregate& a);
ordered_json inequality_json(const InequalityReport& r);
ordered_json correlation_json(const CorrelationTable& t);
ordered_json gap_json(const GapReport& g);

/// Pretty-printed, LF-terminated. Throws IoFailure.
void write_json_file(const std::filesystem::path& path, const ordered_json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// "%.17g": round-trips every double.
std::string format_real(double v);

/// One line of predictions.csv. Truth columns are empty when unknown.
struct PredictionRow {
  std::string image_id;
  std::string split;  // train | validation | test | "" (unsplit)
  GeoPath geo;
  std::optional<int> floors;
  std::optional<bool> has_ac;
  std::optional<Facade> facade;
  ScoreDistribution predicted;
  std::optional<double> true_mean;
  std::optional<double> true_std;
  int n_ballots = 0;
};

/// Columns: image_id,split,province,county,county_code,township,village,floors,
/// has_ac,facade,p1..p10,pred_mean,pred_std,true_mean,true_std,n_ballots
std::string predictions_csv(const std::vector<PredictionRow>& rows);
/// Throws MalformedRecord.
std::vector<PredictionRow> parse_predictions_csv(const std::string& text);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

/// Columns: level,region_key,county_code,mean_quality,n_images,included
std::string aggregates_csv(const std::vector<RegionAggregate>& rows);
std::vector<RegionAggregate> parse_aggregates_csv(const std::string& text);
std::vector<RegionAggregate> read_aggregates_csv(const std::filesystem::path& path);

/// Columns: measure,value,n_regions. Undefined values are empty cells.
std::string gaps_csv(const GapReport& g);

/// Columns: scope,n,r_squared,mse_avg,mse_std
std::string eval_csv(const std::vector<std::pair<std::string, EvalReport>>& scopes);

std::string read_text_file(const std::filesystem::path& path);

/// Metrics over a predictions table: scope "all", one scope per split label
/// present, and "county" (per-county averages of predicted and true moments),
/// plus attribute group reports on predicted means. Errors in the "all" scope
/// propagate; the narrower scopes and group reports are skipped with a note.
struct EvaluationBundle {
  std::vector<std::pair<std::string, EvalReport>> scopes;
  std::vector<GroupReport> groups;
  std::vector<std::string> notes;

  const EvalReport* scope(const std::string& name) const;
};

EvaluationBundle evaluate_prediction_rows(const std::vector<PredictionRow>& rows);
ordered_json evaluation_bundle_json(const EvaluationBundle& bundle);

/// County-mean moment pairs over rows that carry truth.
std::vector<MomentPair> county_moment_pairs(const std::vector<PredictionRow>& rows);

}  // namespace hqa

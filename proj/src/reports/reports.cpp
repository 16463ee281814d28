#include "hqa/reports.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hqa/error.hpp"

namespace hqa {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  out.push_back(cell);
  return out;
}

double to_real(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedRecord, "not a number: '" + s + "'");
  }
}

std::optional<double> opt_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return to_real(s);
}

int to_int(const std::string& s) {
  const double v = to_real(s);
  if (v != static_cast<int>(v)) throw Error(ErrorKind::MalformedRecord, "not an integer: '" + s + "'");
  return static_cast<int>(v);
}

template <class T>
ordered_json opt_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text, const std::string& header) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw Error(ErrorKind::MalformedRecord, "expected header '" + header + "'");
  const std::size_t width = split_line(header).size();
  std::vector<std::vector<std::string>> rows;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != width)
      throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                                                  " fields, got " + std::to_string(cells.size()));
    rows.push_back(std::move(cells));
  }
  return rows;
}

const std::string kPredictionHeader =
    "image_id,split,province,county,county_code,township,village,floors,has_ac,facade,"
    "p1,p2,p3,p4,p5,p6,p7,p8,p9,p10,pred_mean,pred_std,true_mean,true_std,n_ballots";
const std::string kAggregateHeader = "level,region_key,county_code,mean_quality,n_images,included";

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ordered_json distribution_json(const ScoreDistribution& d) {
  ordered_json j;
  j["p"] = d.p;
  j["n_ballots"] = d.n_ballots;
  j["mean"] = d.mean;
  j["std"] = d.std;
  j["qualified"] = d.qualified;
  return j;
}

ordered_json eval_report_json(const EvalReport& r) {
  return {{"n", r.n}, {"r_squared", r.r_squared}, {"mse_avg", r.mse_avg}, {"mse_std", r.mse_std}};
}

ordered_json group_report_json(const GroupReport& r) {
  ordered_json j;
  j["attribute"] = to_string(r.attribute);
  j["attributed"] = r.attributed;
  j["groups"] = ordered_json::array();
  for (const auto& g : r.groups) j["groups"].push_back({{"label", g.label}, {"mean", g.mean}, {"count", g.count}});
  j["pairs"] = ordered_json::array();
  for (const auto& p : r.pairs)
    j["pairs"].push_back({{"a", p.a}, {"b", p.b}, {"t", p.test.t}, {"df", p.test.df}, {"p", p.test.p}});
  return j;
}

ordered_json aggregate_json(const RegionAggregate& a) {
  return {{"level", to_string(a.level)}, {"region_key", a.key},     {"county_code", a.county_code},
          {"mean_quality", a.mean_quality}, {"n_images", a.n_images}, {"included", a.included}};
}

ordered_json inequality_json(const InequalityReport& r) {
  return {{"n_counties", r.n_counties},
          {"gini_area", r.gini_area},
          {"gini_weighted", r.gini_weighted},
          {"relative_increase", r.relative_increase},
          {"relative_increase_defined", r.relative_increase_defined}};
}

ordered_json correlation_json(const CorrelationTable& t) {
  ordered_json j;
  j["joined_counties"] = t.joined_counties;
  j["indicators"] = ordered_json::array();
  for (const auto& r : t.rows) j["indicators"].push_back({{"indicator", r.indicator}, {"r", opt_json(r.r)}, {"n", r.n}});
  return j;
}

ordered_json gap_json(const GapReport& g) {
  ordered_json j;
  j["classes"] = ordered_json::array();
  for (const auto& c : g.classes)
    j["classes"].push_back({{"class", c.name}, {"mean", opt_json(c.mean)}, {"n_regions", c.n_regions}});
  j["gaps"] = ordered_json::array();
  for (const auto& gap : g.gaps)
    j["gaps"].push_back({{"gap", gap.name}, {"value", opt_json(gap.value)}, {"defined", gap.value.has_value()}});
  return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  std::string out = kPredictionHeader + "\n";
  for (const auto& r : rows) {
    out += r.image_id + ',' + r.split + ',' + r.geo.province + ',' + r.geo.county + ',' + r.geo.county_code + ',' +
           r.geo.township + ',' + r.geo.village + ',';
    out += (r.floors ? std::to_string(*r.floors) : "") + ',';
    out += (r.has_ac ? (*r.has_ac ? "1" : "0") : "") + std::string(",");
    out += (r.facade ? to_string(*r.facade) : "") + std::string(",");
    for (double p : r.predicted.p) out += format_real(p) + ',';
    out += format_real(r.predicted.mean) + ',' + format_real(r.predicted.std) + ',';
    out += (r.true_mean ? format_real(*r.true_mean) : "") + ',';
    out += (r.true_std ? format_real(*r.true_std) : "") + ',';
    out += std::to_string(r.n_ballots) + '\n';
  }
  return out;
}

std::vector<PredictionRow> parse_predictions_csv(const std::string& text) {
  std::vector<PredictionRow> out;
  for (const auto& c : csv_rows(text, kPredictionHeader)) {
    PredictionRow r;
    r.image_id = c[0];
    r.split = c[1];
    r.geo = {c[2], c[3], c[5], c[6], c[4]};
    if (!c[7].empty()) r.floors = to_int(c[7]);
    if (!c[8].empty()) r.has_ac = c[8] == "1";
    if (!c[9].empty()) r.facade = facade_from_string(c[9]);
    for (int j = 0; j < kScoreBins; ++j) r.predicted.p[j] = to_real(c[10 + j]);
    r.predicted.mean = to_real(c[20]);
    r.predicted.std = to_real(c[21]);
    r.true_mean = opt_real(c[22]);
    r.true_std = opt_real(c[23]);
    r.n_ballots = to_int(c[24]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  return parse_predictions_csv(read_text_file(path));
}

std::string aggregates_csv(const std::vector<RegionAggregate>& rows) {
  std::string out = kAggregateHeader + "\n";
  for (const auto& a : rows)
    out += std::string(to_string(a.level)) + ',' + a.key + ',' + a.county_code + ',' + format_real(a.mean_quality) + ',' +
           std::to_string(a.n_images) + ',' + (a.included ? "1" : "0") + '\n';
  return out;
}

std::vector<RegionAggregate> parse_aggregates_csv(const std::string& text) {
  std::vector<RegionAggregate> out;
  for (const auto& c : csv_rows(text, kAggregateHeader))
    out.push_back({region_level_from_string(c[0]), c[1], c[2], to_real(c[3]), static_cast<std::size_t>(to_int(c[4])),
                   c[5] == "1"});
  return out;
}

std::vector<RegionAggregate> read_aggregates_csv(const std::filesystem::path& path) {
  return parse_aggregates_csv(read_text_file(path));
}

std::string gaps_csv(const GapReport& g) {
  std::string out = "measure,value,n_regions\n";
  for (const auto& c : g.classes)
    out += "mean_" + c.name + ',' + (c.mean ? format_real(*c.mean) : "") + ',' + std::to_string(c.n_regions) + '\n';
  for (const auto& gap : g.gaps) out += "gap_" + gap.name + ',' + (gap.value ? format_real(*gap.value) : "") + ",\n";
  return out;
}

std::string eval_csv(const std::vector<std::pair<std::string, EvalReport>>& scopes) {
  std::string out = "scope,n,r_squared,mse_avg,mse_std\n";
  for (const auto& [scope, r] : scopes)
    out += scope + ',' + std::to_string(r.n) + ',' + format_real(r.r_squared) + ',' + format_real(r.mse_avg) + ',' +
           format_real(r.mse_std) + '\n';
  return out;
}

const EvalReport* EvaluationBundle::scope(const std::string& name) const {
  for (const auto& [n, r] : scopes)
    if (n == name) return &r;
  return nullptr;
}

std::vector<MomentPair> county_moment_pairs(const std::vector<PredictionRow>& rows) {
  struct Acc {
    MomentPair sum;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> by_county;
  for (const auto& r : rows) {
    if (!r.true_mean || !r.true_std) continue;
    auto& a = by_county[r.geo.province + "/" + r.geo.county];
    a.sum.pred_mean += r.predicted.mean;
    a.sum.pred_std += r.predicted.std;
    a.sum.true_mean += *r.true_mean;
    a.sum.true_std += *r.true_std;
    ++a.n;
  }
  std::vector<MomentPair> out;
  for (const auto& [key, a] : by_county) {
    const double n = static_cast<double>(a.n);
    out.push_back({a.sum.pred_mean / n, a.sum.pred_std / n, a.sum.true_mean / n, a.sum.true_std / n});
  }
  return out;
}

EvaluationBundle evaluate_prediction_rows(const std::vector<PredictionRow>& rows) {
  EvaluationBundle b;
  std::map<std::string, std::vector<MomentPair>> by_split;
  std::vector<MomentPair> all;
  for (const auto& r : rows) {
    if (!r.true_mean || !r.true_std) continue;
    const MomentPair m{r.predicted.mean, r.predicted.std, *r.true_mean, *r.true_std};
    all.push_back(m);
    if (!r.split.empty()) by_split[r.split].push_back(m);
  }
  auto add = [&](const std::string& name, const std::vector<MomentPair>& pairs) {
    if (pairs.empty()) return;
    try {
      b.scopes.emplace_back(name, eval_moments(pairs));
    } catch (const Error& e) {
      b.notes.push_back(name + ": " + e.what());
    }
  };
  if (!all.empty()) b.scopes.emplace_back("all", eval_moments(all));
  for (const char* split : {"train", "validation", "test"})
    if (auto it = by_split.find(split); it != by_split.end()) add(split, it->second);
  const auto county = county_moment_pairs(rows);
  if (county.size() >= 2) add("county", county);

  std::vector<ScoredImage> scored;
  for (const auto& r : rows) {
    ImageRecord rec;
    rec.image_id = r.image_id;
    rec.geo = r.geo;
    rec.floors = r.floors;
    rec.has_ac = r.has_ac;
    rec.facade = r.facade;
    scored.push_back({std::move(rec), r.predicted.mean});
  }
  for (Attribute a : {Attribute::Floors, Attribute::HasAc, Attribute::Facade}) {
    try {
      b.groups.push_back(attribute_group_report(scored, a));
    } catch (const Error& e) {
      b.notes.push_back(std::string(to_string(a)) + ": " + e.what());
    }
  }
  return b;
}

ordered_json evaluation_bundle_json(const EvaluationBundle& bundle) {
  ordered_json j;
  j["metrics"] = ordered_json::object();
  for (const auto& [name, r] : bundle.scopes) j["metrics"][name] = eval_report_json(r);
  j["groups"] = ordered_json::array();
  for (const auto& g : bundle.groups) j["groups"].push_back(group_report_json(g));
  j["notes"] = bundle.notes;
  return j;
}

}  // namespace hqa

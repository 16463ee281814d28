#include "hqa/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hqa/checkpoint.hpp"
#include "hqa/corpus.hpp"
#include "hqa/error.hpp"
#include "hqa/evaluation.hpp"
#include "hqa/geostat.hpp"
#include "hqa/records_io.hpp"
#include "hqa/reports.hpp"
#include "hqa/service.hpp"
#include "hqa/synthetic.hpp"
#include "hqa/training.hpp"

namespace fs = std::filesystem;

namespace hqa::cli {
namespace {

std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

NetworkSpec resolve_spec(const std::string& name) {
  if (name == "desk") return NetworkSpec::desk();
  if (name == "tiny") return NetworkSpec::tiny();
  if (!fs::exists(name)) throw Error(ErrorKind::InvalidConfig, "--spec must be desk, tiny or a JSON file: " + name);
  return spec_from_json(read_text_file(name));
}

using SplitMap = std::map<std::string, std::string>;

void write_split_csv(const fs::path& path, const DatasetSplit& split) {
  std::ostringstream os;
  os << "image_id,split\n";
  std::map<std::string, std::string> rows;
  for (const auto& id : split.train) rows[id] = "train";
  for (const auto& id : split.validation) rows[id] = "validation";
  for (const auto& id : split.test) rows[id] = "test";
  for (const auto& [id, s] : rows) os << id << ',' << s << '\n';
  write_text_file(path, os.str());
}

SplitMap read_split_csv(const fs::path& path) {
  SplitMap out;
  std::istringstream is(read_text_file(path));
  std::string line;
  if (!std::getline(is, line) || line != "image_id,split")
    throw Error(ErrorKind::MalformedRecord, path.string() + ": expected header image_id,split");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorKind::MalformedRecord, path.string() + ": " + line);
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

SplitMap split_for(const std::string& explicit_path, const fs::path& checkpoint) {
  if (!explicit_path.empty()) return read_split_csv(explicit_path);
  const auto beside = checkpoint.parent_path() / "split.csv";
  if (fs::exists(beside)) return read_split_csv(beside);
  return {};
}

std::vector<PredictionRow> prediction_rows(const Corpus& corpus, const Checkpoint& model, const SplitMap& split,
                                           int min_raters) {
  const auto records = corpus.images();
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.image_id);
  const auto preds = predict_corpus(model.spec, model.params, corpus, ids);

  std::vector<PredictionRow> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    PredictionRow row;
    row.image_id = rec.image_id;
    if (auto it = split.find(rec.image_id); it != split.end()) row.split = it->second;
    row.geo = rec.geo;
    row.floors = rec.floors;
    row.has_ac = rec.has_ac;
    row.facade = rec.facade;
    row.predicted = preds[i].distribution;
    row.n_ballots = corpus.ballot_count(rec.image_id);
    if (row.n_ballots >= min_raters && row.n_ballots > 0) {
      const auto truth = corpus.distribution_of(rec.image_id);
      row.true_mean = truth.mean;
      row.true_std = truth.std;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<GeoScore> predicted_scores(const std::vector<PredictionRow>& rows) {
  std::vector<GeoScore> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.geo, r.predicted.mean});
  return out;
}

std::vector<GeoScore> crowd_scores(const Corpus& corpus) {
  std::vector<GeoScore> out;
  for (const auto& rec : corpus.images())
    if (corpus.ballot_count(rec.image_id) > 0) out.push_back({rec.geo, corpus.distribution_of(rec.image_id).mean});
  return out;
}

std::vector<RegionLevel> levels_from(const std::string& name) {
  if (name == "all") return {RegionLevel::Village, RegionLevel::Township, RegionLevel::County};
  return {region_level_from_string(name)};
}

std::vector<RegionAggregate> aggregate_levels(const std::vector<GeoScore>& scores, const std::string& level,
                                              int min_images) {
  std::vector<RegionAggregate> out;
  for (RegionLevel l : levels_from(level)) {
    auto part = aggregate_regions(scores, l, min_images);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<RegionAggregate> included_counties(const std::vector<RegionAggregate>& rows) {
  std::vector<RegionAggregate> out;
  for (const auto& r : rows)
    if (r.level == RegionLevel::County && r.included) out.push_back(r);
  return out;
}

void print_eval(std::ostream& out, const EvaluationBundle& bundle) {
  for (const auto& [name, r] : bundle.scopes)
    out << name << ": n=" << r.n << " r2=" << fmt6(r.r_squared) << " mse_avg=" << fmt6(r.mse_avg)
        << " mse_std=" << fmt6(r.mse_std) << '\n';
  for (const auto& note : bundle.notes) out << "note: " << note << '\n';
}

void print_correlations(std::ostream& out, const CorrelationTable& t) {
  out << "joined counties: " << t.joined_counties << '\n';
  for (const auto& row : t.rows)
    out << row.indicator << ": " << (row.r ? fmt6(*row.r) : std::string("undefined")) << " (n=" << row.n << ")\n";
}

// Area per capita keyed by county code: indicators.csv when present, else the
// mean of image-level area_per_capita.
std::map<std::string, double> county_areas(const Corpus& corpus, const fs::path& indicators) {
  std::map<std::string, double> out;
  if (fs::exists(indicators)) {
    for (const auto& row : read_indicators_csv(indicators))
      if (row.area_per_capita) out[row.county_code] = *row.area_per_capita;
    return out;
  }
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& rec : corpus.images())
    if (rec.area_per_capita && !rec.geo.county_code.empty()) {
      auto& a = acc[rec.geo.county_code];
      a.first += *rec.area_per_capita;
      ++a.second;
    }
  for (const auto& [code, a] : acc) out[code] = a.first / a.second;
  return out;
}

std::vector<CountyAreaQuality> join_area(const std::vector<RegionAggregate>& counties,
                                         const std::map<std::string, double>& areas) {
  std::vector<CountyAreaQuality> out;
  for (const auto& c : counties)
    if (auto it = areas.find(c.county_code); it != areas.end()) out.push_back({c.county_code, it->second, c.mean_quality});
  return out;
}

struct Options {
  // synth
  SyntheticConfig synth;
  std::string out;
  // shared
  std::string data;
  std::string checkpoint;
  std::string split_file;
  int min_raters = kQualifiedRaters;
  // ingest
  std::string images;
  std::string ballots;
  // serve
  std::string addr = "127.0.0.1:8080";
  // train
  std::string config;
  std::string spec = "desk";
  std::map<std::string, std::string> train_flags;
  // evaluate / aggregate / correlate
  std::string predictions;
  std::string level = "county";
  int min_images = -1;
  std::string aggregates;
  std::string indicators;
  std::string gap_level = "village";
  // gini
  std::string values;
};

int cmd_synth(const Options& o, std::ostream& out) {
  const auto corpus = generate_synthetic_corpus(o.synth);
  write_synthetic_corpus(corpus, o.out);
  out << "wrote " << corpus.images.size() << " images, " << corpus.ballots.size() << " ballots, "
      << corpus.counties.size() << " counties to " << o.out << '\n';
  return kExitOk;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  const fs::path dir = o.data;
  fs::create_directories(dir);
  Corpus corpus(dir);
  load_data_dir(corpus, dir, false);
  const auto fresh = read_images_jsonl(o.images);
  corpus.ingest(fresh, true);
  std::vector<ScoreBallot> ballots;
  if (!o.ballots.empty()) {
    ballots = read_ballots_jsonl(o.ballots).ballots;
    for (const auto& b : ballots) corpus.submit_ballot(b);
  }
  write_images_jsonl(dir / "images.jsonl", corpus.images());
  BallotLog log(dir / "ballots.jsonl");
  for (const auto& b : ballots) log.append(b);
  out << "ingested " << fresh.size() << " images and " << ballots.size() << " ballots; corpus now holds "
      << corpus.size() << " images\n";
  return kExitOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const auto colon = o.addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::InvalidConfig, "--addr must be host:port");
  const std::string host = o.addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(o.addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "--addr must be host:port");
  }
  ServiceConfig cfg;
  cfg.data_dir = o.data;
  cfg.checkpoint = o.checkpoint;
  ScoringService service(cfg);
  httplib::Server server;
  install_routes(server, service);
  out << "serving " << service.corpus().size() << " images on " << host << ':' << port << std::endl;
  if (!server.listen(host, port)) throw Error(ErrorKind::IoFailure, "cannot listen on " + o.addr);
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig cfg;
  if (!o.config.empty()) cfg = read_train_config(o.config, cfg);
  for (const auto& [key, value] : o.train_flags) set_train_option(cfg, key, value);
  cfg.validate();
  const NetworkSpec spec = resolve_spec(o.spec);

  const fs::path dir = o.data;
  Corpus corpus(dir);
  load_data_dir(corpus, dir, false);
  const auto result = train(corpus, cfg, spec);

  const fs::path out_dir = o.out.empty() ? dir : fs::path(o.out);
  fs::create_directories(out_dir);
  save_checkpoint(result.params, spec, out_dir / "model.ckpt");
  write_history_csv(out_dir / "history.csv", result.history);
  write_split_csv(out_dir / "split.csv", result.split);

  out << "split: " << result.split.train.size() << " train, " << result.split.validation.size() << " validation, "
      << result.split.test.size() << " test\n";
  out << "initial val_loss " << fmt12(result.initial_val_loss) << '\n';
  for (const auto& e : result.history.epochs)
    out << "epoch " << e.epoch << " train_loss " << fmt12(e.train_loss) << " val_loss " << fmt12(e.val_loss) << " lr "
        << fmt12(e.lr) << '\n';
  out << "best epoch " << result.best_epoch << "; wrote " << (out_dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

fs::path checkpoint_path(const Options& o) {
  return o.checkpoint.empty() ? fs::path(o.data) / "model.ckpt" : fs::path(o.checkpoint);
}

int cmd_predict(const Options& o, std::ostream& out) {
  const fs::path dir = o.data;
  Corpus corpus(dir);
  load_data_dir(corpus, dir, false);
  const auto ckpt_path = checkpoint_path(o);
  const auto model = load_checkpoint(ckpt_path);
  const auto rows = prediction_rows(corpus, model, split_for(o.split_file, ckpt_path), o.min_raters);
  const fs::path target = o.out.empty() ? dir / "predictions.csv" : fs::path(o.out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  write_text_file(target, predictions_csv(rows));
  out << "wrote " << rows.size() << " predictions to " << target.string() << '\n';
  return kExitOk;
}

void write_eval(const fs::path& dir, const EvaluationBundle& bundle) {
  fs::create_directories(dir);
  write_json_file(dir / "eval.json", evaluation_bundle_json(bundle));
  write_text_file(dir / "eval.csv", eval_csv(bundle.scopes));
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto rows = read_predictions_csv(o.predictions);
  const auto bundle = evaluate_prediction_rows(rows);
  if (bundle.scopes.empty()) throw Error(ErrorKind::IdMismatch, "no prediction rows carry ground truth");
  const fs::path dir = o.out.empty() ? fs::path(o.predictions).parent_path() : fs::path(o.out);
  write_eval(dir.empty() ? fs::path(".") : dir, bundle);
  print_eval(out, bundle);
  return kExitOk;
}

int cmd_aggregate(const Options& o, std::ostream& out) {
  std::vector<GeoScore> scores;
  if (!o.predictions.empty()) {
    scores = predicted_scores(read_predictions_csv(o.predictions));
  } else {
    Corpus corpus(o.data);
    load_data_dir(corpus, o.data, false);
    scores = crowd_scores(corpus);
  }
  const auto rows = aggregate_levels(scores, o.level, o.min_images);
  const std::string csv = aggregates_csv(rows);
  if (o.out.empty()) {
    out << csv;
  } else {
    write_text_file(o.out, csv);
    out << "wrote " << rows.size() << " aggregates to " << o.out << '\n';
  }
  return kExitOk;
}

int cmd_gini(const Options& o, std::ostream& out) {
  std::vector<double> values;
  std::stringstream ss(o.values);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw Error(ErrorKind::InvalidConfig, "not a number: '" + item + "'");
    values.push_back(v);
  }
  out << fmt12(gini(values)) << '\n';
  return kExitOk;
}

int cmd_correlate(const Options& o, std::ostream& out) {
  const auto counties = included_counties(read_aggregates_csv(o.aggregates));
  const auto table = indicator_correlations(counties, read_indicators_csv(o.indicators));
  if (!o.out.empty()) write_json_file(o.out, correlation_json(table));
  print_correlations(out, table);
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  const fs::path dir = o.data;
  Corpus corpus(dir);
  load_data_dir(corpus, dir, false);
  const auto ckpt_path = checkpoint_path(o);
  const auto model = load_checkpoint(ckpt_path);
  const fs::path target = o.out.empty() ? dir / "report" : fs::path(o.out);
  fs::create_directories(target);

  const auto rows = prediction_rows(corpus, model, split_for(o.split_file, ckpt_path), o.min_raters);
  write_text_file(target / "predictions.csv", predictions_csv(rows));

  const auto bundle = evaluate_prediction_rows(rows);
  write_eval(target, bundle);
  print_eval(out, bundle);

  const auto scores = predicted_scores(rows);
  const auto aggregates = aggregate_levels(scores, "all", -1);
  write_text_file(target / "aggregates.csv", aggregates_csv(aggregates));
  const auto counties = included_counties(aggregates);

  const auto areas = county_areas(corpus, dir / "indicators.csv");
  const auto joined = join_area(counties, areas);
  if (joined.empty()) {
    out << "inequality: no county area data\n";
  } else {
    const auto inequality = weighted_inequality_report(joined);
    write_json_file(target / "inequality.json", inequality_json(inequality));
    out << "gini_area " << fmt6(inequality.gini_area) << " gini_weighted " << fmt6(inequality.gini_weighted) << '\n';
  }

  if (fs::exists(dir / "region_classes.csv")) {
    const auto classes = read_region_classes_csv(dir / "region_classes.csv");
    const auto level_rows = aggregate_regions(scores, region_level_from_string(o.gap_level), -1);
    const auto gaps = directional_gap_report(level_rows, classes);
    write_text_file(target / "gaps.csv", gaps_csv(gaps));
    for (const auto& g : gaps.gaps)
      out << g.name << ' ' << (g.value ? fmt6(*g.value) : std::string("undefined")) << '\n';
  }

  if (fs::exists(dir / "indicators.csv")) {
    const auto table = indicator_correlations(counties, read_indicators_csv(dir / "indicators.csv"));
    write_json_file(target / "correlations.json", correlation_json(table));
    print_correlations(out, table);
  }
  out << "report written to " << target.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rural housing quality pipeline"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--seed", o.synth.seed);
  synth->add_option("--n", o.synth.n_images);
  synth->add_option("--raters", o.synth.raters_per_image);
  synth->add_option("--side", o.synth.side);
  synth->add_option("--sigma", o.synth.noise_sigma);
  synth->add_option("--counties", o.synth.counties);
  synth->add_option("--townships", o.synth.townships_per_county);
  synth->add_option("--villages", o.synth.villages_per_township);
  synth->add_option("--clustering", o.synth.county_clustering);
  synth->add_option("--out", o.out)->required();

  auto* ingest = app.add_subcommand("ingest", "Merge image records and ballots into a data directory");
  ingest->add_option("--data", o.data)->required();
  ingest->add_option("--images", o.images)->required();
  ingest->add_option("--ballots", o.ballots);

  auto* serve = app.add_subcommand("serve", "Run the scoring HTTP service");
  serve->add_option("--addr", o.addr);
  serve->add_option("--data-dir,--data", o.data)->required();
  serve->add_option("--checkpoint", o.checkpoint);

  auto* train_cmd = app.add_subcommand("train", "Train the network on qualified images");
  train_cmd->add_option("--data", o.data)->required();
  train_cmd->add_option("--config", o.config);
  train_cmd->add_option("--spec", o.spec, "desk, tiny or a JSON spec file");
  train_cmd->add_option("--out", o.out);
  const std::vector<std::pair<std::string, std::string>> train_keys = {
      {"--batch-size", "batch_size"},   {"--epochs", "epochs"},
      {"--lr", "lr0"},                  {"--lr-decay", "lr_decay_factor"},
      {"--patience", "plateau_patience"}, {"--momentum", "momentum"},
      {"--optimizer", "optimizer"},     {"--seed", "seed"},
      {"--split", "split"},             {"--min-raters", "min_raters"}};
  for (const auto& [flag, key] : train_keys) {
    const std::string k = key;
    train_cmd->add_option_function<std::string>(flag, [&o, k](const std::string& v) { o.train_flags[k] = v; });
  }

  auto* predict = app.add_subcommand("predict", "Predict score distributions for every image");
  predict->add_option("--data", o.data)->required();
  predict->add_option("--checkpoint", o.checkpoint);
  predict->add_option("--split", o.split_file);
  predict->add_option("--min-raters", o.min_raters);
  predict->add_option("--out", o.out);

  auto* evaluate = app.add_subcommand("evaluate", "Score a predictions table");
  evaluate->add_option("--predictions", o.predictions)->required();
  evaluate->add_option("--out", o.out);

  auto* aggregate = app.add_subcommand("aggregate", "Aggregate image quality to regions");
  auto* src_pred = aggregate->add_option("--predictions", o.predictions);
  auto* src_data = aggregate->add_option("--data", o.data);
  src_pred->excludes(src_data);
  aggregate->add_option("--level", o.level, "village, township, county or all");
  aggregate->add_option("--min-images", o.min_images);
  aggregate->add_option("--out", o.out);

  auto* gini_cmd = app.add_subcommand("gini", "Gini coefficient of comma-separated values");
  gini_cmd->add_option("--values", o.values)->required();

  auto* correlate = app.add_subcommand("correlate", "Correlate county aggregates with indicators");
  correlate->add_option("--aggregates", o.aggregates)->required();
  correlate->add_option("--indicators", o.indicators)->required();
  correlate->add_option("--out", o.out);

  auto* report = app.add_subcommand("report", "Predict, evaluate, aggregate and summarize into one directory");
  report->add_option("--data", o.data)->required();
  report->add_option("--checkpoint", o.checkpoint);
  report->add_option("--split", o.split_file);
  report->add_option("--min-raters", o.min_raters);
  report->add_option("--gap-level", o.gap_level);
  report->add_option("--out", o.out);

  if (argc >= 2 && argv[1][0] != '-') {
    const std::string name = argv[1];
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == name;
    if (!known) {
      err << "unknown command: " << name << "\n" << "commands: synth ingest serve train predict evaluate aggregate "
          << "gini correlate report\n";
      return kExitUsage;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (src_data->count() == 0 && src_pred->count() == 0 && aggregate->parsed()) {
    err << "aggregate: one of --predictions or --data is required\n";
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (ingest->parsed()) return cmd_ingest(o, out);
    if (serve->parsed()) return cmd_serve(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (evaluate->parsed()) return cmd_evaluate(o, out);
    if (aggregate->parsed()) return cmd_aggregate(o, out);
    if (gini_cmd->parsed()) return cmd_gini(o, out);
    if (correlate->parsed()) return cmd_correlate(o, out);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_numerical(e.kind()) ? kExitNumerical : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace hqa::cli

#include "hqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "hqa/error.hpp"

namespace hqa {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, key + ": not a number: '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, key + ": not an integer: '" + v + "'");
  }
}

// Single-precision storage for trained weights.
void round_to_float(Parameters& p) {
  for (auto& t : p)
    for (auto& v : t.value.data()) v = static_cast<double>(static_cast<float>(v));
}

class OptimizerState {
 public:
  OptimizerState(const TrainConfig& cfg, const Parameters& params)
      : kind_(cfg.optimizer), momentum_(cfg.momentum), m_(params.zeros_like()), v_(params.zeros_like()) {}

  void step(Parameters& params, const Parameters& grads, double lr) {
    ++t_;
    if (kind_ == Optimizer::SgdMomentum) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].value.data();
        auto g = grads[k].value.data();
        auto m = m_[k].value.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = momentum_ * m[i] + g[i];
          w[i] -= lr * m[i];
        }
      }
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double c1 = 1.0 - std::pow(b1, t_);
      const double c2 = 1.0 - std::pow(b2, t_);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].value.data();
        auto g = grads[k].value.data();
        auto m = m_[k].value.data();
        auto v = v_[k].value.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = b1 * m[i] + (1 - b1) * g[i];
          v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
          w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
      }
    }
    round_to_float(params);
  }

 private:
  Optimizer kind_;
  double momentum_;
  Parameters m_, v_;
  long long t_ = 0;
};

struct Dataset {
  std::vector<std::string> ids;
  Tensor inputs;   // N x 3 x S x S
  Tensor targets;  // N x 10
};

Dataset load_dataset(const Corpus& corpus, const std::vector<std::string>& ids, int side, const RasterSource& source) {
  Dataset d;
  d.ids = ids;
  std::vector<Raster> rasters;
  rasters.reserve(ids.size());
  d.targets = Tensor({ids.size(), static_cast<std::size_t>(kScoreBins)});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rasters.push_back(source(corpus.image(ids[i])));
    const auto dist = corpus.distribution_of(ids[i]);
    std::copy(dist.p.begin(), dist.p.end(), d.targets.row(i).begin());
  }
  d.inputs = images_to_batch(rasters, side);
  return d;
}

// Copies the listed rows of a dataset into contiguous batch tensors.
std::pair<Tensor, Tensor> gather(const Dataset& d, std::span<const std::size_t> rows) {
  auto in_shape = d.inputs.shape();
  const std::size_t stride = d.inputs.size() / in_shape[0];
  in_shape[0] = rows.size();
  Tensor x(in_shape);
  Tensor y({rows.size(), static_cast<std::size_t>(kScoreBins)});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(d.inputs.ptr() + rows[i] * stride, stride, x.ptr() + i * stride);
    std::copy_n(d.targets.ptr() + rows[i] * kScoreBins, kScoreBins, y.ptr() + i * kScoreBins);
  }
  return {std::move(x), std::move(y)};
}

Tensor predict_all(const NetworkSpec& spec, const Parameters& params, const Dataset& d, int batch_size) {
  const std::size_t n = d.ids.size();
  Tensor out({n, static_cast<std::size_t>(kScoreBins)});
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    rows.clear();
    for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) rows.push_back(i);
    const auto [x, y] = gather(d, rows);
    const Tensor p = forward(spec, params, x);
    std::copy(p.data().begin(), p.data().end(), out.ptr() + start * kScoreBins);
  }
  return out;
}

}  // namespace

const char* to_string(Optimizer o) noexcept { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "sgd" || name == "sgd_momentum") return Optimizer::SgdMomentum;
  if (name == "adam") return Optimizer::Adam;
  throw Error(ErrorKind::InvalidConfig, "unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) fail("lr_decay_factor must lie in (0,1]");
  if (plateau_patience < 1) fail("plateau_patience must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0,1)");
  if (min_raters < 1) fail("min_raters must be >= 1");
  double s = 0.0;
  for (double r : split) {
    if (!(r > 0.0)) fail("split ratios must be positive");
    s += r;
  }
  if (std::abs(s - 1.0) > 1e-9) fail("split ratios must sum to 1");
}

void set_train_option(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "lr0" || key == "lr") cfg.lr0 = parse_double(key, value);
  else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_double(key, value);
  else if (key == "plateau_patience") cfg.plateau_patience = static_cast<int>(parse_int(key, value));
  else if (key == "momentum") cfg.momentum = parse_double(key, value);
  else if (key == "optimizer") cfg.optimizer = optimizer_from_string(value);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "min_raters") cfg.min_raters = static_cast<int>(parse_int(key, value));
  else if (key == "split") {
    std::stringstream ss(value);
    std::string part;
    std::vector<double> parts;
    while (std::getline(ss, part, '/')) parts.push_back(parse_double(key, trim(part)));
    if (parts.size() != 3) throw Error(ErrorKind::InvalidConfig, "split needs three ratios like 0.8/0.1/0.1");
    cfg.split = {parts[0], parts[1], parts[2]};
  } else {
    throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "'");
  }
}

TrainConfig parse_train_config(const std::string& text, TrainConfig cfg) {
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(lineno) + ": expected key=value");
    set_train_option(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig read_train_config(const std::filesystem::path& path, TrainConfig cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), cfg);
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
    out << buf;
  }
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
}

DatasetSplit split_dataset(std::vector<std::string> image_ids, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  if (image_ids.empty()) throw Error(ErrorKind::EmptyDataset, "no images to split");
  TrainConfig probe;
  probe.split = ratios;
  probe.validate();
  std::sort(image_ids.begin(), image_ids.end());
  if (std::adjacent_find(image_ids.begin(), image_ids.end()) != image_ids.end())
    throw Error(ErrorKind::InvalidConfig, "image ids must be unique");
  std::mt19937_64 rng(seed);
  std::shuffle(image_ids.begin(), image_ids.end(), rng);
  const double n = static_cast<double>(image_ids.size());
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios[2] + 1e-9));
  const std::size_t n_train = image_ids.size() - n_val - n_test;
  DatasetSplit s;
  s.train.assign(image_ids.begin(), image_ids.begin() + n_train);
  s.validation.assign(image_ids.begin() + n_train, image_ids.begin() + n_train + n_val);
  s.test.assign(image_ids.begin() + n_train + n_val, image_ids.end());
  return s;
}

PlateauScheduler::PlateauScheduler(double lr0, double factor, int patience)
    : lr_(lr0), factor_(factor), patience_(patience), best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::observe(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

RasterSource file_raster_source(const Corpus& corpus) {
  return [&corpus](const ImageRecord& r) { return read_raster(corpus.resolve(r.pixels_ref)); };
}

Tensor images_to_batch(std::span<const Raster> rasters, int side) {
  const std::size_t s = static_cast<std::size_t>(side);
  Tensor out({rasters.size(), 3, s, s});
  for (std::size_t n = 0; n < rasters.size(); ++n) {
    const Raster r = resize_square(rasters[n], side);
    double* base = out.ptr() + n * 3 * s * s;
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        for (int c = 0; c < 3; ++c)
          base[(c * s + y) * s + x] = r.at(static_cast<int>(x), static_cast<int>(y), c) / 255.0;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, const NetworkSpec& spec,
                  const RasterSource& source, const BatchObserver& observer) {
  config.validate();
  validate_spec(spec);
  const RasterSource src = source ? source : file_raster_source(corpus);

  TrainResult result;
  const auto ids = corpus.qualified_images(config.min_raters);
  if (ids.empty()) throw Error(ErrorKind::EmptySplit, "no qualified images (need >= " +
                                                          std::to_string(config.min_raters) + " ballots each)");
  result.split = split_dataset(ids, config.split, derive_seed(config.seed, 0));
  if (result.split.train.empty() || result.split.validation.empty() || result.split.test.empty())
    throw Error(ErrorKind::EmptySplit, "split of " + std::to_string(ids.size()) + " qualified images leaves an empty set (" +
                                           std::to_string(result.split.train.size()) + "/" +
                                           std::to_string(result.split.validation.size()) + "/" +
                                           std::to_string(result.split.test.size()) + ")");

  Parameters params = build_network(spec, derive_seed(config.seed, 1));
  result.params = params;
  const Dataset train_set = load_dataset(corpus, result.split.train, spec.input_side, src);
  const Dataset val_set = load_dataset(corpus, result.split.validation, spec.input_side, src);

  double best_val = distribution_mse(predict_all(spec, params, val_set, config.batch_size), val_set.targets);
  result.initial_val_loss = best_val;
  if (config.epochs == 0) return result;

  OptimizerState opt(config, params);
  PlateauScheduler sched(config.lr0, config.lr_decay_factor, config.plateau_patience);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(train_set.ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = sched.lr();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const auto [x, y] = gather(train_set, rows);
      auto lg = loss_and_gradients(spec, params, x, y);
      if (!std::isfinite(lg.loss))
        throw Error(ErrorKind::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                 std::to_string(batch_index));
      if (observer) observer({epoch, batch_index, &lg.predictions, &y, lg.loss});
      loss_sum += lg.loss * static_cast<double>(rows.size());
      opt.step(params, lg.gradients, lr);
      ++batch_index;
    }
    const double val = distribution_mse(predict_all(spec, params, val_set, config.batch_size), val_set.targets);
    if (!std::isfinite(val)) throw Error(ErrorKind::DivergedLoss, "non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.epochs.push_back({epoch, loss_sum / static_cast<double>(order.size()), val, lr});
    if (val < best_val) {
      best_val = val;
      result.params = params;
      result.best_epoch = epoch;
    }
    sched.observe(val);
  }
  return result;
}

std::vector<Prediction> predict_corpus(const NetworkSpec& spec, const Parameters& params, const Corpus& corpus,
                                       const std::vector<std::string>& image_ids, int batch_size,
                                       const RasterSource& source) {
  if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  const RasterSource src = source ? source : file_raster_source(corpus);
  std::vector<Prediction> out;
  out.reserve(image_ids.size());
  for (std::size_t start = 0; start < image_ids.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(image_ids.size(), start + batch_size);
    std::vector<Raster> rasters;
    for (std::size_t i = start; i < stop; ++i) rasters.push_back(src(corpus.image(image_ids[i])));
    const Tensor p = forward(spec, params, images_to_batch(rasters, spec.input_side));
    for (std::size_t i = start; i < stop; ++i)
      out.push_back({image_ids[i], ScoreDistribution::from_probabilities(p.row(i - start))});
  }
  return out;
}

}  // namespace hqa

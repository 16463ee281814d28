#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hqa/corpus.hpp"
#include "hqa/network.hpp"
#include "hqa/raster.hpp"

namespace hqa {

enum class Optimizer { SgdMomentum, Adam };

const char* to_string(Optimizer o) noexcept;
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
  int batch_size = 32;
  int epochs = 100;
  double lr0 = 1e-5;
  double lr_decay_factor = 0.1;
  int plateau_patience = 5;
  double momentum = 0.9;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  int min_raters = kQualifiedRaters;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Applies `key = value` lines (# comments allowed) on top of cfg.
/// Throws InvalidConfig on unknown keys or bad values.
TrainConfig parse_train_config(const std::string& text, TrainConfig cfg = {});
TrainConfig read_train_config(const std::filesystem::path& path, TrainConfig cfg = {});
/// Sets a single key; the same vocabulary as parse_train_config.
void set_train_option(TrainConfig& cfg, const std::string& key, const std::string& value);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// Writes epoch,train_loss,val_loss,lr.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

struct DatasetSplit {
  std::vector<std::string> train, validation, test;
};

/// Deterministic shuffle, then floor allocation for validation and test with
/// the remainder going to train. Throws EmptyDataset, InvalidConfig.
DatasetSplit split_dataset(std::vector<std::string> image_ids, const std::array<double, 3>& ratios,
                           std::uint64_t seed);

/// Reduce-on-plateau: multiplies the rate by `factor` after `patience`
/// consecutive epochs without a strict improvement in validation loss.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, int patience);
  double lr() const noexcept { return lr_; }
  /// Feeds one epoch's validation loss; returns the rate for the next epoch.
  double observe(double val_loss);

 private:
  double lr_;
  double factor_;
  int patience_;
  double best_;
  int bad_epochs_ = 0;
};

/// Supplies the pixels of a record. The default reads corpus.resolve(pixels_ref).
using RasterSource = std::function<Raster(const ImageRecord&)>;
RasterSource file_raster_source(const Corpus& corpus);

/// N x 3 x S x S tensor with channel values scaled to [0,1].
Tensor images_to_batch(std::span<const Raster> rasters, int side);

struct BatchRecord {
  int epoch = 0;
  int batch = 0;
  const Tensor* predictions = nullptr;
  const Tensor* targets = nullptr;
  double loss = 0.0;
};
using BatchObserver = std::function<void(const BatchRecord&)>;

struct TrainResult {
  Parameters params;
  TrainHistory history;
  DatasetSplit split;
  double initial_val_loss = 0.0;
  int best_epoch = 0;  // 0 when no epoch ran
};

/// Seeds fanned out from TrainConfig::seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Mini-batch training on the qualified images of the corpus. Returns the
/// parameters of the epoch with the lowest validation loss.
/// Throws EmptySplit, DivergedLoss, UnreadableRaster.
TrainResult train(const Corpus& corpus, const TrainConfig& config, const NetworkSpec& spec,
                  const RasterSource& source = {}, const BatchObserver& observer = {});

struct Prediction {
  std::string image_id;
  ScoreDistribution distribution;
};

/// One prediction per listed id, in input order. Each image is computed
/// independently of its batch mates. Throws UnknownImage, UnreadableRaster.
std::vector<Prediction> predict_corpus(const NetworkSpec& spec, const Parameters& params, const Corpus& corpus,
                                       const std::vector<std::string>& image_ids, int batch_size = 32,
                                       const RasterSource& source = {});

}  // namespace hqa

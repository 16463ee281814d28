#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hqa/tensor.hpp"

namespace hqa {

struct DenseBlockSpec {
  int n_units = 2;
  int growth_rate = 8;
  bool operator==(const DenseBlockSpec&) const = default;
};

struct TransitionSpec {
  double compression = 0.5;
  bool operator==(const TransitionSpec&) const = default;
};

/// DenseNet-lite: 3x3 stem convolution, four dense blocks joined by three
/// transitions (1x1 conv + 2x2 average pool), global average pool, and a
/// fully connected 10-way head with softmax. ReLU follows every convolution.
struct NetworkSpec {
  int input_side = 64;
  int stem_channels = 16;
  int stem_stride = 1;
  /// Width of each unit's 1x1 bottleneck, as a multiple of the growth rate.
  int bottleneck_factor = 4;
  std::vector<DenseBlockSpec> blocks;
  std::vector<TransitionSpec> transitions;
  int head_outputs = 10;

  /// 64x64 input, stride-2 stem of 16 channels, 2 units per block, growth 8,
  /// compression 0.5.
  static NetworkSpec desk();
  /// 8x8 input, stem 4, 1 unit per block, growth 4: for gradient checks.
  static NetworkSpec tiny();

  bool operator==(const NetworkSpec&) const = default;
};

/// Channel and spatial bookkeeping derived from a spec.
struct NetworkPlan {
  struct Block {
    int side = 0;
    int in_channels = 0;
    int out_channels = 0;
    int growth_rate = 0;
    int bottleneck = 0;
    std::vector<int> unit_in_channels;
  };
  struct Transition {
    int in_channels = 0;
    int out_channels = 0;
    int side_in = 0;
    int side_out = 0;
  };
  int stem_side = 0;
  std::vector<Block> blocks;
  std::vector<Transition> transitions;
  int head_in = 0;
};

/// Throws InvalidSpec.
NetworkPlan plan_network(const NetworkSpec& spec);
void validate_spec(const NetworkSpec& spec);

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

/// Ordered weight tensors: layer order, kernel before bias.
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(std::vector<NamedTensor> tensors) : tensors_(std::move(tensors)) {}

  std::size_t size() const noexcept { return tensors_.size(); }
  NamedTensor& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return tensors_[i]; }
  auto begin() noexcept { return tensors_.begin(); }
  auto end() noexcept { return tensors_.end(); }
  auto begin() const noexcept { return tensors_.begin(); }
  auto end() const noexcept { return tensors_.end(); }

  /// Total scalar count.
  std::size_t count() const noexcept;
  const Tensor* find(const std::string& name) const;
  Tensor* find(const std::string& name);
  /// Same names and shapes, all zeros.
  Parameters zeros_like() const;

  bool operator==(const Parameters&) const = default;

 private:
  std::vector<NamedTensor> tensors_;
};

struct ParameterShape {
  std::string name;
  std::vector<std::size_t> shape;
};
std::vector<ParameterShape> parameter_shapes(const NetworkSpec& spec);

/// He-normal (variance 2/fan_in) weights, zero biases; values are rounded to
/// single precision so checkpoints reproduce them exactly.
Parameters build_network(const NetworkSpec& spec, std::uint64_t seed);

struct ActivationRecord {
  std::string layer;
  std::vector<std::size_t> shape;
};

/// batch: N x 3 x S x S. Returns N x 10 rows on the probability simplex.
/// Throws ShapeMismatch.
Tensor forward(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
               std::vector<ActivationRecord>* trace = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  Parameters gradients;
  Tensor predictions;
};

/// Mean over bins of the per-bin mean squared error between predicted and
/// target distributions, with exact backpropagated gradients.
/// Throws ShapeMismatch, NonDistributionTarget.
LossAndGradients loss_and_gradients(const NetworkSpec& spec, const Parameters& params,
                                    const Tensor& batch, const Tensor& targets);

/// (1/10) sum_j (1/N) sum_i (pred_ij - target_ij)^2. Throws ShapeMismatch.
double distribution_mse(const Tensor& predictions, const Tensor& targets);

/// Throws NonDistributionTarget when a row is negative or does not sum to 1 within tol.
void validate_distribution_rows(const Tensor& targets, double tol = 1e-6);

}  // namespace hqa

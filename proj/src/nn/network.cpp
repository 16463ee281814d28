#include "hqa/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hqa/error.hpp"
#include "kernels.hpp"

namespace hqa {
namespace {

using kernels::ConvGeometry;

constexpr int kBlocks = 4;
constexpr int kTransitions = 3;
constexpr int kHeadOutputs = 10;
constexpr int kInputChannels = 3;

std::string block_name(int b) { return "block" + std::to_string(b + 1); }
std::string unit_name(int b, int u) { return block_name(b) + ".unit" + std::to_string(u + 1); }
std::string transition_name(int t) { return "transition" + std::to_string(t + 1); }

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

// Per-layer geometry and parameter slots, in parameter order.
struct Layout {
  NetworkPlan plan;
  ConvGeometry stem;
  struct Unit {
    ConvGeometry reduce;  // 1x1
    ConvGeometry expand;  // 3x3
    std::size_t reduce_w, expand_w;
  };
  std::vector<std::vector<Unit>> units;
  std::vector<ConvGeometry> transitions;
  std::vector<std::size_t> transition_w;
  std::size_t stem_w = 0;
  std::size_t head_w = 0;
};

Layout make_layout(const NetworkSpec& spec) {
  Layout l;
  l.plan = plan_network(spec);
  std::size_t slot = 0;
  l.stem = {kInputChannels, spec.stem_channels, 3, spec.stem_stride, 1, spec.input_side, l.plan.stem_side};
  l.stem_w = slot;
  slot += 2;
  for (int b = 0; b < kBlocks; ++b) {
    const auto& pb = l.plan.blocks[b];
    std::vector<Layout::Unit> us;
    for (int cin : pb.unit_in_channels) {
      Layout::Unit u;
      u.reduce = {cin, pb.bottleneck, 1, 1, 0, pb.side, pb.side};
      u.expand = {pb.bottleneck, pb.growth_rate, 3, 1, 1, pb.side, pb.side};
      u.reduce_w = slot;
      u.expand_w = slot + 2;
      slot += 4;
      us.push_back(u);
    }
    l.units.push_back(std::move(us));
    if (b < kTransitions) {
      const auto& pt = l.plan.transitions[b];
      l.transitions.push_back({pt.in_channels, pt.out_channels, 1, 1, 0, pt.side_in, pt.side_in});
      l.transition_w.push_back(slot);
      slot += 2;
    }
  }
  l.head_w = slot;
  return l;
}

void check_params(const NetworkSpec& spec, const Parameters& params) {
  const auto shapes = parameter_shapes(spec);
  if (shapes.size() != params.size())
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(shapes.size()) + " tensors, got " +
                                              std::to_string(params.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (params[i].value.shape() != shapes[i].shape)
      throw Error(ErrorKind::ShapeMismatch, shapes[i].name + " has shape " + shape_string(params[i].value.shape()) +
                                                ", expected " + shape_string(shapes[i].shape));
}

void check_batch(const NetworkSpec& spec, const Tensor& batch) {
  const auto& s = batch.shape();
  if (s.size() != 4 || s[0] < 1 || s[1] != sz(kInputChannels) || s[2] != sz(spec.input_side) ||
      s[3] != sz(spec.input_side))
    throw Error(ErrorKind::ShapeMismatch, "batch shape " + shape_string(s) + " does not match Nx3x" +
                                              std::to_string(spec.input_side) + "x" +
                                              std::to_string(spec.input_side));
}

// Activations retained for the backward pass.
struct Activations {
  std::vector<Tensor> features;                 // per block: N x C_total x H x W
  std::vector<std::vector<Tensor>> bottleneck;  // per block, per unit
  std::vector<Tensor> transition;               // post-ReLU, pre-pool
  Tensor pooled;                                // N x C
  Tensor logits;
  Tensor probs;
};

class Engine {
 public:
  Engine(const NetworkSpec& spec, const Parameters& params) : spec_(spec), params_(params), layout_(make_layout(spec)) {
    check_params(spec, params);
  }

  Activations run_forward(const Tensor& batch, std::vector<ActivationRecord>* trace) {
    check_batch(spec_, batch);
    const std::size_t n = batch.dim(0);
    const auto& plan = layout_.plan;
    Activations a;
    for (int b = 0; b < kBlocks; ++b) {
      const auto& pb = plan.blocks[b];
      a.features.emplace_back(std::vector<std::size_t>{n, sz(pb.out_channels), sz(pb.side), sz(pb.side)});
      std::vector<Tensor> bn;
      for (std::size_t u = 0; u < pb.unit_in_channels.size(); ++u)
        bn.emplace_back(std::vector<std::size_t>{n, sz(pb.bottleneck), sz(pb.side), sz(pb.side)});
      a.bottleneck.push_back(std::move(bn));
    }
    for (int t = 0; t < kTransitions; ++t) {
      const auto& pt = plan.transitions[t];
      a.transition.emplace_back(std::vector<std::size_t>{n, sz(pt.out_channels), sz(pt.side_in), sz(pt.side_in)});
    }

    const std::size_t in_stride = batch.size() / n;
    for (std::size_t s = 0; s < n; ++s) {
      conv(layout_.stem, layout_.stem_w, batch.ptr() + s * in_stride, sample(a.features[0], s));
      for (int b = 0; b < kBlocks; ++b) {
        const auto& pb = plan.blocks[b];
        double* feat = sample(a.features[b], s);
        const std::size_t hw = sz(pb.side) * sz(pb.side);
        for (std::size_t u = 0; u < layout_.units[b].size(); ++u) {
          const auto& unit = layout_.units[b][u];
          double* bott = sample(a.bottleneck[b][u], s);
          conv(unit.reduce, unit.reduce_w, feat, bott);
          conv(unit.expand, unit.expand_w, bott, feat + sz(pb.unit_in_channels[u]) * hw);
        }
        if (b < kTransitions) {
          const auto& pt = plan.transitions[b];
          double* tr = sample(a.transition[b], s);
          conv(layout_.transitions[b], layout_.transition_w[b], feat, tr);
          avg_pool(tr, pt.out_channels, pt.side_in, pt.side_out, sample(a.features[b + 1], s));
        }
      }
    }
    if (trace) record(a, *trace);

    const auto& last = plan.blocks.back();
    const std::size_t c = sz(last.out_channels);
    const std::size_t hw = sz(last.side) * sz(last.side);
    a.pooled = Tensor({n, c});
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = a.features.back().ptr() + (s * c + ch) * hw;
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += plane[p];
        a.pooled[s * c + ch] = acc / static_cast<double>(hw);
      }

    const Tensor& w = params_[layout_.head_w].value;
    const Tensor& bias = params_[layout_.head_w + 1].value;
    a.logits = Tensor({n, sz(kHeadOutputs)});
    a.probs = Tensor({n, sz(kHeadOutputs)});
    for (std::size_t s = 0; s < n; ++s) {
      auto z = a.logits.row(s);
      for (int o = 0; o < kHeadOutputs; ++o) {
        double acc = bias[o];
        for (std::size_t ch = 0; ch < c; ++ch) acc += w[o * c + ch] * a.pooled[s * c + ch];
        z[o] = acc;
      }
      const double zmax = *std::max_element(z.begin(), z.end());
      auto p = a.probs.row(s);
      double total = 0.0;
      for (int o = 0; o < kHeadOutputs; ++o) total += (p[o] = std::exp(z[o] - zmax));
      for (int o = 0; o < kHeadOutputs; ++o) p[o] /= total;
    }
    if (trace) {
      trace->push_back({"gap", a.pooled.shape()});
      trace->push_back({"head", a.probs.shape()});
    }
    return a;
  }

  // dprobs: N x 10 gradient of the loss wrt the softmax outputs.
  Parameters run_backward(const Tensor& batch, Activations& a, const Tensor& dprobs) {
    Parameters grads = params_.zeros_like();
    const std::size_t n = batch.dim(0);
    const auto& plan = layout_.plan;
    const std::size_t c = sz(plan.blocks.back().out_channels);

    // Softmax and head.
    const Tensor& w = params_[layout_.head_w].value;
    Tensor& dw = grads[layout_.head_w].value;
    Tensor& db = grads[layout_.head_w + 1].value;
    Tensor dpooled({n, c});
    for (std::size_t s = 0; s < n; ++s) {
      auto p = a.probs.row(s);
      auto g = dprobs.row(s);
      double dot = 0.0;
      for (int o = 0; o < kHeadOutputs; ++o) dot += g[o] * p[o];
      for (int o = 0; o < kHeadOutputs; ++o) {
        const double dz = p[o] * (g[o] - dot);
        db[o] += dz;
        for (std::size_t ch = 0; ch < c; ++ch) {
          dw[o * c + ch] += dz * a.pooled[s * c + ch];
          dpooled[s * c + ch] += dz * w[o * c + ch];
        }
      }
    }

    std::vector<Tensor> dfeat;
    for (const auto& f : a.features) dfeat.emplace_back(f.shape());
    {
      const auto& last = plan.blocks.back();
      const std::size_t hw = sz(last.side) * sz(last.side);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double v = dpooled[s * c + ch] / static_cast<double>(hw);
          double* plane = dfeat.back().ptr() + (s * c + ch) * hw;
          for (std::size_t p = 0; p < hw; ++p) plane[p] = v;
        }
    }

    const std::size_t in_stride = batch.size() / n;
    for (std::size_t s = 0; s < n; ++s) {
      for (int b = kBlocks - 1; b >= 0; --b) {
        const auto& pb = plan.blocks[b];
        const std::size_t hw = sz(pb.side) * sz(pb.side);
        double* feat = sample(a.features[b], s);
        double* dfe = sample(dfeat[b], s);
        if (b < kTransitions) {
          const auto& pt = plan.transitions[b];
          dtrans_.assign(sz(pt.out_channels) * sz(pt.side_in) * sz(pt.side_in), 0.0);
          avg_pool_backward(sample(dfeat[b + 1], s), pt.out_channels, pt.side_in, pt.side_out, dtrans_.data());
          conv_back(layout_.transitions[b], layout_.transition_w[b], feat, sample(a.transition[b], s),
                    dtrans_.data(), dfe, grads);
        }
        for (int u = static_cast<int>(layout_.units[b].size()) - 1; u >= 0; --u) {
          const auto& unit = layout_.units[b][u];
          const std::size_t off = sz(pb.unit_in_channels[u]) * hw;
          double* bott = sample(a.bottleneck[b][u], s);
          dbott_.assign(sz(pb.bottleneck) * hw, 0.0);
          conv_back(unit.expand, unit.expand_w, bott, feat + off, dfe + off, dbott_.data(), grads);
          conv_back(unit.reduce, unit.reduce_w, feat, bott, dbott_.data(), dfe, grads);
        }
      }
      conv_back(layout_.stem, layout_.stem_w, batch.ptr() + s * in_stride, sample(a.features[0], s),
                sample(dfeat[0], s), nullptr, grads);
    }
    return grads;
  }

 private:
  static double* sample(Tensor& t, std::size_t s) { return t.ptr() + s * (t.size() / t.dim(0)); }

  void conv(const ConvGeometry& g, std::size_t slot, const double* in, double* out) {
    kernels::conv_relu_forward(g, in, params_[slot].value.ptr(), params_[slot + 1].value.ptr(), out, col_);
  }

  // The first out_channels planes of `out` are the layer output; `dout` aliases
  // the matching gradient planes and is masked in place.
  void conv_back(const ConvGeometry& g, std::size_t slot, const double* in, const double* out, double* dout,
                 double* din, Parameters& grads) {
    kernels::conv_relu_backward(g, in, params_[slot].value.ptr(), out, dout, grads[slot].value.ptr(),
                                grads[slot + 1].value.ptr(), din, col_, scratch_);
  }

  static void avg_pool(const double* in, int channels, int side_in, int side_out, double* out) {
    for (int ch = 0; ch < channels; ++ch) {
      const double* pl = in + sz(ch) * side_in * side_in;
      double* po = out + sz(ch) * side_out * side_out;
      for (int y = 0; y < side_out; ++y)
        for (int x = 0; x < side_out; ++x) {
          const double* r0 = pl + sz(2 * y) * side_in + 2 * x;
          const double* r1 = r0 + side_in;
          po[y * side_out + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
        }
    }
  }

  static void avg_pool_backward(const double* dout, int channels, int side_in, int side_out, double* din) {
    for (int ch = 0; ch < channels; ++ch) {
      const double* go = dout + sz(ch) * side_out * side_out;
      double* gi = din + sz(ch) * side_in * side_in;
      for (int y = 0; y < side_out; ++y)
        for (int x = 0; x < side_out; ++x) {
          const double v = 0.25 * go[y * side_out + x];
          double* r0 = gi + sz(2 * y) * side_in + 2 * x;
          double* r1 = r0 + side_in;
          r0[0] += v;
          r0[1] += v;
          r1[0] += v;
          r1[1] += v;
        }
    }
  }

  void record(const Activations& a, std::vector<ActivationRecord>& trace) const {
    const auto& plan = layout_.plan;
    const std::size_t n = a.features[0].dim(0);
    trace.push_back({"stem", {n, sz(spec_.stem_channels), sz(plan.stem_side), sz(plan.stem_side)}});
    for (int b = 0; b < kBlocks; ++b) {
      const auto& pb = plan.blocks[b];
      for (std::size_t u = 0; u < pb.unit_in_channels.size(); ++u)
        trace.push_back({unit_name(b, static_cast<int>(u)) + ".input",
                         {n, sz(pb.unit_in_channels[u]), sz(pb.side), sz(pb.side)}});
      trace.push_back({block_name(b) + ".output", a.features[b].shape()});
      if (b < kTransitions) {
        const auto& pt = plan.transitions[b];
        trace.push_back({transition_name(b), {n, sz(pt.out_channels), sz(pt.side_out), sz(pt.side_out)}});
      }
    }
  }

  const NetworkSpec& spec_;
  const Parameters& params_;
  Layout layout_;
  std::vector<double> col_, scratch_, dtrans_, dbott_;
};

}  // namespace

NetworkSpec NetworkSpec::desk() {
  NetworkSpec s;
  s.input_side = 64;
  s.stem_channels = 16;
  s.stem_stride = 2;
  s.bottleneck_factor = 4;
  s.blocks.assign(kBlocks, DenseBlockSpec{2, 8});
  s.transitions.assign(kTransitions, TransitionSpec{0.5});
  return s;
}

NetworkSpec NetworkSpec::tiny() {
  NetworkSpec s;
  s.input_side = 8;
  s.stem_channels = 4;
  s.stem_stride = 1;
  s.bottleneck_factor = 2;
  s.blocks.assign(kBlocks, DenseBlockSpec{1, 4});
  s.transitions.assign(kTransitions, TransitionSpec{0.5});
  return s;
}

NetworkPlan plan_network(const NetworkSpec& spec) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidSpec, msg); };
  if (spec.blocks.size() != kBlocks) fail("exactly 4 dense blocks required, got " + std::to_string(spec.blocks.size()));
  if (spec.transitions.size() != kTransitions)
    fail("exactly 3 transitions required, got " + std::to_string(spec.transitions.size()));
  if (spec.head_outputs != kHeadOutputs) fail("head must have 10 outputs");
  if (spec.input_side < 1) fail("input_side must be positive");
  if (spec.stem_channels < 1) fail("stem_channels must be positive");
  if (spec.stem_stride < 1) fail("stem_stride must be positive");
  if (spec.bottleneck_factor < 1) fail("bottleneck_factor must be positive");

  NetworkPlan plan;
  plan.stem_side = (spec.input_side - 1) / spec.stem_stride + 1;
  int side = plan.stem_side;
  int channels = spec.stem_channels;
  for (int b = 0; b < kBlocks; ++b) {
    const auto& bs = spec.blocks[b];
    if (bs.n_units < 1) fail(block_name(b) + ": n_units must be >= 1");
    if (bs.growth_rate < 1) fail(block_name(b) + ": growth_rate must be >= 1");
    NetworkPlan::Block pb;
    pb.side = side;
    pb.in_channels = channels;
    pb.growth_rate = bs.growth_rate;
    pb.bottleneck = spec.bottleneck_factor * bs.growth_rate;
    for (int u = 0; u < bs.n_units; ++u) pb.unit_in_channels.push_back(channels + u * bs.growth_rate);
    channels += bs.n_units * bs.growth_rate;
    pb.out_channels = channels;
    plan.blocks.push_back(pb);
    if (b < kTransitions) {
      const double comp = spec.transitions[b].compression;
      if (!(comp > 0.0 && comp <= 1.0)) fail(transition_name(b) + ": compression must lie in (0,1]");
      NetworkPlan::Transition pt;
      pt.in_channels = channels;
      pt.out_channels = static_cast<int>(std::floor(comp * channels));
      if (pt.out_channels < 1) fail(transition_name(b) + ": compression leaves no channels");
      pt.side_in = side;
      pt.side_out = side / 2;
      if (pt.side_out < 1)
        fail(transition_name(b) + ": spatial size collapses below 1x1 (input side " + std::to_string(side) + ")");
      plan.transitions.push_back(pt);
      side = pt.side_out;
      channels = pt.out_channels;
    }
  }
  plan.head_in = channels;
  return plan;
}

void validate_spec(const NetworkSpec& spec) { plan_network(spec); }

std::size_t Parameters::count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

const Tensor* Parameters::find(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return &t.value;
  return nullptr;
}

Tensor* Parameters::find(const std::string& name) {
  for (auto& t : tensors_)
    if (t.name == name) return &t.value;
  return nullptr;
}

Parameters Parameters::zeros_like() const {
  std::vector<NamedTensor> out;
  out.reserve(tensors_.size());
  for (const auto& t : tensors_) out.push_back({t.name, Tensor(t.value.shape())});
  return Parameters(std::move(out));
}

std::vector<ParameterShape> parameter_shapes(const NetworkSpec& spec) {
  const auto plan = plan_network(spec);
  std::vector<ParameterShape> out;
  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    out.push_back({name + ".weight", {sz(cout), sz(cin), sz(k), sz(k)}});
    out.push_back({name + ".bias", {sz(cout)}});
  };
  conv("stem.conv", spec.stem_channels, kInputChannels, 3);
  for (int b = 0; b < kBlocks; ++b) {
    const auto& pb = plan.blocks[b];
    for (std::size_t u = 0; u < pb.unit_in_channels.size(); ++u) {
      conv(unit_name(b, static_cast<int>(u)) + ".conv1x1", pb.bottleneck, pb.unit_in_channels[u], 1);
      conv(unit_name(b, static_cast<int>(u)) + ".conv3x3", pb.growth_rate, pb.bottleneck, 3);
    }
    if (b < kTransitions) {
      const auto& pt = plan.transitions[b];
      conv(transition_name(b) + ".conv", pt.out_channels, pt.in_channels, 1);
    }
  }
  out.push_back({"head.fc.weight", {sz(kHeadOutputs), sz(plan.head_in)}});
  out.push_back({"head.fc.bias", {sz(kHeadOutputs)}});
  return out;
}

Parameters build_network(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NamedTensor> tensors;
  for (auto& ps : parameter_shapes(spec)) {
    Tensor t(ps.shape);
    if (ps.shape.size() > 1) {
      const std::size_t fan_in = t.size() / ps.shape[0];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& v : t.data()) v = static_cast<double>(static_cast<float>(dist(rng)));
    }
    tensors.push_back({std::move(ps.name), std::move(t)});
  }
  return Parameters(std::move(tensors));
}

Tensor forward(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
               std::vector<ActivationRecord>* trace) {
  Engine engine(spec, params);
  return std::move(engine.run_forward(batch, trace).probs);
}

double distribution_mse(const Tensor& predictions, const Tensor& targets) {
  if (predictions.shape() != targets.shape() || predictions.rank() != 2 || predictions.dim(1) != sz(kHeadOutputs))
    throw Error(ErrorKind::ShapeMismatch, "predictions " + shape_string(predictions.shape()) + " vs targets " +
                                              shape_string(targets.shape()));
  const std::size_t n = predictions.dim(0);
  double total = 0.0;
  for (std::size_t j = 0; j < sz(kHeadOutputs); ++j) {
    double bin = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = predictions[i * kHeadOutputs + j] - targets[i * kHeadOutputs + j];
      bin += d * d;
    }
    total += bin / static_cast<double>(n);
  }
  return total / kHeadOutputs;
}

void validate_distribution_rows(const Tensor& targets, double tol) {
  if (targets.rank() != 2 || targets.dim(1) != sz(kHeadOutputs))
    throw Error(ErrorKind::ShapeMismatch, "targets must be Nx10, got " + shape_string(targets.shape()));
  for (std::size_t i = 0; i < targets.dim(0); ++i) {
    double s = 0.0;
    for (double v : targets.row(i)) {
      if (!(v >= -tol)) throw Error(ErrorKind::NonDistributionTarget, "row " + std::to_string(i) + " has a negative entry");
      s += v;
    }
    if (!(std::abs(s - 1.0) <= tol))
      throw Error(ErrorKind::NonDistributionTarget, "row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

LossAndGradients loss_and_gradients(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
                                    const Tensor& targets) {
  check_batch(spec, batch);
  if (targets.rank() != 2 || targets.dim(0) != batch.dim(0) || targets.dim(1) != sz(kHeadOutputs))
    throw Error(ErrorKind::ShapeMismatch, "targets " + shape_string(targets.shape()) + " for batch " +
                                              shape_string(batch.shape()));
  validate_distribution_rows(targets);
  Engine engine(spec, params);
  Activations a = engine.run_forward(batch, nullptr);
  LossAndGradients out;
  out.loss = distribution_mse(a.probs, targets);
  const std::size_t n = batch.dim(0);
  Tensor dprobs(a.probs.shape());
  const double scale = 2.0 / (static_cast<double>(kHeadOutputs) * static_cast<double>(n));
  for (std::size_t i = 0; i < dprobs.size(); ++i) dprobs[i] = scale * (a.probs[i] - targets[i]);
  out.gradients = engine.run_backward(batch, a, dprobs);
  out.predictions = std::move(a.probs);
  return out;
}

}  // namespace hqa

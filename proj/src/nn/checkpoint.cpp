#include "hqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "hqa/error.hpp"

namespace hqa {
namespace {

using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

ordered_json spec_json(const NetworkSpec& spec) {
  ordered_json j;
  j["input_side"] = spec.input_side;
  j["stem_channels"] = spec.stem_channels;
  j["stem_stride"] = spec.stem_stride;
  j["bottleneck_factor"] = spec.bottleneck_factor;
  j["blocks"] = ordered_json::array();
  for (const auto& b : spec.blocks) j["blocks"].push_back({{"n_units", b.n_units}, {"growth_rate", b.growth_rate}});
  j["transitions"] = ordered_json::array();
  for (const auto& t : spec.transitions) j["transitions"].push_back({{"compression", t.compression}});
  j["head_outputs"] = spec.head_outputs;
  return j;
}

NetworkSpec spec_from(const nlohmann::json& j) {
  NetworkSpec s;
  s.input_side = j.at("input_side").get<int>();
  s.stem_channels = j.at("stem_channels").get<int>();
  s.stem_stride = j.value("stem_stride", 1);
  s.bottleneck_factor = j.value("bottleneck_factor", 4);
  for (const auto& b : j.at("blocks")) s.blocks.push_back({b.at("n_units").get<int>(), b.at("growth_rate").get<int>()});
  for (const auto& t : j.at("transitions")) s.transitions.push_back({t.at("compression").get<double>()});
  s.head_outputs = j.value("head_outputs", 10);
  return s;
}

[[noreturn]] void corrupt(const std::string& msg) { throw Error(ErrorKind::CorruptCheckpoint, msg); }

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(const std::string& text) {
  try {
    return spec_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, e.what());
  }
}

std::vector<std::uint8_t> encode_checkpoint(const NetworkSpec& spec, const Parameters& params) {
  ordered_json manifest;
  manifest["spec"] = spec_json(spec);
  manifest["tensors"] = ordered_json::array();
  for (const auto& t : params) manifest["tensors"].push_back({{"name", t.name}, {"shape", t.value.shape()}});
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out = {'R', 'G', 'Q', 'M', kCheckpointVersion};
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + params.count() * 4);
  for (const auto& t : params)
    for (double v : t.value.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), "RGQM", 4) != 0) corrupt("bad magic");
  if (bytes[4] != kCheckpointVersion) corrupt("unsupported version " + std::to_string(bytes[4]));
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
  if (bytes.size() - 9 < len) corrupt("manifest truncated");
  const std::string text(bytes.begin() + 9, bytes.begin() + 9 + len);

  Checkpoint ck;
  std::vector<ParameterShape> declared;
  try {
    const auto manifest = nlohmann::json::parse(text);
    ck.spec = spec_from(manifest.at("spec"));
    for (const auto& t : manifest.at("tensors"))
      declared.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>()});
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("manifest: ") + e.what());
  }

  std::vector<ParameterShape> expected;
  try {
    expected = parameter_shapes(ck.spec);
  } catch (const Error& e) {
    corrupt(std::string("manifest spec: ") + e.what());
  }
  if (expected.size() != declared.size()) corrupt("tensor count does not match spec");
  std::size_t total = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].name != declared[i].name || expected[i].shape != declared[i].shape)
      corrupt("tensor " + declared[i].name + " " + shape_string(declared[i].shape) + " does not match spec");
    total += Tensor::element_count(declared[i].shape);
  }
  const std::size_t blob = bytes.size() - 9 - len;
  if (blob != total * 4)
    corrupt("weight blob has " + std::to_string(blob) + " bytes, manifest declares " + std::to_string(total * 4));

  std::size_t pos = 9 + len;
  std::vector<NamedTensor> tensors;
  for (auto& d : declared) {
    Tensor t(d.shape);
    for (auto& v : t.data()) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
      pos += 4;
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    tensors.push_back({std::move(d.name), std::move(t)});
  }
  ck.params = Parameters(std::move(tensors));
  return ck;
}

void save_checkpoint(const Parameters& params, const NetworkSpec& spec, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(spec, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace hqa

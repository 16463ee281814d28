#include "hqa/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hqa/error.hpp"

namespace hqa {
namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
  return tok;
}

int parse_dim(const std::string& tok) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit) || tok.size() > 7)
    throw Error(ErrorKind::UnreadableRaster, "bad PPM header field '" + tok + "'");
  return std::stoi(tok);
}

}  // namespace

Raster decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (ppm_token(bytes, pos) != "P6") throw Error(ErrorKind::UnreadableRaster, "not a P6 pixmap");
  Raster r;
  r.width = parse_dim(ppm_token(bytes, pos));
  r.height = parse_dim(ppm_token(bytes, pos));
  const int maxval = parse_dim(ppm_token(bytes, pos));
  if (r.width < 1 || r.height < 1 || maxval != 255)
    throw Error(ErrorKind::UnreadableRaster, "only 8-bit P6 with positive size is supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t need = static_cast<std::size_t>(r.width) * r.height * 3;
  if (pos > bytes.size() || bytes.size() - pos < need)
    throw Error(ErrorKind::UnreadableRaster, "truncated pixmap");
  r.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
               bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return r;
}

std::vector<std::uint8_t> encode_ppm(const Raster& r) {
  const std::string header = "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.rgb.begin(), r.rgb.end());
  return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw Error(ErrorKind::UnreadableRaster, std::string("png: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  Raster r;
  r.width = static_cast<int>(image.width);
  r.height = static_cast<int>(image.height);
  r.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::UnreadableRaster, "png: " + msg);
  }
  return r;
}

std::vector<std::uint8_t> encode_png(const Raster& r) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, r.rgb.data(), 0, nullptr))
    throw Error(ErrorKind::IoFailure, std::string("png encode: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, r.rgb.data(), 0, nullptr))
    throw Error(ErrorKind::IoFailure, std::string("png encode: ") + image.message);
  out.resize(size);
  return out;
}

Raster decode_raster(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  return decode_ppm(bytes);
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableRaster, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_raster(bytes);
  } catch (const Error& e) {
    throw Error(ErrorKind::UnreadableRaster, path.string() + ": " + e.what());
  }
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
  const auto bytes = path.extension() == ".png" ? encode_png(r) : encode_ppm(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
}

Raster resize_square(const Raster& r, int side) {
  if (side < 1) throw Error(ErrorKind::InvalidDimensions, "side must be positive");
  if (r.width == side && r.height == side) return r;
  Raster out;
  out.width = out.height = side;
  out.rgb.resize(static_cast<std::size_t>(side) * side * 3);
  const double sx = static_cast<double>(r.width) / side;
  const double sy = static_cast<double>(r.height) / side;
  for (int y = 0; y < side; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, r.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, r.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < side; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, r.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, r.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = r.at(x0, y0, c) * (1 - wx) + r.at(x1, y0, c) * wx;
        const double bot = r.at(x0, y1, c) * (1 - wx) + r.at(x1, y1, c) * wx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return out;
}

}  // namespace hqa

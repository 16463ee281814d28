#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hqa {

/// 8-bit interleaved RGB image.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Raster&) const = default;
};

/// Decodes binary PPM (P6) or PNG, detected by magic bytes. PNG input is
/// normalized to 8-bit RGB. Throws UnreadableRaster.
Raster read_raster(const std::filesystem::path& path);
Raster decode_raster(std::span<const std::uint8_t> bytes);

Raster decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Raster& r);
Raster decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Raster& r);

/// Throws IoFailure.
void write_raster(const std::filesystem::path& path, const Raster& r);

/// Bilinear resampling to a square side; identity when already that size.
Raster resize_square(const Raster& r, int side);

}  // namespace hqa

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dueb {

/// 8-bit interleaved raster; channels is 1 (gray) or 3 (RGB).
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, int ch)
      : width(w), height(h), channels(ch),
        pixels(static_cast<std::size_t>(w) * h * ch, 0) {}

  std::uint8_t* px(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  [[nodiscard]] const std::uint8_t* px(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Binary PGM (P5) for one channel, PPM (P6) for three.
void write_pnm(const Raster& r, const std::filesystem::path& path);
Raster read_pnm(const std::filesystem::path& path);

}  // namespace dueb

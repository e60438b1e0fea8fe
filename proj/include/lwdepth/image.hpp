#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lwdepth {

struct Size2 {
  int height = 0;
  int width = 0;

  bool operator==(const Size2&) const = default;
};

/// Interleaved (HWC) float image. RGB uses 3 channels, depth uses 1.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  Size2 size() const noexcept { return {height, width}; }
  bool empty() const noexcept { return pixels.empty(); }

  float& at(int y, int x, int c = 0) noexcept {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c = 0) const noexcept {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image&) const = default;
};

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> valid;

  Mask() = default;
  Mask(int h, int w, bool fill = true)
      : height(h), width(w),
        valid(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  Size2 size() const noexcept { return {height, width}; }
  bool at(int y, int x) const noexcept {
    return valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }

  bool operator==(const Mask&) const = default;
};

}  // namespace lwdepth

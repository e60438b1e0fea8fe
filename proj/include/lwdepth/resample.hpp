#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace lwdepth {

/// Two-tap linear interpolation weights along one axis, half-pixel centers
/// (align_corners = false). Output i samples source coordinate
/// (i + 0.5) * src / dst - 0.5, clamped to the valid range.
struct LinearTap {
  int i0 = 0;
  int i1 = 0;
  double w1 = 0.0;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<LinearTap> linear_taps(int src, int dst) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {i0, i1, s - i0};
  }
  return taps;
}

/// Nearest source index for each output index under the same convention.
inline std::vector<int> nearest_taps(int src, int dst) {
  std::vector<int> idx(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const int s = static_cast<int>(std::floor((i + 0.5) * scale));
    idx[static_cast<std::size_t>(i)] = std::clamp(s, 0, src - 1);
  }
  return idx;
}

}  // namespace lwdepth

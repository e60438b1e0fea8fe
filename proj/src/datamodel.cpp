#include "lwdepth/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lwdepth/error.hpp"
#include "lwdepth/resample.hpp"
#include "lwdepth/rng.hpp"

namespace lwdepth {
namespace {

void check_resize_args(Size2 src, Size2 target) {
  if (src.height < 1 || src.width < 1) {
    throw DimensionError("cannot resize an empty image");
  }
  if (target.height < 1 || target.width < 1) {
    throw DimensionError("resize target must be at least 1x1, got " +
                         std::to_string(target.height) + "x" +
                         std::to_string(target.width));
  }
}

void check_crop_args(Size2 src, Size2 target) {
  if (target.height < 1 || target.width < 1) {
    throw DimensionError("crop target must be at least 1x1");
  }
  if (target.height > src.height || target.width > src.width) {
    throw DimensionError("crop target " + std::to_string(target.height) + "x" +
                         std::to_string(target.width) + " exceeds source " +
                         std::to_string(src.height) + "x" +
                         std::to_string(src.width));
  }
}

}  // namespace

void validate_sample(const DepthSample& s) {
  for (float v : s.rgb.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ContractError("rgb value outside [0, 1]");
    }
  }
  if (!s.has_depth()) return;
  if (s.depth.channels != 1) throw DimensionError("depth must have one channel");
  if (s.depth.size() != s.valid_mask.size()) {
    throw DimensionError("depth and valid_mask dimensions differ");
  }
  for (std::size_t i = 0; i < s.depth.pixels.size(); ++i) {
    if (s.valid_mask.valid[i] && !(s.depth.pixels[i] > 0.0f)) {
      throw ContractError("non-positive depth at a valid pixel");
    }
  }
}

Image resize_bilinear(const Image& img, Size2 target) {
  check_resize_args(img.size(), target);
  const auto ty = linear_taps(img.height, target.height);
  const auto tx = linear_taps(img.width, target.width);
  Image out(target.height, target.width, img.channels);
  for (int y = 0; y < target.height; ++y) {
    const auto& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < target.width; ++x) {
      const auto& b = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < img.channels; ++c) {
        // v0 + w * (v1 - v0) keeps constant regions exactly constant.
        const double top = img.at(a.i0, b.i0, c) +
                           b.w1 * (img.at(a.i0, b.i1, c) - img.at(a.i0, b.i0, c));
        const double bot = img.at(a.i1, b.i0, c) +
                           b.w1 * (img.at(a.i1, b.i1, c) - img.at(a.i1, b.i0, c));
        out.at(y, x, c) = static_cast<float>(top + a.w1 * (bot - top));
      }
    }
  }
  return out;
}

Image resize_nearest(const Image& img, Size2 target) {
  check_resize_args(img.size(), target);
  const auto iy = nearest_taps(img.height, target.height);
  const auto ix = nearest_taps(img.width, target.width);
  Image out(target.height, target.width, img.channels);
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(iy[y], ix[x], c);
      }
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, Size2 target) {
  check_resize_args(mask.size(), target);
  const auto iy = nearest_taps(mask.height, target.height);
  const auto ix = nearest_taps(mask.width, target.width);
  Mask out(target.height, target.width, false);
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      out.valid[static_cast<std::size_t>(y) * target.width + x] =
          mask.valid[static_cast<std::size_t>(iy[y]) * mask.width + ix[x]];
    }
  }
  return out;
}

Image center_crop(const Image& img, Size2 target) {
  check_crop_args(img.size(), target);
  const int oy = (img.height - target.height) / 2;
  const int ox = (img.width - target.width) / 2;
  Image out(target.height, target.width, img.channels);
  for (int y = 0; y < target.height; ++y) {
    const float* src = &img.pixels[(static_cast<std::size_t>(y + oy) * img.width + ox) *
                                   img.channels];
    std::copy(src, src + static_cast<std::size_t>(target.width) * img.channels,
              &out.pixels[static_cast<std::size_t>(y) * target.width * img.channels]);
  }
  return out;
}

Mask center_crop(const Mask& mask, Size2 target) {
  check_crop_args(mask.size(), target);
  const int oy = (mask.height - target.height) / 2;
  const int ox = (mask.width - target.width) / 2;
  Mask out(target.height, target.width, false);
  for (int y = 0; y < target.height; ++y) {
    for (int x = 0; x < target.width; ++x) {
      out.valid[static_cast<std::size_t>(y) * target.width + x] =
          mask.valid[static_cast<std::size_t>(y + oy) * mask.width + x + ox];
    }
  }
  return out;
}

DepthSample preprocess(const DepthSample& sample, const PreprocessSpec& spec) {
  DepthSample out;
  out.domain_tag = sample.domain_tag;
  if (sample.rgb.size() == spec.rgb_crop) {
    out.rgb = sample.rgb;
  } else {
    out.rgb = center_crop(resize_bilinear(sample.rgb, spec.rgb_resize), spec.rgb_crop);
  }
  if (!sample.has_depth()) return out;
  if (sample.depth.size() != sample.valid_mask.size()) {
    throw DimensionError("depth and valid_mask dimensions differ");
  }
  if (sample.depth.size() == spec.depth_crop) {
    out.depth = sample.depth;
    out.valid_mask = sample.valid_mask;
  } else {
    out.depth = center_crop(resize_bilinear(sample.depth, spec.depth_resize),
                            spec.depth_crop);
    out.valid_mask = center_crop(resize_nearest(sample.valid_mask, spec.depth_resize),
                                 spec.depth_crop);
  }
  // Interpolation across invalid (zero) pixels can produce values that are
  // no longer positive; those pixels are not valid depth.
  for (std::size_t i = 0; i < out.depth.pixels.size(); ++i) {
    if (!(out.depth.pixels[i] > 0.0f)) out.valid_mask.valid[i] = 0;
  }
  return out;
}

// --- DatasetHandle ----------------------------------------------------------

DatasetHandle::DatasetHandle(std::vector<DepthSample> samples, bool labeled,
                             std::string domain_tag, std::uint64_t seed)
    : labeled_(labeled), domain_tag_(std::move(domain_tag)), seed_(seed) {
  if (labeled) {
    for (const auto& s : samples) {
      if (!s.has_depth()) {
        throw ContractError("labeled dataset contains a sample without depth");
      }
    }
  }
  indices_.resize(samples.size());
  std::iota(indices_.begin(), indices_.end(), std::size_t{0});
  store_ = std::make_shared<const std::vector<DepthSample>>(std::move(samples));
}

void DatasetHandle::check_index(std::size_t i) const {
  if (i >= indices_.size()) {
    throw DimensionError("sample index " + std::to_string(i) +
                         " out of range for dataset of size " +
                         std::to_string(indices_.size()));
  }
}

void DatasetHandle::require_labels(const char* what) const {
  if (!labeled_) {
    throw ContractError(std::string("ground-truth access (") + what +
                        ") on unlabeled dataset '" + domain_tag_ + "'");
  }
}

const Image& DatasetHandle::rgb(std::size_t i) const {
  check_index(i);
  return (*store_)[indices_[i]].rgb;
}

const Image& DatasetHandle::depth(std::size_t i) const {
  require_labels("depth");
  check_index(i);
  return (*store_)[indices_[i]].depth;
}

const Mask& DatasetHandle::valid_mask(std::size_t i) const {
  require_labels("valid_mask");
  check_index(i);
  return (*store_)[indices_[i]].valid_mask;
}

const DepthSample& DatasetHandle::sample(std::size_t i) const {
  require_labels("sample");
  check_index(i);
  return (*store_)[indices_[i]];
}

std::vector<std::size_t> DatasetHandle::order(std::uint64_t epoch) const {
  std::vector<std::size_t> perm(indices_.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, 0x0de7, epoch));
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

DatasetHandle DatasetHandle::unlabeled() const {
  DatasetHandle out = *this;
  out.labeled_ = false;
  return out;
}

DatasetHandle DatasetHandle::head(std::size_t n) const {
  DatasetHandle out = *this;
  out.indices_.resize(std::min(n, indices_.size()));
  return out;
}

DatasetHandle DatasetHandle::with_seed(std::uint64_t seed) const {
  DatasetHandle out = *this;
  out.seed_ = seed;
  return out;
}

std::pair<DatasetHandle, DatasetHandle> DatasetHandle::split(
    double holdout_fraction, std::uint64_t seed) const {
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0)) {
    throw ContractError("holdout fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> perm(indices_.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5917));
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  const auto n_test = static_cast<std::size_t>(
      std::llround(holdout_fraction * static_cast<double>(perm.size())));
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());

  DatasetHandle a = *this, b = *this;
  a.indices_.clear();
  b.indices_.clear();
  for (auto i : train) a.indices_.push_back(indices_[i]);
  for (auto i : test) b.indices_.push_back(indices_[i]);
  a.seed_ = derive_seed(seed, 0x7a1);
  b.seed_ = derive_seed(seed, 0x7e5);
  return {std::move(a), std::move(b)};
}

}  // namespace lwdepth

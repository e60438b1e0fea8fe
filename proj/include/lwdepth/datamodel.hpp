#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lwdepth/image.hpp"

namespace lwdepth {

/// RGB image with aligned metric depth. Depth and mask are empty for samples
/// that never had ground truth.
struct DepthSample {
  Image rgb;           // H x W x 3, values in [0, 1]
  Image depth;         // h x w x 1, meters
  Mask valid_mask;     // h x w
  std::string domain_tag;

  bool has_depth() const noexcept { return !depth.empty(); }
};

/// Checks the sample invariants and throws on violation.
void validate_sample(const DepthSample& s);

// --- resampling and preprocessing -----------------------------------------

Image resize_bilinear(const Image& img, Size2 target);
Image resize_nearest(const Image& img, Size2 target);
Mask resize_nearest(const Mask& mask, Size2 target);

/// Crop offsets are floor((src - target) / 2) on each axis.
Image center_crop(const Image& img, Size2 target);
Mask center_crop(const Mask& mask, Size2 target);

/// Geometry of the preprocessing pipeline. Defaults: RGB resized to 320x240
/// and cropped to 304x228, depth resized to 160x120 and cropped to 152x114
/// so that the depth crop window matches the RGB one at half resolution.
struct PreprocessSpec {
  Size2 rgb_resize{240, 320};
  Size2 rgb_crop{228, 304};
  Size2 depth_resize{120, 160};
  Size2 depth_crop{114, 152};
};

DepthSample preprocess(const DepthSample& sample, const PreprocessSpec& spec = {});

// --- synthetic scenes ------------------------------------------------------

struct DepthRange {
  double min_m = 0.5;
  double max_m = 10.0;
};

/// One synthetic room: a fronto-parallel back wall plus axis-aligned boxes.
/// All geometry is multiplied by scale_factor; depth is clipped to
/// [min_m * scale_factor, max_m * scale_factor].
struct SceneRecipe {
  DepthRange depth_range;
  int n_boxes = 3;
  double wall_distance = 5.0;
  std::uint64_t texture_seed = 0;
  double scale_factor = 1.0;
  Size2 image_size{32, 32};
  Size2 depth_size{16, 16};
};

void validate_recipe(const SceneRecipe& r);

/// Deterministic in (recipe, seed).
DepthSample generate_scene(const SceneRecipe& recipe, std::uint64_t seed,
                           const std::string& domain_tag = "synthetic");

// --- datasets ---------------------------------------------------------------

/// Ordered, seeded view over shared samples. An unlabeled handle refuses
/// every ground-truth access with ContractError.
class DatasetHandle {
 public:
  DatasetHandle() = default;
  DatasetHandle(std::vector<DepthSample> samples, bool labeled,
                std::string domain_tag, std::uint64_t seed);

  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  bool labeled() const noexcept { return labeled_; }
  const std::string& domain_tag() const noexcept { return domain_tag_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const Image& rgb(std::size_t i) const;
  const Image& depth(std::size_t i) const;
  const Mask& valid_mask(std::size_t i) const;
  const DepthSample& sample(std::size_t i) const;

  /// Visit order for one epoch; a pure function of (seed, epoch).
  std::vector<std::size_t> order(std::uint64_t epoch) const;

  DatasetHandle unlabeled() const;
  /// First n samples (n clamped to size()).
  DatasetHandle head(std::size_t n) const;
  DatasetHandle with_seed(std::uint64_t seed) const;

  /// Seeded split; the second handle holds round(fraction * size()) samples.
  std::pair<DatasetHandle, DatasetHandle> split(double holdout_fraction,
                                                std::uint64_t seed) const;

 private:
  void check_index(std::size_t i) const;
  void require_labels(const char* what) const;

  std::shared_ptr<const std::vector<DepthSample>> store_;
  std::vector<std::size_t> indices_;
  bool labeled_ = false;
  std::string domain_tag_;
  std::uint64_t seed_ = 0;
};

/// Per-domain recipe distributions for make_domains.
struct DomainOptions {
  Size2 image_size{32, 32};
  Size2 depth_size{16, 16};
  DepthRange depth_range{0.5, 10.0};
  double wall_min = 2.5, wall_max = 7.0;
  int max_boxes = 4;
  double matched_scale_min = 0.8, matched_scale_max = 1.25;
  double ood_scale_min = 6.25, ood_scale_max = 8.0;
};

struct Domains {
  DatasetHandle original;           // X: labeled
  DatasetHandle aux_unlabeled;      // U: same images as aux_labeled, no labels
  DatasetHandle aux_labeled;        // U': labeled
  DatasetHandle ood_unlabeled;      // U_ood: scale-shifted, unlabeled
  DatasetHandle ood_labeled;        // U_ood with depth, for scale audits only
};

SceneRecipe draw_recipe(const DomainOptions& opts, bool ood, std::uint64_t seed);

Domains make_domains(std::size_t n_train, std::size_t n_aux_matched,
                     std::size_t n_aux_ood, std::uint64_t seed,
                     const DomainOptions& opts = {});

/// Seeds are drawn from disjoint streams per domain (0 = X, 1 = U, 2 = OOD).
std::uint64_t domain_sample_seed(std::uint64_t seed, int stream, std::size_t i);

// --- file formats -----------------------------------------------------------

/// Little-endian PFM ("Pf" grayscale). Rejects negative or non-finite depth.
void save_pfm(const Image& depth, const std::filesystem::path& path);
Image load_pfm(const std::filesystem::path& path);

/// Binary PPM (P6), 8 bits per channel.
void save_ppm(const Image& rgb, const std::filesystem::path& path);
Image load_ppm(const std::filesystem::path& path);

/// Writes one PPM per sample (plus PFM when labeled) into dir and a manifest
/// <dir>/manifest.json. Invalid depth pixels are stored as 0.
std::filesystem::path save_dataset(const DatasetHandle& ds,
                                   const std::filesystem::path& dir);
DatasetHandle load_dataset(const std::filesystem::path& manifest);

}  // namespace lwdepth

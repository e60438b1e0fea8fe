#pragma once

#include <cstddef>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "lwdepth/datamodel.hpp"

namespace lwdepth {

struct MetricReport {
  double rmse = 0.0;    // meters
  double rel = 0.0;     // mean |pred - gt| / gt
  double delta1 = 0.0;  // fraction with max(pred/gt, gt/pred) < 1.25
  double delta2 = 0.0;  // ... < 1.25^2
  double delta3 = 0.0;  // ... < 1.25^3
  std::size_t n_valid = 0;
};

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

inline constexpr double kDeltaThreshold = 1.25;

/// Running accumulator; merging accumulators equals evaluating the union.
class MetricAccumulator {
 public:
  /// Adds every pixel with mask != 0. Requires gt > 0 on the mask.
  void add(std::span<const float> pred, std::span<const float> gt,
           std::span<const std::uint8_t> mask);
  void add(const Image& pred, const Image& gt, const Mask& mask);

  /// Throws ContractError when no pixel was added.
  MetricReport report() const;

 private:
  double sq_sum_ = 0.0;
  double rel_sum_ = 0.0;
  std::size_t hits_[3] = {0, 0, 0};
  std::size_t n_ = 0;
};

MetricReport evaluate(const Image& pred, const Image& gt, const Mask& mask);
MetricReport evaluate(std::span<const float> pred, std::span<const float> gt,
                      std::span<const std::uint8_t> mask);

struct DepthHistogram {
  std::vector<double> bin_edges;  // uniform, meters
  std::vector<double> mass;       // sums to 1

  std::size_t argmax() const;
};

inline constexpr int kDefaultHistogramBins = 50;
inline constexpr double kDefaultHistogramMax = 10.0;

/// Pooled normalized histogram over all valid pixels of a labeled dataset.
/// Values outside [lo, hi) are clamped into the end bins.
DepthHistogram depth_histogram(const DatasetHandle& ds,
                               int n_bins = kDefaultHistogramBins,
                               double lo = 0.0, double hi = kDefaultHistogramMax);

/// Same, from raw depth maps.
DepthHistogram depth_histogram(std::span<const Image> depths,
                               std::span<const Mask> masks, int n_bins,
                               double lo, double hi);

/// Histogram intersection, sum_i min(a_i, b_i). Requires identical binning.
double histogram_similarity(const DepthHistogram& a, const DepthHistogram& b);

}  // namespace lwdepth

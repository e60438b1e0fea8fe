#include "lwdepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lwdepth/error.hpp"

namespace lwdepth {

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"rmse", r.rmse},     {"rel", r.rel},
                     {"delta1", r.delta1}, {"delta2", r.delta2},
                     {"delta3", r.delta3}, {"n_valid", r.n_valid}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  j.at("rmse").get_to(r.rmse);
  j.at("rel").get_to(r.rel);
  j.at("delta1").get_to(r.delta1);
  j.at("delta2").get_to(r.delta2);
  j.at("delta3").get_to(r.delta3);
  j.at("n_valid").get_to(r.n_valid);
}

void MetricAccumulator::add(std::span<const float> pred, std::span<const float> gt,
                            std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || gt.size() != mask.size()) {
    throw DimensionError("prediction, ground truth and mask sizes differ");
  }
  constexpr double t1 = kDeltaThreshold;
  constexpr double t2 = t1 * t1;
  constexpr double t3 = t2 * t1;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const double g = gt[i];
    const double p = pred[i];
    if (!(g > 0.0)) throw ContractError("ground truth must be > 0 on the mask");
    const double e = p - g;
    sq_sum_ += e * e;
    rel_sum_ += std::abs(e) / g;
    const double ratio =
        p > 0.0 ? std::max(p / g, g / p) : std::numeric_limits<double>::infinity();
    hits_[0] += ratio < t1;
    hits_[1] += ratio < t2;
    hits_[2] += ratio < t3;
    ++n_;
  }
}

void MetricAccumulator::add(const Image& pred, const Image& gt, const Mask& mask) {
  if (pred.size() != gt.size() || gt.size() != mask.size() || pred.channels != 1 ||
      gt.channels != 1) {
    throw DimensionError("evaluate expects single-channel maps of equal size");
  }
  add(pred.pixels, gt.pixels, mask.valid);
}

MetricReport MetricAccumulator::report() const {
  if (n_ == 0) throw ContractError("evaluation mask selects no pixels");
  const double n = static_cast<double>(n_);
  MetricReport r;
  r.rmse = std::sqrt(sq_sum_ / n);
  r.rel = rel_sum_ / n;
  r.delta1 = static_cast<double>(hits_[0]) / n;
  r.delta2 = static_cast<double>(hits_[1]) / n;
  r.delta3 = static_cast<double>(hits_[2]) / n;
  r.n_valid = n_;
  return r;
}

MetricReport evaluate(const Image& pred, const Image& gt, const Mask& mask) {
  MetricAccumulator acc;
  acc.add(pred, gt, mask);
  return acc.report();
}

MetricReport evaluate(std::span<const float> pred, std::span<const float> gt,
                      std::span<const std::uint8_t> mask) {
  MetricAccumulator acc;
  acc.add(pred, gt, mask);
  return acc.report();
}

std::size_t DepthHistogram::argmax() const {
  return static_cast<std::size_t>(
      std::max_element(mass.begin(), mass.end()) - mass.begin());
}

DepthHistogram depth_histogram(std::span<const Image> depths,
                               std::span<const Mask> masks, int n_bins,
                               double lo, double hi) {
  if (n_bins < 1) throw ConfigError("histogram needs at least one bin");
  if (!(hi > lo)) throw ConfigError("histogram range must be non-empty");
  if (depths.size() != masks.size()) throw DimensionError("depth/mask count mismatch");
  DepthHistogram h;
  h.bin_edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) h.bin_edges[i] = lo + (hi - lo) * i / n_bins;
  std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < depths.size(); ++s) {
    const Image& d = depths[s];
    const Mask& m = masks[s];
    if (d.size() != m.size()) throw DimensionError("depth and mask dimensions differ");
    for (std::size_t i = 0; i < d.pixels.size(); ++i) {
      if (!m.valid[i]) continue;
      const double bin = std::floor((d.pixels[i] - lo) / (hi - lo) * n_bins);
      const int b = static_cast<int>(std::clamp(bin, 0.0, static_cast<double>(n_bins - 1)));
      counts[static_cast<std::size_t>(b)] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw ContractError("histogram over zero valid pixels");
  h.mass.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) h.mass[i] = counts[i] / total;
  return h;
}

DepthHistogram depth_histogram(const DatasetHandle& ds, int n_bins, double lo,
                               double hi) {
  if (!ds.labeled()) {
    throw ContractError("depth_histogram requires a labeled dataset, got '" +
                        ds.domain_tag() + "'");
  }
  std::vector<Image> depths;
  std::vector<Mask> masks;
  depths.reserve(ds.size());
  masks.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    depths.push_back(ds.depth(i));
    masks.push_back(ds.valid_mask(i));
  }
  return depth_histogram(depths, masks, n_bins, lo, hi);
}

double histogram_similarity(const DepthHistogram& a, const DepthHistogram& b) {
  if (a.bin_edges != b.bin_edges || a.mass.size() != b.mass.size()) {
    throw DimensionError("histograms use different binning");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) s += std::min(a.mass[i], b.mass[i]);
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace lwdepth

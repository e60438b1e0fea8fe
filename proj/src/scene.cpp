#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "lwdepth/datamodel.hpp"
#include "lwdepth/error.hpp"
#include "lwdepth/rng.hpp"

namespace lwdepth {
namespace {

using Vec3 = std::array<double, 3>;

constexpr double kHalfFovTan = 0.57735026918962584;  // tan(30 deg)
constexpr double kAmbient = 0.2;
constexpr double kFalloffRange = 4.0;  // meters; absolute, not scaled
constexpr double kGain = 1.25;
constexpr double kNoiseSigma = 0.01;

struct Surface {
  Vec3 albedo;
  double period;    // texture period in world units
  double contrast;  // texture modulation depth
};

struct Box {
  Vec3 lo, hi;
};

Surface draw_surface(Rng& rng) {
  const double gray = rng.uniform(0.45, 1.0);
  Surface s{};
  for (auto& a : s.albedo) a = std::min(1.0, gray * rng.uniform(0.85, 1.15));
  s.period = rng.uniform(0.15, 0.5);
  s.contrast = rng.uniform(0.1, 0.35);
  return s;
}

// Slab test against an axis-aligned box for a ray from the origin along dir.
// Returns the entry distance (> 0) and the entry axis, or t = inf.
std::pair<double, int> intersect(const Box& b, const Vec3& dir) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(dir[k]) < 1e-12) {
      if (0.0 < b.lo[k] || 0.0 > b.hi[k]) return {std::numeric_limits<double>::infinity(), -1};
      continue;
    }
    double t0 = b.lo[k] / dir[k];
    double t1 = b.hi[k] / dir[k];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      axis = k;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0) {
    return {std::numeric_limits<double>::infinity(), -1};
  }
  return {t_near, axis};
}

}  // namespace

void validate_recipe(const SceneRecipe& r) {
  if (!(r.depth_range.min_m > 0.0)) throw ConfigError("depth_range.min_m must be > 0");
  if (!(r.depth_range.max_m > r.depth_range.min_m)) {
    throw ConfigError("depth_range.max_m must exceed min_m");
  }
  if (!(r.scale_factor > 0.0)) throw ConfigError("scale_factor must be > 0");
  if (r.n_boxes < 0) throw ConfigError("n_boxes must be >= 0");
  if (!(r.wall_distance > 0.0)) throw ConfigError("wall_distance must be > 0");
  if (r.image_size.height < 1 || r.image_size.width < 1 ||
      r.depth_size.height < 1 || r.depth_size.width < 1) {
    throw ConfigError("scene image sizes must be at least 1x1");
  }
}

DepthSample generate_scene(const SceneRecipe& recipe, std::uint64_t seed,
                           const std::string& domain_tag) {
  validate_recipe(recipe);
  Rng geo(derive_seed(seed, 0x5ce7e));
  Rng tex(derive_seed(recipe.texture_seed, 0x7e47));
  Rng noise(derive_seed(seed, 0x0415e));

  const double s = recipe.scale_factor;
  const int H = recipe.image_size.height;
  const int W = recipe.image_size.width;
  const double focal = 0.5 * W / kHalfFovTan;
  const double half_w = kHalfFovTan;
  const double half_h = kHalfFovTan * H / W;

  std::vector<Surface> surfaces{draw_surface(tex)};
  std::vector<Box> boxes;
  const double wall = recipe.wall_distance;
  const double z_lo = std::max(recipe.depth_range.min_m, 0.8);
  const double z_hi = std::max(z_lo, wall - 0.6);
  for (int b = 0; b < recipe.n_boxes; ++b) {
    const double zf = geo.uniform(z_lo, z_hi);
    const double hx = geo.uniform(0.12, 0.35) * zf * half_w;
    const double hy = geo.uniform(0.12, 0.35) * zf * half_h;
    const double hz = geo.uniform(0.2, 0.6);
    const double cx = geo.uniform(-0.75, 0.75) * zf * half_w;
    const double cy = geo.uniform(-0.75, 0.75) * zf * half_h;
    Box box{{(cx - hx) * s, (cy - hy) * s, zf * s},
            {(cx + hx) * s, (cy + hy) * s, (zf + 2.0 * hz) * s}};
    boxes.push_back(box);
    surfaces.push_back(draw_surface(tex));
  }

  const double d_min = recipe.depth_range.min_m * s;
  const double d_max = recipe.depth_range.max_m * s;

  DepthSample out;
  out.domain_tag = domain_tag;
  out.rgb = Image(H, W, 3);
  Image full_depth(H, W, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Vec3 dir{(x + 0.5 - 0.5 * W) / focal, (y + 0.5 - 0.5 * H) / focal, 1.0};
      double t = wall * s;
      int surface = 0;
      int axis = 2;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const auto [tb, ab] = intersect(boxes[b], dir);
        if (tb < t) {
          t = tb;
          surface = static_cast<int>(b) + 1;
          axis = ab;
        }
      }
      full_depth.at(y, x) = static_cast<float>(std::clamp(t, d_min, d_max));

      // Texture coordinates: the two in-plane axes of the hit face.
      const Vec3 p{t * dir[0], t * dir[1], t * dir[2]};
      const int u_axis = axis == 0 ? 1 : 0;
      const int v_axis = axis == 2 ? 1 : 2;
      const Surface& surf = surfaces[static_cast<std::size_t>(surface)];
      const double period = surf.period * s;
      const double pattern =
          0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * p[u_axis] / period) *
                    std::sin(2.0 * std::numbers::pi * p[v_axis] / period);
      const double modulation = 1.0 - surf.contrast + surf.contrast * pattern;

      const double range = t * std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + 1.0);
      const double cos_incidence = std::abs(dir[axis]) / (range / t);
      const double shade = kAmbient + (1.0 - kAmbient) * cos_incidence;
      const double falloff =
          1.0 / (1.0 + (range / kFalloffRange) * (range / kFalloffRange));
      for (int c = 0; c < 3; ++c) {
        const double v = kGain * surf.albedo[static_cast<std::size_t>(c)] *
                             modulation * shade * falloff +
                         kNoiseSigma * noise.normal();
        out.rgb.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  out.depth = recipe.depth_size == recipe.image_size
                  ? full_depth
                  : resize_bilinear(full_depth, recipe.depth_size);
  for (auto& v : out.depth.pixels) {
    v = std::clamp(v, static_cast<float>(d_min), static_cast<float>(d_max));
  }
  out.valid_mask = Mask(recipe.depth_size.height, recipe.depth_size.width, true);
  return out;
}

SceneRecipe draw_recipe(const DomainOptions& opts, bool ood, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4ec1));
  SceneRecipe r;
  r.depth_range = opts.depth_range;
  r.image_size = opts.image_size;
  r.depth_size = opts.depth_size;
  r.wall_distance = rng.uniform(opts.wall_min, opts.wall_max);
  r.n_boxes = static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.max_boxes) + 1));
  r.texture_seed = rng.next();
  r.scale_factor = ood ? rng.uniform(opts.ood_scale_min, opts.ood_scale_max)
                       : rng.uniform(opts.matched_scale_min, opts.matched_scale_max);
  return r;
}

std::uint64_t domain_sample_seed(std::uint64_t seed, int stream, std::size_t i) {
  return derive_seed(seed, 0xd0000 + static_cast<std::uint64_t>(stream), i);
}

Domains make_domains(std::size_t n_train, std::size_t n_aux_matched,
                     std::size_t n_aux_ood, std::uint64_t seed,
                     const DomainOptions& opts) {
  if (opts.ood_scale_min < 5.0 * opts.matched_scale_max) {
    throw ConfigError("OOD scale range must start at >= 5x the matched range");
  }
  auto build = [&](std::size_t n, int stream, bool ood, const std::string& tag) {
    std::vector<DepthSample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto sseed = domain_sample_seed(seed, stream, i);
      samples.push_back(generate_scene(draw_recipe(opts, ood, sseed), sseed, tag));
    }
    return samples;
  };
  Domains d;
  d.original = DatasetHandle(build(n_train, 0, false, "X"), true, "X",
                             derive_seed(seed, 0xa0));
  d.aux_labeled = DatasetHandle(build(n_aux_matched, 1, false, "U"), true, "U",
                                derive_seed(seed, 0xa1));
  d.aux_unlabeled = d.aux_labeled.unlabeled();
  d.ood_labeled = DatasetHandle(build(n_aux_ood, 2, true, "OOD"), true, "OOD",
                                derive_seed(seed, 0xa2));
  d.ood_unlabeled = d.ood_labeled.unlabeled();
  return d;
}

}  // namespace lwdepth

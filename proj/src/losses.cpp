#include "lwdepth/losses.hpp"

#include <cmath>
#include <vector>

#include "lwdepth/error.hpp"

namespace lwdepth {
namespace {

template <typename T>
struct LogAbs {
  T value;
  T deriv;
};

// ln(sqrt(x^2 + eps) + alpha) and its derivative.
template <typename T>
LogAbs<T> log_abs(T x) {
  const T a = std::sqrt(x * x + static_cast<T>(kAbsSmoothing));
  const T d = a + static_cast<T>(kLogOffset);
  return {std::log(d), x / (a * d)};
}

}  // namespace

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
}

template <typename T>
CompositeLossTerms<T> composite_loss(std::span<const T> pred,
                                     std::span<const T> target,
                                     std::span<const std::uint8_t> mask, int h,
                                     int w, T grad_scale, std::span<T> grad) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (pred.size() != n || target.size() != n || (!mask.empty() && mask.size() != n)) {
    throw DimensionError("composite_loss: prediction, target and mask must be h x w");
  }
  if (!grad.empty() && grad.size() != n) {
    throw DimensionError("composite_loss: gradient buffer must be h x w");
  }
  auto valid = [&](int y, int x) {
    return mask.empty() || mask[static_cast<std::size_t>(y) * w + x] != 0;
  };

  std::size_t n_depth = 0, n_stencil = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid(y, x)) continue;
      ++n_depth;
      if ((x + 1 >= w || valid(y, x + 1)) && (y + 1 >= h || valid(y + 1, x))) ++n_stencil;
    }
  }
  if (n_depth == 0) throw ContractError("composite_loss: mask selects no pixels");

  const bool want_grad = !grad.empty();
  const T depth_w = T{1} / static_cast<T>(n_depth);
  const T stencil_w = n_stencil ? T{1} / static_cast<T>(n_stencil) : T{0};
  const T gd = grad_scale * depth_w;
  const T gs = grad_scale * stencil_w;

  CompositeLossTerms<T> terms;
  T sum_depth{}, sum_grad{}, sum_normal{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid(y, x)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const T e = pred[i] - target[i];
      const auto f = log_abs(e);
      sum_depth += f.value;
      if (want_grad) grad[i] += gd * f.deriv;

      const bool has_right = x + 1 < w;
      const bool has_down = y + 1 < h;
      if ((has_right && !valid(y, x + 1)) || (has_down && !valid(y + 1, x))) continue;
      const std::size_t r = has_right ? i + 1 : i;
      const std::size_t d = has_down ? i + static_cast<std::size_t>(w) : i;

      // Forward differences of prediction and target; zero at the far edge.
      const T px = pred[r] - pred[i], py = pred[d] - pred[i];
      const T tx = target[r] - target[i], ty = target[d] - target[i];
      const auto fx = log_abs(px - tx);
      const auto fy = log_abs(py - ty);
      sum_grad += fx.value + fy.value;

      const T np = std::sqrt(px * px + py * py + T{1});
      const T nt = std::sqrt(tx * tx + ty * ty + T{1});
      const T dot = px * tx + py * ty + T{1};
      const T cos = dot / (np * nt);
      sum_normal += T{1} - cos;

      if (want_grad) {
        // d(1 - cos)/d(px), d(1 - cos)/d(py)
        const T inv = T{1} / (np * nt);
        const T dpx = -(tx * inv - dot * px * inv / (np * np));
        const T dpy = -(ty * inv - dot * py * inv / (np * np));
        const T gx = gs * (fx.deriv + dpx);
        const T gy = gs * (fy.deriv + dpy);
        if (has_right) {
          grad[r] += gx;
          grad[i] -= gx;
        }
        if (has_down) {
          grad[d] += gy;
          grad[i] -= gy;
        }
      }
    }
  }
  terms.l_depth = sum_depth * depth_w;
  terms.l_grad = sum_grad * stencil_w;
  terms.l_normal = sum_normal * stencil_w;
  terms.total = terms.l_depth + terms.l_grad + terms.l_normal;
  if (!std::isfinite(terms.total)) throw NumericError("composite_loss is not finite");
  return terms;
}

namespace {

template <typename T>
void check_batch(const KdBatch<T>& b, bool need_teacher, bool need_gt) {
  if (b.student == nullptr) throw ContractError("batch has no student predictions");
  const auto& s = *b.student;
  if (s.channels() != 1) throw DimensionError("depth batches must have one channel");
  if (need_teacher) {
    if (b.teacher == nullptr) throw ContractError("batch has no teacher predictions");
    if (!b.teacher->same_shape(s)) {
      throw DimensionError("teacher " + b.teacher->shape_string() + " vs student " +
                           s.shape_string());
    }
  }
  if (need_gt) {
    if (b.ground_truth == nullptr) throw ContractError("batch has no ground truth");
    if (!b.ground_truth->same_shape(s)) {
      throw DimensionError("ground truth " + b.ground_truth->shape_string() +
                           " vs student " + s.shape_string());
    }
  }
  if (b.mask != nullptr && !b.mask->same_shape(s)) {
    throw DimensionError("mask " + b.mask->shape_string() + " vs student " + s.shape_string());
  }
}

template <typename T>
void check_grad(const KdBatch<T>& b, const Tensor<T>* grad) {
  if (grad != nullptr && !grad->same_shape(*b.student)) {
    throw DimensionError("gradient buffer " + grad->shape_string() + " vs student " +
                         b.student->shape_string());
  }
}

// Batch mean of w_t * L(s, t) + w_g * L(s, g); zero weights skip the term.
template <typename T>
T weighted_batch_loss(const KdBatch<T>& b, T w_teacher, T w_gt, Tensor<T>* grad) {
  const int n = b.size();
  if (n == 0) return T{0};
  const int h = b.student->height(), w = b.student->width();
  const std::size_t plane = b.student->plane_size();
  const T inv_n = T{1} / static_cast<T>(n);
  T total{};
  for (int i = 0; i < n; ++i) {
    std::span<const T> s(b.student->sample(i), plane);
    std::span<const std::uint8_t> m;
    if (b.mask) m = std::span<const std::uint8_t>(b.mask->sample(i), plane);
    std::span<T> g;
    if (grad) g = std::span<T>(grad->sample(i), plane);
    if (w_teacher != T{0}) {
      std::span<const T> t(b.teacher->sample(i), plane);
      total += w_teacher * composite_loss<T>(s, t, m, h, w, w_teacher * inv_n, g).total;
    }
    if (w_gt != T{0}) {
      std::span<const T> gt(b.ground_truth->sample(i), plane);
      total += w_gt * composite_loss<T>(s, gt, m, h, w, w_gt * inv_n, g).total;
    }
  }
  return total * inv_n;
}

}  // namespace

template <typename T>
T kd_standard(const KdBatch<T>& x, T lambda, Tensor<T>* grad) {
  check_lambda(static_cast<double>(lambda));
  if (x.size() == 0) return T{0};
  check_batch(x, lambda != T{0}, lambda != T{1});
  check_grad(x, grad);
  return weighted_batch_loss(x, lambda, T{1} - lambda, grad);
}

template <typename T>
T kd_unlabeled_only(const KdBatch<T>& u, T lambda, Tensor<T>* grad) {
  check_lambda(static_cast<double>(lambda));
  if (u.ground_truth != nullptr) {
    throw ContractError("kd_unlabeled_only: batch must not carry ground truth");
  }
  if (u.size() == 0) return T{0};
  check_batch(u, true, false);
  check_grad(u, grad);
  return weighted_batch_loss(u, lambda, T{0}, grad);
}

template <typename T>
T kd_mixed_unlabeled(const KdBatch<T>& x, const KdBatch<T>& u, T lambda,
                     Tensor<T>* grad_x, Tensor<T>* grad_u, const KdOptions& opts) {
  check_lambda(static_cast<double>(lambda));
  if (u.ground_truth != nullptr) {
    throw ContractError("kd_mixed_unlabeled: auxiliary batch must not carry ground truth");
  }
  T total = kd_standard(x, lambda, grad_x);
  if (u.size() > 0) {
    check_batch(u, true, false);
    check_grad(u, grad_u);
    const T aux_weight = opts.lambda_weighted_aux ? lambda : T{1};
    total += weighted_batch_loss(u, aux_weight, T{0}, grad_u);
  }
  return total;
}

template <typename T>
T kd_mixed_labeled(const KdBatch<T>& x, const KdBatch<T>& u, T lambda,
                   Tensor<T>* grad_x, Tensor<T>* grad_u) {
  check_lambda(static_cast<double>(lambda));
  if (u.size() > 0 && u.ground_truth == nullptr) {
    throw ContractError("kd_mixed_labeled: auxiliary batch must be labeled");
  }
  return kd_standard(x, lambda, grad_x) + kd_standard(u, lambda, grad_u);
}

#define LWDEPTH_INSTANTIATE_LOSSES(T)                                              \
  template CompositeLossTerms<T> composite_loss<T>(                                \
      std::span<const T>, std::span<const T>, std::span<const std::uint8_t>, int,  \
      int, T, std::span<T>);                                                       \
  template T kd_standard<T>(const KdBatch<T>&, T, Tensor<T>*);                     \
  template T kd_unlabeled_only<T>(const KdBatch<T>&, T, Tensor<T>*);               \
  template T kd_mixed_unlabeled<T>(const KdBatch<T>&, const KdBatch<T>&, T,        \
                                   Tensor<T>*, Tensor<T>*, const KdOptions&);      \
  template T kd_mixed_labeled<T>(const KdBatch<T>&, const KdBatch<T>&, T,          \
                                 Tensor<T>*, Tensor<T>*);

LWDEPTH_INSTANTIATE_LOSSES(float)
LWDEPTH_INSTANTIATE_LOSSES(double)

}  // namespace lwdepth

#pragma once

#include <cstdint>
#include <span>

#include "lwdepth/tensor.hpp"

namespace lwdepth {

/// Depth / gradient / normal decomposition of the training error between two
/// depth maps. l_depth and l_grad are sums of ln(|x| + 0.5) and may be
/// negative; their minimum is reached at zero error.
template <typename T>
struct CompositeLossTerms {
  T l_depth{};
  T l_grad{};
  T l_normal{};
  T total{};
};

inline constexpr double kLogOffset = 0.5;      // alpha in ln(|x| + alpha)
inline constexpr double kAbsSmoothing = 1e-12; // |x| ~ sqrt(x^2 + eps)

/// Composite error of one h x w map against a target.
///
/// Pixels with mask == 0 are excluded from all three terms; a gradient or
/// normal stencil that touches an invalid pixel is dropped. Spatial gradients
/// are forward differences with the last row/column replicated (zero
/// derivative at the far edge). Surface normals are (-dx, -dy, 1).
///
/// When `grad` is non-empty, grad_scale * dLoss/dpred is added into it.
/// Throws ContractError if the mask selects no pixel.
template <typename T>
CompositeLossTerms<T> composite_loss(std::span<const T> pred,
                                     std::span<const T> target,
                                     std::span<const std::uint8_t> mask, int h,
                                     int w, T grad_scale = T{0},
                                     std::span<T> grad = {});

/// One side of a distillation objective: student predictions for a batch,
/// plus whichever supervision that batch carries. All tensors are N x 1 x h x w.
template <typename T>
struct KdBatch {
  const Tensor<T>* student = nullptr;
  const Tensor<T>* teacher = nullptr;         // frozen; never differentiated
  const Tensor<T>* ground_truth = nullptr;    // nullptr for unlabeled data
  const Tensor<std::uint8_t>* mask = nullptr; // nullptr: every pixel valid

  int size() const noexcept { return student ? student->batch() : 0; }
};

struct KdOptions {
  /// Weight the auxiliary imitation term of the mixed-unlabeled objective by
  /// lambda instead of 1. Off by default (objective as printed).
  bool lambda_weighted_aux = false;
};

/// Batch mean of lambda * L(s, t) + (1 - lambda) * L(s, g).
/// Accumulates d/d(student) into *grad if non-null.
template <typename T>
T kd_standard(const KdBatch<T>& x, T lambda, Tensor<T>* grad = nullptr);

/// Batch mean of lambda * L(s, t) over unlabeled data. Rejects batches that
/// carry ground truth.
template <typename T>
T kd_unlabeled_only(const KdBatch<T>& u, T lambda, Tensor<T>* grad = nullptr);

/// kd_standard over x plus the batch mean of L(s, t) over unlabeled u.
template <typename T>
T kd_mixed_unlabeled(const KdBatch<T>& x, const KdBatch<T>& u, T lambda,
                     Tensor<T>* grad_x = nullptr, Tensor<T>* grad_u = nullptr,
                     const KdOptions& opts = {});

/// kd_standard over x plus kd_standard over labeled auxiliary u.
template <typename T>
T kd_mixed_labeled(const KdBatch<T>& x, const KdBatch<T>& u, T lambda,
                   Tensor<T>* grad_x = nullptr, Tensor<T>* grad_u = nullptr);

/// Throws ContractError unless 0 <= lambda <= 1.
void check_lambda(double lambda);

}  // namespace lwdepth

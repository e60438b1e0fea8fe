#pragma once

// Forward and backward passes of the network's building blocks. Internal to
// the library; DepthNet wires them together.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lwdepth/kernels.hpp"
#include "lwdepth/models.hpp"
#include "lwdepth/resample.hpp"

namespace lwdepth::layers {

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// col[(c * k + ky) * k + kx][col0 + oy * wo + ox] = x[c][oy * s - pad + ky][ox * s - pad + kx]
// with row stride ld, so several samples can share one column matrix.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, int s, int pad, int ho, int wo,
            T* col, std::size_t ld) {
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * ld;
        // Output columns whose source column is inside the image.
        const int x_lo = s == 1 ? std::clamp(pad - kx, 0, wo) : 0;
        const int x_hi = s == 1 ? std::clamp(w + pad - kx, x_lo, wo) : wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - pad + ky;
          T* out = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + wo, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          if (s == 1) {
            const T* sh = src + kx - pad;
            for (int ox = 0; ox < x_lo; ++ox) out[ox] = T{0};
            for (int ox = x_lo; ox < x_hi; ++ox) out[ox] = sh[ox];
            for (int ox = x_hi; ox < wo; ++ox) out[ox] = T{0};
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - pad + kx;
              out[ox] = (ix >= 0 && ix < w) ? src[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col back into x.
template <typename T>
void col2im(const T* col, std::size_t ld, int c, int h, int w, int k, int s, int pad,
            int ho, int wo, T* x) {
  for (int ci = 0; ci < c; ++ci) {
    T* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * ld;
        const int x_lo = s == 1 ? std::clamp(pad - kx, 0, wo) : 0;
        const int x_hi = s == 1 ? std::clamp(w + pad - kx, x_lo, wo) : wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const T* in = row + static_cast<std::size_t>(oy) * wo;
          if (s == 1) {
            T* d = dst + kx - pad;
            for (int ox = x_lo; ox < x_hi; ++ox) d[ox] += in[ox];
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - pad + kx;
              if (ix >= 0 && ix < w) dst[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

/// Column matrix of a whole batch: (in * k * k) x (batch * ho * wo).
template <typename T>
void batch_im2col(const ConvLayer& L, const Tensor<T>& x, int ho, int wo,
                  std::vector<T>& col) {
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  const std::size_t ld = n * x.batch();
  col.resize(static_cast<std::size_t>(L.in) * L.kernel * L.kernel * ld);
  for (int b = 0; b < x.batch(); ++b) {
    im2col(x.sample(b), L.in, x.height(), x.width(), L.kernel, L.stride, L.pad, ho, wo,
           col.data() + b * n, ld);
  }
}

// Stride-1 convolutions with "same" padding skip im2col. Every sample is
// zero-padded to hp x wp and the batch is laid out back to back per channel,
// so tap (ky, kx) reads the buffer shifted by ky * wp + kx and each tap is a
// plain GEMM. Outputs land on the padded grid; off-image columns are dropped.
inline bool shifted_conv(const ConvLayer& L) {
  return L.stride == 1 && 2 * L.pad == L.kernel - 1;
}

struct ShiftGrid {
  int hp, wp;
  std::size_t plane;   // hp * wp
  std::size_t total;   // batch * plane
  std::size_t margin;  // largest tap offset
};

inline ShiftGrid shift_grid(const ConvLayer& L, int batch, int h, int w) {
  ShiftGrid g;
  g.hp = h + 2 * L.pad;
  g.wp = w + 2 * L.pad;
  g.plane = static_cast<std::size_t>(g.hp) * g.wp;
  g.total = g.plane * batch;
  g.margin = static_cast<std::size_t>(L.kernel - 1) * g.wp + (L.kernel - 1);
  return g;
}

/// Convolution forward. Whatever the backward pass needs from the input is
/// left in `col`.
template <typename T>
Tensor<T> conv_forward(const ConvLayer& L, const T* params, const Tensor<T>& x,
                       std::vector<T>& col, std::vector<T>& scratch) {
  const int ho = conv_out_size(x.height(), L.kernel, L.stride, L.pad);
  const int wo = conv_out_size(x.width(), L.kernel, L.stride, L.pad);
  const int nb = x.batch();
  const T* bias = params + L.bias;
  Tensor<T> y(nb, L.out, ho, wo);

  if (shifted_conv(L)) {
    const int h = x.height(), w = x.width(), k = L.kernel, kk = k * k;
    const ShiftGrid g = shift_grid(L, nb, h, w);
    const std::size_t ld = g.total;
    col.assign(static_cast<std::size_t>(L.in) * ld + g.margin, T{0});
    for (int c = 0; c < L.in; ++c) {
      for (int b = 0; b < nb; ++b) {
        T* dst = col.data() + c * ld + b * g.plane + L.pad * g.wp + L.pad;
        const T* src = x.plane(b, c);
        for (int yy = 0; yy < h; ++yy) {
          std::copy(src + yy * w, src + (yy + 1) * w, dst + yy * g.wp);
        }
      }
    }
    scratch.resize(static_cast<std::size_t>(L.out) * ld);
    for (int o = 0; o < L.out; ++o) {
      std::fill(scratch.begin() + o * ld, scratch.begin() + (o + 1) * ld, bias[o]);
    }
    for (int t = 0; t < kk; ++t) {
      const std::size_t off = static_cast<std::size_t>(t / k) * g.wp + t % k;
      kernels::gemm_bcast<T>(L.out, static_cast<int>(ld), L.in, params + L.weight + t,
                             static_cast<std::ptrdiff_t>(L.in) * kk, kk, col.data() + off,
                             static_cast<std::ptrdiff_t>(ld), scratch.data(),
                             static_cast<std::ptrdiff_t>(ld));
    }
    for (int o = 0; o < L.out; ++o) {
      for (int b = 0; b < nb; ++b) {
        const T* src = scratch.data() + o * ld + b * g.plane;
        T* dst = y.plane(b, o);
        for (int yy = 0; yy < ho; ++yy) {
          std::copy(src + yy * g.wp, src + yy * g.wp + wo, dst + yy * wo);
        }
      }
    }
    return y;
  }

  const int kdim = L.in * L.kernel * L.kernel;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  const std::size_t ld = n * nb;
  batch_im2col(L, x, ho, wo, col);
  scratch.resize(static_cast<std::size_t>(L.out) * ld);
  for (int o = 0; o < L.out; ++o) {
    std::fill(scratch.begin() + o * ld, scratch.begin() + (o + 1) * ld, bias[o]);
  }
  kernels::gemm_nn<T>(L.out, static_cast<int>(ld), kdim, params + L.weight, kdim, col.data(),
                      static_cast<std::ptrdiff_t>(ld), scratch.data(),
                      static_cast<std::ptrdiff_t>(ld));
  for (int o = 0; o < L.out; ++o) {
    for (int b = 0; b < nb; ++b) {
      const T* src = scratch.data() + o * ld + b * n;
      std::copy(src, src + n, y.plane(b, o));
    }
  }
  return y;
}

/// Accumulates weight/bias gradients; writes dx when non-null. `col` must be
/// what conv_forward left for the same input.
template <typename T>
void conv_backward(const ConvLayer& L, const T* params, T* grads, const Tensor<T>& x,
                   const std::vector<T>& col, const Tensor<T>& dy, Tensor<T>* dx,
                   std::vector<T>& scratch, std::vector<T>& dcol) {
  const int ho = dy.height(), wo = dy.width();
  const int nb = dy.batch();
  T* dbias = grads + L.bias;
  for (int o = 0; o < L.out; ++o) {
    T acc{};
    for (int b = 0; b < nb; ++b) {
      const T* p = dy.plane(b, o);
      for (int i = 0; i < ho * wo; ++i) acc += p[i];
    }
    dbias[o] += acc;
  }

  if (shifted_conv(L)) {
    const int h = x.height(), w = x.width(), k = L.kernel, kk = k * k;
    const ShiftGrid g = shift_grid(L, nb, h, w);
    const std::size_t ld = g.total;
    // dy on the padded grid, behind a zero margin so negative shifts stay in range
    const std::size_t lz = g.margin + ld;
    scratch.assign(static_cast<std::size_t>(L.out) * lz, T{0});
    for (int o = 0; o < L.out; ++o) {
      for (int b = 0; b < nb; ++b) {
        T* dst = scratch.data() + o * lz + g.margin + b * g.plane;
        const T* src = dy.plane(b, o);
        for (int yy = 0; yy < ho; ++yy) {
          std::copy(src + yy * wo, src + (yy + 1) * wo, dst + yy * g.wp);
        }
      }
    }
    const T* z = scratch.data() + g.margin;
    std::vector<T> tap(static_cast<std::size_t>(L.out) * L.in);
    T* gw = grads + L.weight;
    for (int t = 0; t < kk; ++t) {
      const std::size_t off = static_cast<std::size_t>(t / k) * g.wp + t % k;
      std::fill(tap.begin(), tap.end(), T{0});
      kernels::gemm_nt<T>(L.out, L.in, static_cast<int>(ld), z,
                          static_cast<std::ptrdiff_t>(lz), col.data() + off,
                          static_cast<std::ptrdiff_t>(ld), tap.data(), L.in);
      for (int o = 0; o < L.out; ++o) {
        for (int c = 0; c < L.in; ++c) {
          gw[(static_cast<std::size_t>(o) * L.in + c) * kk + t] += tap[o * L.in + c];
        }
      }
    }
    if (!dx) return;
    dcol.assign(static_cast<std::size_t>(L.in) * ld, T{0});
    for (int t = 0; t < kk; ++t) {
      const std::size_t off = static_cast<std::size_t>(t / k) * g.wp + t % k;
      kernels::gemm_bcast<T>(L.in, static_cast<int>(ld), L.out, params + L.weight + t, kk,
                             static_cast<std::ptrdiff_t>(L.in) * kk, z - off,
                             static_cast<std::ptrdiff_t>(lz), dcol.data(),
                             static_cast<std::ptrdiff_t>(ld));
    }
    *dx = Tensor<T>(x.batch(), x.channels(), h, w);
    for (int c = 0; c < L.in; ++c) {
      for (int b = 0; b < nb; ++b) {
        const T* src = dcol.data() + c * ld + b * g.plane + L.pad * g.wp + L.pad;
        T* dst = dx->plane(b, c);
        for (int yy = 0; yy < h; ++yy) {
          std::copy(src + yy * g.wp, src + yy * g.wp + w, dst + yy * w);
        }
      }
    }
    return;
  }

  const int kdim = L.in * L.kernel * L.kernel;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  const std::size_t ld = n * nb;
  // dy as out x (batch * n)
  scratch.resize(static_cast<std::size_t>(L.out) * ld);
  for (int o = 0; o < L.out; ++o) {
    for (int b = 0; b < nb; ++b) {
      const T* p = dy.plane(b, o);
      std::copy(p, p + n, scratch.begin() + o * ld + b * n);
    }
  }
  kernels::gemm_nt<T>(L.out, kdim, static_cast<int>(ld), scratch.data(),
                      static_cast<std::ptrdiff_t>(ld), col.data(),
                      static_cast<std::ptrdiff_t>(ld), grads + L.weight, kdim);
  if (!dx) return;
  dcol.assign(static_cast<std::size_t>(kdim) * ld, T{0});
  kernels::gemm_tn<T>(kdim, static_cast<int>(ld), L.out, params + L.weight, kdim,
                      scratch.data(), static_cast<std::ptrdiff_t>(ld), dcol.data(),
                      static_cast<std::ptrdiff_t>(ld));
  *dx = Tensor<T>(x.batch(), x.channels(), x.height(), x.width());
  for (int b = 0; b < nb; ++b) {
    col2im(dcol.data() + b * n, ld, L.in, x.height(), x.width(), L.kernel, L.stride, L.pad,
           ho, wo, dx->sample(b));
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.span()) v = v > T{0} ? v : T{0};
}

/// dz = dy where the post-ReLU activation is positive.
template <typename T>
void relu_backward_inplace(const Tensor<T>& activation, Tensor<T>& grad) {
  const T* a = activation.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(a[i] > T{0})) g[i] = T{0};
  }
}

template <typename T>
T sigmoid(T z) {
  return z >= T{0} ? T{1} / (T{1} + std::exp(-z)) : std::exp(z) / (T{1} + std::exp(z));
}

/// Squeeze-and-excitation style channel gating. Fills pooled/hidden/gate.
template <typename T>
Tensor<T> attention_forward(const AttentionLayer& L, const T* params, const Tensor<T>& x,
                            Tensor<T>& pooled, Tensor<T>& hidden, Tensor<T>& gate) {
  const int nb = x.batch(), c = L.channels, hd = L.hidden;
  const std::size_t plane = x.plane_size();
  pooled = Tensor<T>(nb, c, 1, 1);
  hidden = Tensor<T>(nb, hd, 1, 1);
  gate = Tensor<T>(nb, c, 1, 1);
  Tensor<T> y(nb, c, x.height(), x.width());
  const T* w1 = params + L.w1;
  const T* b1 = params + L.b1;
  const T* w2 = params + L.w2;
  const T* b2 = params + L.b2;
  for (int b = 0; b < nb; ++b) {
    T* g = pooled.sample(b);
    for (int ci = 0; ci < c; ++ci) {
      const T* p = x.plane(b, ci);
      T acc{};
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      g[ci] = acc / static_cast<T>(plane);
    }
    T* hv = hidden.sample(b);
    for (int j = 0; j < hd; ++j) {
      T acc = b1[j];
      for (int ci = 0; ci < c; ++ci) acc += w1[static_cast<std::size_t>(j) * c + ci] * g[ci];
      hv[j] = acc > T{0} ? acc : T{0};
    }
    T* gv = gate.sample(b);
    for (int ci = 0; ci < c; ++ci) {
      T acc = b2[ci];
      for (int j = 0; j < hd; ++j) acc += w2[static_cast<std::size_t>(ci) * hd + j] * hv[j];
      gv[ci] = sigmoid(acc);
      const T* src = x.plane(b, ci);
      T* dst = y.plane(b, ci);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gv[ci];
    }
  }
  return y;
}

template <typename T>
Tensor<T> attention_backward(const AttentionLayer& L, const T* params, T* grads,
                             const Tensor<T>& x, const Tensor<T>& pooled,
                             const Tensor<T>& hidden, const Tensor<T>& gate,
                             const Tensor<T>& dy) {
  const int nb = x.batch(), c = L.channels, hd = L.hidden;
  const std::size_t plane = x.plane_size();
  const T* w1 = params + L.w1;
  const T* w2 = params + L.w2;
  T* dw1 = grads + L.w1;
  T* db1 = grads + L.b1;
  T* dw2 = grads + L.w2;
  T* db2 = grads + L.b2;
  Tensor<T> dx(nb, c, x.height(), x.width());
  std::vector<T> dz2(static_cast<std::size_t>(c)), dz1(static_cast<std::size_t>(hd));
  for (int b = 0; b < nb; ++b) {
    const T* gv = gate.sample(b);
    const T* hv = hidden.sample(b);
    const T* pv = pooled.sample(b);
    for (int ci = 0; ci < c; ++ci) {
      const T* xs = x.plane(b, ci);
      const T* ds = dy.plane(b, ci);
      T* dxs = dx.plane(b, ci);
      T dg{};
      for (std::size_t i = 0; i < plane; ++i) {
        dg += ds[i] * xs[i];
        dxs[i] = ds[i] * gv[ci];
      }
      dz2[ci] = dg * gv[ci] * (T{1} - gv[ci]);
      db2[ci] += dz2[ci];
      for (int j = 0; j < hd; ++j) dw2[static_cast<std::size_t>(ci) * hd + j] += dz2[ci] * hv[j];
    }
    for (int j = 0; j < hd; ++j) {
      T acc{};
      for (int ci = 0; ci < c; ++ci) acc += w2[static_cast<std::size_t>(ci) * hd + j] * dz2[ci];
      dz1[j] = hv[j] > T{0} ? acc : T{0};
      db1[j] += dz1[j];
      for (int ci = 0; ci < c; ++ci) dw1[static_cast<std::size_t>(j) * c + ci] += dz1[j] * pv[ci];
    }
    for (int ci = 0; ci < c; ++ci) {
      T dpool{};
      for (int j = 0; j < hd; ++j) dpool += w1[static_cast<std::size_t>(j) * c + ci] * dz1[j];
      const T spread = dpool / static_cast<T>(plane);
      T* dxs = dx.plane(b, ci);
      for (std::size_t i = 0; i < plane; ++i) dxs[i] += spread;
    }
  }
  return dx;
}

/// Bilinear resize of every plane into channels [c0, c0 + C) of dst.
template <typename T>
void upsample_into(const Tensor<T>& src, Tensor<T>& dst, int c0) {
  const auto ty = linear_taps(src.height(), dst.height());
  const auto tx = linear_taps(src.width(), dst.width());
  const int sw = src.width();
  for (int b = 0; b < src.batch(); ++b) {
    for (int c = 0; c < src.channels(); ++c) {
      const T* s = src.plane(b, c);
      T* d = dst.plane(b, c0 + c);
      for (int y = 0; y < dst.height(); ++y) {
        const auto& a = ty[y];
        const T wy = static_cast<T>(a.w1);
        const T* r0 = s + static_cast<std::size_t>(a.i0) * sw;
        const T* r1 = s + static_cast<std::size_t>(a.i1) * sw;
        T* out = d + static_cast<std::size_t>(y) * dst.width();
        for (int x = 0; x < dst.width(); ++x) {
          const auto& t = tx[x];
          const T wx = static_cast<T>(t.w1);
          const T top = r0[t.i0] + wx * (r0[t.i1] - r0[t.i0]);
          const T bot = r1[t.i0] + wx * (r1[t.i1] - r1[t.i0]);
          out[x] = top + wy * (bot - top);
        }
      }
    }
  }
}

/// Adjoint of upsample_into: gathers channels [c0, c0 + C) of dout into dsrc.
template <typename T>
void upsample_backward(const Tensor<T>& dout, int c0, Tensor<T>& dsrc) {
  const auto ty = linear_taps(dsrc.height(), dout.height());
  const auto tx = linear_taps(dsrc.width(), dout.width());
  const int sw = dsrc.width();
  for (int b = 0; b < dsrc.batch(); ++b) {
    for (int c = 0; c < dsrc.channels(); ++c) {
      const T* d = dout.plane(b, c0 + c);
      T* s = dsrc.plane(b, c);
      for (int y = 0; y < dout.height(); ++y) {
        const auto& a = ty[y];
        const T wy = static_cast<T>(a.w1);
        T* r0 = s + static_cast<std::size_t>(a.i0) * sw;
        T* r1 = s + static_cast<std::size_t>(a.i1) * sw;
        const T* in = d + static_cast<std::size_t>(y) * dout.width();
        for (int x = 0; x < dout.width(); ++x) {
          const auto& t = tx[x];
          const T wx = static_cast<T>(t.w1);
          const T g = in[x];
          const T gt = g * (T{1} - wy), gb = g * wy;
          r0[t.i0] += gt * (T{1} - wx);
          r0[t.i1] += gt * wx;
          r1[t.i0] += gb * (T{1} - wx);
          r1[t.i1] += gb * wx;
        }
      }
    }
  }
}

}  // namespace lwdepth::layers

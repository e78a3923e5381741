#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "volscan/gemm.hpp"
#include "volscan/tensor.hpp"

// Differentiable primitives. Convolutions are same-padded, stride-1, and run
// as im2col + GEMM; every backward is analytic and checked against central
// finite differences in the test suite.

namespace volscan {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------- im2col ---

// col[(c*9 + kh*3 + kw)][y*W + x] = im[c][y+kh-1][x+kw-1], zero outside.
template <typename T>
void im2col3x3(const T* im, std::size_t c_in, std::size_t h, std::size_t w, T* col) {
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    const T* src = im + c * plane;
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        T* row = col + ((c * 3 + kh) * 3 + kw) * plane;
        const int dy = kh - 1, dx = kw - 1;
        for (std::size_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const long sy = long(y) + dy;
          if (sy < 0 || sy >= long(h)) {
            std::memset(dst, 0, w * sizeof(T));
            continue;
          }
          const T* s = src + std::size_t(sy) * w;
          if (dx == 0) {
            std::memcpy(dst, s, w * sizeof(T));
          } else if (dx < 0) {
            dst[0] = T(0);
            std::memcpy(dst + 1, s, (w - 1) * sizeof(T));
          } else {
            std::memcpy(dst, s + 1, (w - 1) * sizeof(T));
            dst[w - 1] = T(0);
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col3x3: im += fold(col).
template <typename T>
void col2im3x3_acc(const T* col, std::size_t c_in, std::size_t h, std::size_t w, T* im) {
  const std::size_t plane = h * w;
  for (std::size_t c = 0; c < c_in; ++c) {
    T* dst_plane = im + c * plane;
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) {
        const T* row = col + ((c * 3 + kh) * 3 + kw) * plane;
        const int dy = kh - 1, dx = kw - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = long(y) + dy;
          if (sy < 0 || sy >= long(h)) continue;
          const T* s = row + y * w;
          T* d = dst_plane + std::size_t(sy) * w;
          if (dx == 0) {
            for (std::size_t x = 0; x < w; ++x) d[x] += s[x];
          } else if (dx < 0) {
            for (std::size_t x = 1; x < w; ++x) d[x - 1] += s[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) d[x + 1] += s[x];
          }
        }
      }
    }
  }
}

// 3D analogue, kernel 3x3x3: col rows indexed (c, kd, kh, kw), cols (z,y,x).
template <typename T>
void im2col3x3x3(const T* im, std::size_t c_in, std::size_t d, std::size_t h, std::size_t w,
                 T* col) {
  const std::size_t plane = h * w, vol = d * plane;
  for (std::size_t c = 0; c < c_in; ++c) {
    const T* src = im + c * vol;
    for (int kd = 0; kd < 3; ++kd) {
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          T* row = col + (((c * 3 + kd) * 3 + kh) * 3 + kw) * vol;
          const int dz = kd - 1, dy = kh - 1, dx = kw - 1;
          for (std::size_t z = 0; z < d; ++z) {
            const long sz = long(z) + dz;
            if (sz < 0 || sz >= long(d)) {
              std::memset(row + z * plane, 0, plane * sizeof(T));
              continue;
            }
            const T* splane = src + std::size_t(sz) * plane;
            for (std::size_t y = 0; y < h; ++y) {
              T* dst = row + z * plane + y * w;
              const long sy = long(y) + dy;
              if (sy < 0 || sy >= long(h)) {
                std::memset(dst, 0, w * sizeof(T));
                continue;
              }
              const T* s = splane + std::size_t(sy) * w;
              if (dx == 0) {
                std::memcpy(dst, s, w * sizeof(T));
              } else if (dx < 0) {
                dst[0] = T(0);
                std::memcpy(dst + 1, s, (w - 1) * sizeof(T));
              } else {
                std::memcpy(dst, s + 1, (w - 1) * sizeof(T));
                dst[w - 1] = T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3x3_acc(const T* col, std::size_t c_in, std::size_t d, std::size_t h, std::size_t w,
                     T* im) {
  const std::size_t plane = h * w, vol = d * plane;
  for (std::size_t c = 0; c < c_in; ++c) {
    T* dst_vol = im + c * vol;
    for (int kd = 0; kd < 3; ++kd) {
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          const T* row = col + (((c * 3 + kd) * 3 + kh) * 3 + kw) * vol;
          const int dz = kd - 1, dy = kh - 1, dx = kw - 1;
          for (std::size_t z = 0; z < d; ++z) {
            const long sz = long(z) + dz;
            if (sz < 0 || sz >= long(d)) continue;
            for (std::size_t y = 0; y < h; ++y) {
              const long sy = long(y) + dy;
              if (sy < 0 || sy >= long(h)) continue;
              const T* s = row + z * plane + y * w;
              T* dd = dst_vol + std::size_t(sz) * plane + std::size_t(sy) * w;
              if (dx == 0) {
                for (std::size_t x = 0; x < w; ++x) dd[x] += s[x];
              } else if (dx < 0) {
                for (std::size_t x = 1; x < w; ++x) dd[x - 1] += s[x];
              } else {
                for (std::size_t x = 0; x + 1 < w; ++x) dd[x + 1] += s[x];
              }
            }
          }
        }
      }
    }
  }
}

// ----------------------------------------------------------------- conv2d ---

// in [N,C,H,W] (leading axis = independent slices), w [Co,C,3,3], b [Co].
template <typename T>
void conv2d_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                    TensorT<T>& out, std::vector<T>& col) {
  require(in.rank() == 4, "conv2d: input must be rank 4, got " + shape_str(in.shape()));
  require(w.rank() == 4 && w.dim(2) == 3 && w.dim(3) == 3,
          "conv2d: kernel must be [Cout,Cin,3,3], got " + shape_str(w.shape()));
  const std::size_t n = in.dim(0), c_in = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t c_out = w.dim(0);
  if (w.dim(1) != c_in)
    throw ShapeError("conv2d: input channels " + shape_str(in.shape()) +
                     " do not match kernel " + shape_str(w.shape()));
  require(b.size() == c_out, "conv2d: bias size mismatch");

  const std::size_t plane = h * wd, k = c_in * 9;
  out.resize({n, c_out, h, wd});
  col.resize(k * plane);
  for (std::size_t s = 0; s < n; ++s) {
    im2col3x3(in.data() + s * c_in * plane, c_in, h, wd, col.data());
    gemm<T>(false, false, c_out, plane, k, T(1), w.data(), col.data(), T(0),
            out.data() + s * c_out * plane);
    for (std::size_t co = 0; co < c_out; ++co) {
      T* o = out.data() + (s * c_out + co) * plane;
      const T bias = b[co];
      for (std::size_t i = 0; i < plane; ++i) o[i] += bias;
    }
  }
}

template <typename T>
void conv2d_backward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& d_out,
                     TensorT<T>* d_in, TensorT<T>& d_w, TensorT<T>& d_b, std::vector<T>& col) {
  const std::size_t n = in.dim(0), c_in = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t c_out = w.dim(0), plane = h * wd, k = c_in * 9;
  col.resize(k * plane);
  if (d_in) {
    d_in->resize(in.shape());
    d_in->zero();
  }
  for (std::size_t s = 0; s < n; ++s) {
    const T* dy = d_out.data() + s * c_out * plane;
    im2col3x3(in.data() + s * c_in * plane, c_in, h, wd, col.data());
    gemm<T>(false, true, c_out, k, plane, T(1), dy, col.data(), T(1), d_w.data());
    for (std::size_t co = 0; co < c_out; ++co) {
      T acc = T(0);
      const T* row = dy + co * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += row[i];
      d_b[co] += acc;
    }
    if (d_in) {
      gemm<T>(true, false, k, plane, c_out, T(1), w.data(), dy, T(0), col.data());
      col2im3x3_acc(col.data(), c_in, h, wd, d_in->data() + s * c_in * plane);
    }
  }
}

// ----------------------------------------------------------------- conv3d ---

// in [C,D,H,W], w [Co,C,3,3,3], b [Co].
template <typename T>
void conv3d_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                    TensorT<T>& out, std::vector<T>& col) {
  require(in.rank() == 4, "conv3d: input must be rank 4 [C,D,H,W], got " + shape_str(in.shape()));
  require(w.rank() == 5 && w.dim(2) == 3 && w.dim(3) == 3 && w.dim(4) == 3,
          "conv3d: kernel must be [Cout,Cin,3,3,3], got " + shape_str(w.shape()));
  const std::size_t c_in = in.dim(0), d = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t c_out = w.dim(0);
  if (w.dim(1) != c_in)
    throw ShapeError("conv3d: input channels " + shape_str(in.shape()) +
                     " do not match kernel " + shape_str(w.shape()));
  require(b.size() == c_out, "conv3d: bias size mismatch");

  const std::size_t vol = d * h * wd, k = c_in * 27;
  out.resize({c_out, d, h, wd});
  col.resize(k * vol);
  im2col3x3x3(in.data(), c_in, d, h, wd, col.data());
  gemm<T>(false, false, c_out, vol, k, T(1), w.data(), col.data(), T(0), out.data());
  for (std::size_t co = 0; co < c_out; ++co) {
    T* o = out.data() + co * vol;
    const T bias = b[co];
    for (std::size_t i = 0; i < vol; ++i) o[i] += bias;
  }
}

template <typename T>
void conv3d_backward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& d_out,
                     TensorT<T>* d_in, TensorT<T>& d_w, TensorT<T>& d_b, std::vector<T>& col) {
  const std::size_t c_in = in.dim(0), d = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const std::size_t c_out = w.dim(0), vol = d * h * wd, k = c_in * 27;
  col.resize(k * vol);
  im2col3x3x3(in.data(), c_in, d, h, wd, col.data());
  gemm<T>(false, true, c_out, k, vol, T(1), d_out.data(), col.data(), T(1), d_w.data());
  for (std::size_t co = 0; co < c_out; ++co) {
    T acc = T(0);
    const T* row = d_out.data() + co * vol;
    for (std::size_t i = 0; i < vol; ++i) acc += row[i];
    d_b[co] += acc;
  }
  if (d_in) {
    d_in->resize(in.shape());
    d_in->zero();
    gemm<T>(true, false, k, vol, c_out, T(1), w.data(), d_out.data(), T(0), col.data());
    col2im3x3x3_acc(col.data(), c_in, d, h, wd, d_in->data());
  }
}

// ------------------------------------------------------------- max pooling ---

// 2x2/stride-2 over [N,C,H,W]; H and W must be even. argmax keeps the flat
// in-plane index of the winning cell, first in row-major scan order on ties.
template <typename T>
void maxpool2d_forward(const TensorT<T>& in, TensorT<T>& out, std::vector<std::uint32_t>& argmax) {
  require(in.rank() == 4, "maxpool2d: input must be rank 4");
  const std::size_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h % 2 || w % 2)
    throw ShapeError("maxpool2d: spatial dims must be even, got " + shape_str(in.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  out.resize({n, c, oh, ow});
  argmax.resize(n * c * oh * ow);
  std::size_t oi = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = in.data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++oi) {
        std::uint32_t best = std::uint32_t(2 * y * w + 2 * x);
        T bv = src[best];
        const std::uint32_t cand[3] = {std::uint32_t(2 * y * w + 2 * x + 1),
                                       std::uint32_t((2 * y + 1) * w + 2 * x),
                                       std::uint32_t((2 * y + 1) * w + 2 * x + 1)};
        for (std::uint32_t idx : cand)
          if (src[idx] > bv) {
            bv = src[idx];
            best = idx;
          }
        out[oi] = bv;
        argmax[oi] = best;
      }
    }
  }
}

template <typename T>
void maxpool2d_backward(const TensorT<T>& d_out, const std::vector<std::uint32_t>& argmax,
                        const Shape& in_shape, TensorT<T>& d_in) {
  const std::size_t planes = in_shape[0] * in_shape[1], plane = in_shape[2] * in_shape[3];
  const std::size_t oplane = d_out.dim(2) * d_out.dim(3);
  d_in.resize(in_shape);
  d_in.zero();
  for (std::size_t p = 0; p < planes; ++p) {
    T* dst = d_in.data() + p * plane;
    const T* src = d_out.data() + p * oplane;
    const std::uint32_t* am = argmax.data() + p * oplane;
    for (std::size_t i = 0; i < oplane; ++i) dst[am[i]] += src[i];
  }
}

// Pool over [C,D,H,W] with window (pd,2,2), pd in {1,2}. An odd trailing depth
// slice is dropped (Keras floor semantics); H and W must be even.
template <typename T>
void maxpool3d_forward(const TensorT<T>& in, std::size_t pd, TensorT<T>& out,
                       std::vector<std::uint32_t>& argmax) {
  require(in.rank() == 4, "maxpool3d: input must be rank 4");
  const std::size_t c = in.dim(0), d = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h % 2 || w % 2)
    throw ShapeError("maxpool3d: spatial dims must be even, got " + shape_str(in.shape()));
  const std::size_t eff_pd = (pd == 2 && d >= 2) ? 2 : 1;
  const std::size_t od = d / eff_pd, oh = h / 2, ow = w / 2;
  out.resize({c, od, oh, ow});
  argmax.resize(c * od * oh * ow);
  const std::size_t vol = d * h * w;
  std::size_t oi = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T* src = in.data() + ch * vol;
    for (std::size_t z = 0; z < od; ++z) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++oi) {
          std::uint32_t best = 0;
          T bv = T(0);
          bool first = true;
          for (std::size_t dz = 0; dz < eff_pd; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::uint32_t idx =
                    std::uint32_t(((z * eff_pd + dz) * h + 2 * y + dy) * w + 2 * x + dx);
                if (first || src[idx] > bv) {
                  bv = src[idx];
                  best = idx;
                  first = false;
                }
              }
          out[oi] = bv;
          argmax[oi] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool3d_backward(const TensorT<T>& d_out, const std::vector<std::uint32_t>& argmax,
                        const Shape& in_shape, TensorT<T>& d_in) {
  const std::size_t c = in_shape[0], vol = in_shape[1] * in_shape[2] * in_shape[3];
  const std::size_t ovol = d_out.dim(1) * d_out.dim(2) * d_out.dim(3);
  d_in.resize(in_shape);
  d_in.zero();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T* dst = d_in.data() + ch * vol;
    const T* src = d_out.data() + ch * ovol;
    const std::uint32_t* am = argmax.data() + ch * ovol;
    for (std::size_t i = 0; i < ovol; ++i) dst[am[i]] += src[i];
  }
}

// --------------------------------------------------------------- batchnorm ---

// Per-channel normalization over every non-channel axis. The input is viewed
// as [outer, C, inner] around the channel axis, which covers both the
// slice-sequence layout [D,C,H,W] (axis 1) and the 3D layout [C,D,H,W] (axis 0).
template <typename T>
struct BnCache {
  TensorT<T> xhat;
  std::vector<T> istd;  // per channel, train mode
  std::size_t outer = 0, channels = 0, inner = 0;
};

template <typename T>
void batchnorm_forward(const TensorT<T>& in, const TensorT<T>& gamma, const TensorT<T>& beta,
                       std::size_t channel_axis, Mode mode, TensorT<T>& running_mean,
                       TensorT<T>& running_var, TensorT<T>& batches, double eps, double momentum,
                       TensorT<T>& out, BnCache<T>* cache) {
  require(channel_axis < in.rank(), "batchnorm: channel axis out of range");
  const std::size_t c = in.dim(channel_axis);
  require(gamma.size() == c && beta.size() == c, "batchnorm: gamma/beta size mismatch");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < channel_axis; ++i) outer *= in.dim(i);
  for (std::size_t i = channel_axis + 1; i < in.rank(); ++i) inner *= in.dim(i);
  const std::size_t m = outer * inner;
  out.resize(in.shape());

  if (mode == Mode::Eval) {
    if (batches.size() == 0 || batches[0] <= T(0))
      throw StateError("batchnorm: eval mode requested before running statistics exist");
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T scale = gamma[ch] / T(std::sqrt(double(running_var[ch]) + eps));
      const T shift = beta[ch] - scale * running_mean[ch];
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = in.data() + (o * c + ch) * inner;
        T* dst = out.data() + (o * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] = scale * src[i] + shift;
      }
    }
    return;
  }

  if (cache) {
    cache->xhat.resize(in.shape());
    cache->istd.resize(c);
    cache->outer = outer;
    cache->channels = c;
    cache->inner = inner;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0, sq = 0;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = in.data() + (o * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        sum += double(src[i]);
        sq += double(src[i]) * double(src[i]);
      }
    }
    const double mean = sum / double(m);
    const double var = std::max(0.0, sq / double(m) - mean * mean);  // biased
    const T istd = T(1.0 / std::sqrt(var + eps));
    const T mu = T(mean), ga = gamma[ch], be = beta[ch];
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = in.data() + (o * c + ch) * inner;
      T* dst = out.data() + (o * c + ch) * inner;
      T* xh = cache ? cache->xhat.data() + (o * c + ch) * inner : nullptr;
      for (std::size_t i = 0; i < inner; ++i) {
        const T v = (src[i] - mu) * istd;
        if (xh) xh[i] = v;
        dst[i] = ga * v + be;
      }
    }
    if (cache) cache->istd[ch] = istd;
    running_mean[ch] = T(momentum) * running_mean[ch] + T(1.0 - momentum) * T(mean);
    running_var[ch] = T(momentum) * running_var[ch] + T(1.0 - momentum) * T(var);
  }
  batches[0] += T(1);
}

template <typename T>
void batchnorm_backward(const BnCache<T>& cache, const TensorT<T>& gamma, const TensorT<T>& d_out,
                        TensorT<T>& d_gamma, TensorT<T>& d_beta, TensorT<T>& d_in) {
  const std::size_t outer = cache.outer, c = cache.channels, inner = cache.inner;
  const std::size_t m = outer * inner;
  d_in.resize(d_out.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* dy = d_out.data() + (o * c + ch) * inner;
      const T* xh = cache.xhat.data() + (o * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        sum_dy += double(dy[i]);
        sum_dy_xhat += double(dy[i]) * double(xh[i]);
      }
    }
    d_gamma[ch] += T(sum_dy_xhat);
    d_beta[ch] += T(sum_dy);
    const T k = gamma[ch] * cache.istd[ch];
    const T mean_dy = T(sum_dy / double(m));
    const T mean_dy_xhat = T(sum_dy_xhat / double(m));
    for (std::size_t o = 0; o < outer; ++o) {
      const T* dy = d_out.data() + (o * c + ch) * inner;
      const T* xh = cache.xhat.data() + (o * c + ch) * inner;
      T* dx = d_in.data() + (o * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i)
        dx[i] = k * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
    }
  }
}

// ------------------------------------------------------------ activations ---

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void sigmoid_forward(const TensorT<T>& in, TensorT<T>& out) {
  out.resize(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid_scalar(in[i]);
}

// d_in = d_out * s * (1 - s), s = cached output
template <typename T>
void sigmoid_backward(const TensorT<T>& out, const TensorT<T>& d_out, TensorT<T>& d_in) {
  d_in.resize(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) d_in[i] = d_out[i] * out[i] * (T(1) - out[i]);
}

template <typename T>
void tanh_forward(const TensorT<T>& in, TensorT<T>& out) {
  out.resize(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
}

template <typename T>
void tanh_backward(const TensorT<T>& out, const TensorT<T>& d_out, TensorT<T>& d_in) {
  d_in.resize(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) d_in[i] = d_out[i] * (T(1) - out[i] * out[i]);
}

template <typename T>
void relu_forward(const TensorT<T>& in, TensorT<T>& out) {
  out.resize(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const TensorT<T>& out, const TensorT<T>& d_out, TensorT<T>& d_in) {
  d_in.resize(out.shape());
  for (std::size_t i = 0; i < out.size(); ++i) d_in[i] = out[i] > T(0) ? d_out[i] : T(0);
}

// ------------------------------------------------------------------ dense ---

// in [N,F], w [1,F], b [1] -> out [N]. N>1 is the shared per-slice head.
template <typename T>
void dense_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                   TensorT<T>& out) {
  require(in.rank() == 2, "dense: input must be [N,F]");
  const std::size_t n = in.dim(0), f = in.dim(1);
  if (w.size() != f)
    throw ShapeError("dense: feature count " + shape_str(in.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  out.resize({n});
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = in.data() + r * f;
    T acc = T(0);
    for (std::size_t i = 0; i < f; ++i) acc += w[i] * x[i];
    out[r] = acc + b[0];
  }
}

template <typename T>
void dense_backward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& d_out,
                    TensorT<T>* d_in, TensorT<T>& d_w, TensorT<T>& d_b) {
  const std::size_t n = in.dim(0), f = in.dim(1);
  if (d_in) d_in->resize(in.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T g = d_out[r];
    const T* x = in.data() + r * f;
    for (std::size_t i = 0; i < f; ++i) d_w[i] += g * x[i];
    d_b[0] += g;
    if (d_in) {
      T* dx = d_in->data() + r * f;
      for (std::size_t i = 0; i < f; ++i) dx[i] = g * w[i];
    }
  }
}

// -------------------------------------------------------------------- loss ---

inline constexpr double kBceEps = 1e-7;

template <typename T>
T clamp_prob(T p) {
  return std::clamp(p, T(kBceEps), T(1.0 - kBceEps));
}

// -[y ln p + (1-y) ln(1-p)], p clamped to [eps, 1-eps].
template <typename T>
T bce_loss(T p, int y) {
  const T pc = clamp_prob(p);
  return y ? -std::log(pc) : -std::log(T(1) - pc);
}

// dL/dp evaluated at the clamped point. Keeping the gradient live at the
// clamp boundary matters: composed with the sigmoid derivative at the same
// clamped p it reduces to the stable (p - y), so a float-saturated output
// still receives a recovery signal instead of a hard zero.
template <typename T>
T bce_grad(T p, int y) {
  const T pc = clamp_prob(p);
  return y ? -T(1) / pc : T(1) / (T(1) - pc);
}

}  // namespace volscan

#pragma once

// Layer kernels for the forward/backward passes. Templated on the scalar type:
// the training path instantiates float, gradient-check oracles instantiate
// double. All backward kernels ACCUMULATE into their output buffers; callers
// zero-initialize gradients once per pass.
//
// Everything here is sequential with a fixed iteration order, so results are
// bit-reproducible run to run.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mergelab/errors.hpp"

namespace mergelab::nn::ops {

struct Conv2dDims {
  std::int64_t n = 0;      // batch
  std::int64_t c_in = 0;
  std::int64_t h_in = 0;
  std::int64_t w_in = 0;
  std::int64_t c_out = 0;
  std::int64_t kh = 0;
  std::int64_t kw = 0;
  std::int64_t stride = 1;
  std::int64_t pad = 0;

  std::int64_t h_out() const { return (h_in + 2 * pad - kh) / stride + 1; }
  std::int64_t w_out() const { return (w_in + 2 * pad - kw) / stride + 1; }
};

namespace detail {

inline std::int64_t div_ceil(std::int64_t a, std::int64_t b) {
  // b > 0; exact ceiling for positive and negative a.
  return a > 0 ? (a + b - 1) / b : a / b;
}

inline std::int64_t div_floor(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// Output index range [lo, hi] such that 0 <= o*stride + k - pad < extent.
inline void valid_out_range(std::int64_t k, std::int64_t pad, std::int64_t stride,
                            std::int64_t extent, std::int64_t out_extent,
                            std::int64_t& lo, std::int64_t& hi) {
  lo = div_ceil(pad - k, stride);
  if (lo < 0) lo = 0;
  hi = div_floor(extent - 1 + pad - k, stride);
  if (hi > out_extent - 1) hi = out_extent - 1;
}

}  // namespace detail

// y[n,oc,oy,ox] = sum_{ic,ky,kx} w[oc,ic,ky,kx] * x[n,ic,oy*s+ky-p,ox*s+kx-p]
// Zero padding is implicit: out-of-range taps are skipped.
template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d) {
  const std::int64_t ho = d.h_out(), wo = d.w_out();
  for (std::int64_t n = 0; n < d.n; ++n) {
    for (std::int64_t oc = 0; oc < d.c_out; ++oc) {
      T* yplane = y + (n * d.c_out + oc) * ho * wo;
      for (std::int64_t i = 0; i < ho * wo; ++i) yplane[i] = T(0);
      for (std::int64_t ic = 0; ic < d.c_in; ++ic) {
        const T* xchan = x + (n * d.c_in + ic) * d.h_in * d.w_in;
        const T* wk = w + (oc * d.c_in + ic) * d.kh * d.kw;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
          std::int64_t oy_lo, oy_hi;
          detail::valid_out_range(ky, d.pad, d.stride, d.h_in, ho, oy_lo, oy_hi);
          for (std::int64_t kx = 0; kx < d.kw; ++kx) {
            const T wv = wk[ky * d.kw + kx];
            std::int64_t ox_lo, ox_hi;
            detail::valid_out_range(kx, d.pad, d.stride, d.w_in, wo, ox_lo, ox_hi);
            const std::int64_t x_shift = kx - d.pad;
            for (std::int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const T* xrow = xchan + (oy * d.stride + ky - d.pad) * d.w_in;
              T* yrow = yplane + oy * wo;
              for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox) {
                yrow[ox] += wv * xrow[ox * d.stride + x_shift];
              }
            }
          }
        }
      }
    }
  }
}

// dx (optional) and dw accumulate gradients for the same tap pattern.
template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, const Conv2dDims& d) {
  const std::int64_t ho = d.h_out(), wo = d.w_out();
  if (dx != nullptr) {
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t ic = 0; ic < d.c_in; ++ic) {
        T* dxchan = dx + (n * d.c_in + ic) * d.h_in * d.w_in;
        for (std::int64_t oc = 0; oc < d.c_out; ++oc) {
          const T* dyplane = dy + (n * d.c_out + oc) * ho * wo;
          const T* wk = w + (oc * d.c_in + ic) * d.kh * d.kw;
          for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            std::int64_t oy_lo, oy_hi;
            detail::valid_out_range(ky, d.pad, d.stride, d.h_in, ho, oy_lo, oy_hi);
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
              const T wv = wk[ky * d.kw + kx];
              std::int64_t ox_lo, ox_hi;
              detail::valid_out_range(kx, d.pad, d.stride, d.w_in, wo, ox_lo, ox_hi);
              const std::int64_t x_shift = kx - d.pad;
              for (std::int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                T* dxrow = dxchan + (oy * d.stride + ky - d.pad) * d.w_in;
                const T* dyrow = dyplane + oy * wo;
                for (std::int64_t ox = ox_lo; ox <= ox_hi; ++ox) {
                  dxrow[ox * d.stride + x_shift] += wv * dyrow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
  if (dw != nullptr) {
    for (std::int64_t oc = 0; oc < d.c_out; ++oc) {
      for (std::int64_t ic = 0; ic < d.c_in; ++ic) {
        T* dwk = dw + (oc * d.c_in + ic) * d.kh * d.kw;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
          std::int64_t oy_lo, oy_hi;
          detail::valid_out_range(ky, d.pad, d.stride, d.h_in, ho, oy_lo, oy_hi);
          for (std::int64_t kx = 0; kx < d.kw; ++kx) {
            std::int64_t ox_lo, ox_hi;
            detail::valid_out_range(kx, d.pad, d.stride, d.w_in, wo, ox_lo, ox_hi);
            // Fixed-width lane accumulation: vectorizable without changing
            // the reduction result between builds with the same flags.
            T lanes[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
            const std::int64_t x_shift = kx - d.pad;
            for (std::int64_t n = 0; n < d.n; ++n) {
              const T* dyplane = dy + (n * d.c_out + oc) * ho * wo;
              const T* xchan = x + (n * d.c_in + ic) * d.h_in * d.w_in;
              for (std::int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                const T* dyrow = dyplane + oy * wo;
                const T* xrow = xchan + (oy * d.stride + ky - d.pad) * d.w_in;
                std::int64_t ox = ox_lo;
                for (; ox + 8 <= ox_hi + 1; ox += 8) {
                  for (int l = 0; l < 8; ++l) {
                    lanes[l] += dyrow[ox + l] * xrow[(ox + l) * d.stride + x_shift];
                  }
                }
                for (int l = 0; ox <= ox_hi; ++ox, ++l) {
                  lanes[l] += dyrow[ox] * xrow[ox * d.stride + x_shift];
                }
              }
            }
            T acc = T(0);
            for (int l = 0; l < 8; ++l) acc += lanes[l];
            dwk[ky * d.kw + kx] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void relu_forward(const T* x, T* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* dy, T* dx, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += dy[i];
  }
}

// Non-overlapping k x k average pooling (stride == k); spatial dims must divide.
template <typename T>
void avgpool_forward(const T* x, T* y, std::int64_t n, std::int64_t c, std::int64_t h,
                     std::int64_t w, std::int64_t k) {
  if (h % k != 0 || w % k != 0) {
    raise(ErrorKind::structure, "avg_pool: spatial dims " + std::to_string(h) + "x" +
                                    std::to_string(w) + " not divisible by kernel " + std::to_string(k));
  }
  const std::int64_t ho = h / k, wo = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  for (std::int64_t nc = 0; nc < n * c; ++nc) {
    const T* xp = x + nc * h * w;
    T* yp = y + nc * ho * wo;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const T* row = xp + (oy * k + ky) * w + ox * k;
          for (std::int64_t kx = 0; kx < k; ++kx) acc += row[kx];
        }
        yp[oy * wo + ox] = acc * inv;
      }
    }
  }
}

template <typename T>
void avgpool_backward(const T* dy, T* dx, std::int64_t n, std::int64_t c, std::int64_t h,
                      std::int64_t w, std::int64_t k) {
  const std::int64_t ho = h / k, wo = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  for (std::int64_t nc = 0; nc < n * c; ++nc) {
    const T* dyp = dy + nc * ho * wo;
    T* dxp = dx + nc * h * w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        const T g = dyp[oy * wo + ox] * inv;
        for (std::int64_t ky = 0; ky < k; ++ky) {
          T* row = dxp + (oy * k + ky) * w + ox * k;
          for (std::int64_t kx = 0; kx < k; ++kx) row[kx] += g;
        }
      }
    }
  }
}

// y[n,j] = sum_k x[n,k] * w[j,k] + b[j]     (w stored [out, in])
template <typename T>
void linear_forward(const T* x, const T* w, const T* b, T* y, std::int64_t n,
                    std::int64_t in, std::int64_t out) {
  for (std::int64_t i = 0; i < n; ++i) {
    const T* xrow = x + i * in;
    T* yrow = y + i * out;
    for (std::int64_t j = 0; j < out; ++j) {
      const T* wrow = w + j * in;
      T lanes[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
      std::int64_t k = 0;
      for (; k + 8 <= in; k += 8) {
        for (int l = 0; l < 8; ++l) lanes[l] += xrow[k + l] * wrow[k + l];
      }
      for (int l = 0; k < in; ++k, ++l) lanes[l] += xrow[k] * wrow[k];
      T acc = b != nullptr ? b[j] : T(0);
      for (int l = 0; l < 8; ++l) acc += lanes[l];
      yrow[j] = acc;
    }
  }
}

template <typename T>
void linear_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db,
                     std::int64_t n, std::int64_t in, std::int64_t out) {
  if (dx != nullptr) {
    for (std::int64_t i = 0; i < n; ++i) {
      const T* dyrow = dy + i * out;
      T* dxrow = dx + i * in;
      for (std::int64_t j = 0; j < out; ++j) {
        const T g = dyrow[j];
        const T* wrow = w + j * in;
        for (std::int64_t k = 0; k < in; ++k) dxrow[k] += g * wrow[k];
      }
    }
  }
  if (dw != nullptr) {
    for (std::int64_t i = 0; i < n; ++i) {
      const T* dyrow = dy + i * out;
      const T* xrow = x + i * in;
      for (std::int64_t j = 0; j < out; ++j) {
        const T g = dyrow[j];
        T* dwrow = dw + j * in;
        for (std::int64_t k = 0; k < in; ++k) dwrow[k] += g * xrow[k];
      }
    }
  }
  if (db != nullptr) {
    for (std::int64_t i = 0; i < n; ++i) {
      const T* dyrow = dy + i * out;
      for (std::int64_t j = 0; j < out; ++j) db[j] += dyrow[j];
    }
  }
}

template <typename T>
void add_forward(const T* a, const T* b, T* y, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

// Group normalization over [n, c, h, w]; statistics per (sample, group).
// num_groups == 1 normalizes each sample over all channels and positions.
// Saves mean and 1/sqrt(var+eps) per (n, group) for the backward pass.
template <typename T>
void group_norm_forward(const T* x, const T* gamma, const T* beta, T* y, std::int64_t n,
                        std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t groups,
                        T eps, T* mean_out, T* istd_out) {
  if (groups < 1 || c % groups != 0) {
    raise(ErrorKind::structure, "group_norm: " + std::to_string(c) + " channels not divisible by " +
                                    std::to_string(groups) + " groups");
  }
  const std::int64_t cpg = c / groups;
  const std::int64_t m = cpg * h * w;  // elements per group
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const T* xg = x + (i * c + g * cpg) * h * w;
      double sum = 0.0, sum_sq = 0.0;
      for (std::int64_t j = 0; j < m; ++j) {
        const double v = static_cast<double>(xg[j]);
        sum += v;
        sum_sq += v * v;
      }
      const double mean = sum / static_cast<double>(m);
      double var = sum_sq / static_cast<double>(m) - mean * mean;
      if (var < 0.0) var = 0.0;  // rounding guard
      const T mu = static_cast<T>(mean);
      const T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      mean_out[i * groups + g] = mu;
      istd_out[i * groups + g] = istd;
      T* yg = y + (i * c + g * cpg) * h * w;
      for (std::int64_t cc = 0; cc < cpg; ++cc) {
        const T ga = gamma[g * cpg + cc];
        const T be = beta[g * cpg + cc];
        const T* xrow = xg + cc * h * w;
        T* yrow = yg + cc * h * w;
        for (std::int64_t j = 0; j < h * w; ++j) {
          yrow[j] = ga * (xrow[j] - mu) * istd + be;
        }
      }
    }
  }
}

template <typename T>
void group_norm_backward(const T* x, const T* gamma, const T* mean, const T* istd, const T* dy,
                         T* dx, T* dgamma, T* dbeta, std::int64_t n, std::int64_t c,
                         std::int64_t h, std::int64_t w, std::int64_t groups) {
  const std::int64_t cpg = c / groups;
  const std::int64_t hw = h * w;
  const std::int64_t m = cpg * hw;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const T* xg = x + (i * c + g * cpg) * hw;
      const T* dyg = dy + (i * c + g * cpg) * hw;
      const T mu = mean[i * groups + g];
      const T is = istd[i * groups + g];
      // S1 = sum(dy*gamma), S2 = sum(dy*gamma*xhat)
      double s1 = 0.0, s2 = 0.0;
      for (std::int64_t cc = 0; cc < cpg; ++cc) {
        const double ga = static_cast<double>(gamma[g * cpg + cc]);
        const T* xrow = xg + cc * hw;
        const T* dyrow = dyg + cc * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const double dxhat = static_cast<double>(dyrow[j]) * ga;
          const double xhat = static_cast<double>((xrow[j] - mu) * is);
          s1 += dxhat;
          s2 += dxhat * xhat;
        }
      }
      const double inv_m = 1.0 / static_cast<double>(m);
      if (dx != nullptr) {
        T* dxg = dx + (i * c + g * cpg) * hw;
        for (std::int64_t cc = 0; cc < cpg; ++cc) {
          const double ga = static_cast<double>(gamma[g * cpg + cc]);
          const T* xrow = xg + cc * hw;
          const T* dyrow = dyg + cc * hw;
          T* dxrow = dxg + cc * hw;
          for (std::int64_t j = 0; j < hw; ++j) {
            const double dxhat = static_cast<double>(dyrow[j]) * ga;
            const double xhat = static_cast<double>((xrow[j] - mu) * is);
            dxrow[j] += static_cast<T>(static_cast<double>(is) * (dxhat - inv_m * (s1 + xhat * s2)));
          }
        }
      }
      if (dgamma != nullptr && dbeta != nullptr) {
        for (std::int64_t cc = 0; cc < cpg; ++cc) {
          const T* xrow = xg + cc * hw;
          const T* dyrow = dyg + cc * hw;
          double dg = 0.0, db = 0.0;
          for (std::int64_t j = 0; j < hw; ++j) {
            const double xhat = static_cast<double>((xrow[j] - mu) * is);
            dg += static_cast<double>(dyrow[j]) * xhat;
            db += static_cast<double>(dyrow[j]);
          }
          dgamma[g * cpg + cc] += static_cast<T>(dg);
          dbeta[g * cpg + cc] += static_cast<T>(db);
        }
      }
    }
  }
}

// Mean cross-entropy over the batch; writes softmax probabilities for the
// backward pass. Loss is accumulated in double regardless of T.
template <typename T>
double softmax_xent_forward(const T* logits, const std::int32_t* labels, std::int64_t n,
                            std::int64_t classes, T* probs) {
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t label = labels[i];
    if (label < 0 || label >= classes) {
      raise(ErrorKind::input, "cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
    const T* row = logits + i * classes;
    T mx = row[0];
    for (std::int64_t j = 1; j < classes; ++j) mx = row[j] > mx ? row[j] : mx;
    double denom = 0.0;
    for (std::int64_t j = 0; j < classes; ++j) {
      denom += std::exp(static_cast<double>(row[j] - mx));
    }
    T* prow = probs + i * classes;
    for (std::int64_t j = 0; j < classes; ++j) {
      prow[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    }
    total += std::log(denom) - static_cast<double>(row[label] - mx);
  }
  return total / static_cast<double>(n);
}

// dlogits += (softmax - onehot) / n, scaled by upstream (the loss gradient).
template <typename T>
void softmax_xent_backward(const T* probs, const std::int32_t* labels, T upstream, T* dlogits,
                           std::int64_t n, std::int64_t classes) {
  const T inv_n = upstream / static_cast<T>(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const T* prow = probs + i * classes;
    T* drow = dlogits + i * classes;
    for (std::int64_t j = 0; j < classes; ++j) drow[j] += prow[j] * inv_n;
    drow[labels[i]] -= inv_n;
  }
}

}  // namespace mergelab::nn::ops

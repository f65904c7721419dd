#pragma once

// Independent scalar-loop reference implementations. Everything here is
// written directly from the layer definitions with plain loops and no shared
// code with the library kernels, so agreement is meaningful.

#include <cmath>
#include <complex>
#include <vector>

#include "eot/tensor.hpp"

namespace oracle {

using eot::Tensor;

// C[m,n] = sum_k op(A)[m,k] op(B)[k,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, size_t m, size_t n, size_t k,
                 bool ta = false, bool tb = false) {
  Tensor<T> c({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (size_t x = 0; x < k; ++x) {
        const T av = ta ? a[x * m + i] : a[i * k + x];
        const T bv = tb ? b[j * k + x] : b[x * n + j];
        acc += static_cast<double>(av) * bv;
      }
      c[i * n + j] = static_cast<T>(acc);
    }
  return c;
}

template <typename T>
void softmax_row(T* v, size_t n) {
  T mx = v[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    v[i] = static_cast<T>(std::exp(static_cast<double>(v[i]) - mx));
    sum += v[i];
  }
  for (size_t i = 0; i < n; ++i) v[i] = static_cast<T>(v[i] / sum);
}

// direct convolution, NCHW, weight (Cout, Cin*kh*kw)
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, size_t kernel,
                 size_t stride, size_t pad, bool with_bias) {
  const size_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const size_t cout = w.dim(0);
  const size_t oh = (h + 2 * pad - kernel) / stride + 1;
  const size_t ow = (wd + 2 * pad - kernel) / stride + 1;
  Tensor<T> y({b, cout, oh, ow});
  for (size_t n = 0; n < b; ++n)
    for (size_t co = 0; co < cout; ++co)
      for (size_t oy = 0; oy < oh; ++oy)
        for (size_t ox = 0; ox < ow; ++ox) {
          double acc = with_bias ? static_cast<double>(bias[co]) : 0.0;
          for (size_t ci = 0; ci < cin; ++ci)
            for (size_t ky = 0; ky < kernel; ++ky)
              for (size_t kx = 0; kx < kernel; ++kx) {
                const long long iy = static_cast<long long>(oy * stride + ky) - pad;
                const long long ix = static_cast<long long>(ox * stride + kx) - pad;
                if (iy < 0 || iy >= static_cast<long long>(h) || ix < 0 ||
                    ix >= static_cast<long long>(wd))
                  continue;
                acc += static_cast<double>(x[((n * cin + ci) * h + iy) * wd + ix]) *
                       w[(co * cin + ci) * kernel * kernel + ky * kernel + kx];
              }
          y[((n * cout + co) * oh + oy) * ow + ox] = static_cast<T>(acc);
        }
  return y;
}

// residual texture encoding: desc (B,G,M,C), codebook (N,C), smoothing (N),
// proj weight (F, N*C) + bias (F) -> (B,G,F)
template <typename T>
Tensor<T> encode_texture(const Tensor<T>& desc, const Tensor<T>& codebook,
                         const Tensor<T>& smoothing, const Tensor<T>& pw, const Tensor<T>& pb) {
  const size_t b = desc.dim(0), g = desc.dim(1), m = desc.dim(2), c = desc.dim(3);
  const size_t n = codebook.dim(0), f = pw.dim(0);
  Tensor<T> out({b, g, f});
  std::vector<double> q(n);
  std::vector<double> agg(n * c);
  for (size_t bg = 0; bg < b * g; ++bg) {
    std::fill(agg.begin(), agg.end(), 0.0);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < n; ++j) {
        double norm2 = 0.0;
        for (size_t ch = 0; ch < c; ++ch) {
          const double r = static_cast<double>(desc[(bg * m + i) * c + ch]) - codebook[j * c + ch];
          norm2 += r * r;
        }
        q[j] = -static_cast<double>(smoothing[j]) * norm2;
      }
      double mx = q[0];
      for (size_t j = 1; j < n; ++j) mx = std::max(mx, q[j]);
      double sum = 0.0;
      for (size_t j = 0; j < n; ++j) {
        q[j] = std::exp(q[j] - mx);
        sum += q[j];
      }
      for (size_t j = 0; j < n; ++j) {
        const double w = q[j] / sum;
        for (size_t ch = 0; ch < c; ++ch)
          agg[j * c + ch] += w * (static_cast<double>(desc[(bg * m + i) * c + ch]) -
                                  codebook[j * c + ch]);
      }
    }
    for (size_t o = 0; o < f; ++o) {
      double acc = pb[o];
      for (size_t x = 0; x < n * c; ++x) acc += static_cast<double>(pw[o * n * c + x]) * agg[x];
      out[bg * f + o] = static_cast<T>(acc);
    }
  }
  return out;
}

// one GAT pass: x (B,k,F), per-head weight (F,F) and attention vector (2F),
// averaged across heads then ReLU
template <typename T>
Tensor<T> gat(const Tensor<T>& x, const std::vector<Tensor<T>>& weights,
              const std::vector<Tensor<T>>& attn, double slope) {
  const size_t b = x.dim(0), k = x.dim(1), f = x.dim(2);
  const size_t heads = weights.size();
  Tensor<T> out({b, k, f});
  out.zero();
  for (size_t n = 0; n < b; ++n)
    for (size_t h = 0; h < heads; ++h) {
      Tensor<T> u({k, f});
      for (size_t i = 0; i < k; ++i)
        for (size_t o = 0; o < f; ++o) {
          double acc = 0.0;
          for (size_t c = 0; c < f; ++c)
            acc += static_cast<double>(weights[h][o * f + c]) * x[(n * k + i) * f + c];
          u[i * f + o] = static_cast<T>(acc);
        }
      Tensor<T> alpha({k, k});
      for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < k; ++j) {
          double e = 0.0;
          for (size_t c = 0; c < f; ++c) e += static_cast<double>(attn[h][c]) * u[i * f + c];
          for (size_t c = 0; c < f; ++c) e += static_cast<double>(attn[h][f + c]) * u[j * f + c];
          alpha[i * k + j] = static_cast<T>(e > 0 ? e : slope * e);
        }
        softmax_row(alpha.data() + i * k, k);
      }
      for (size_t i = 0; i < k; ++i)
        for (size_t c = 0; c < f; ++c) {
          double acc = 0.0;
          for (size_t j = 0; j < k; ++j)
            acc += static_cast<double>(alpha[i * k + j]) * u[j * f + c];
          out[(n * k + i) * f + c] += static_cast<T>(acc / heads);
        }
    }
  for (auto& v : out) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor<T> domain_summary(const Tensor<T>& feats, const Tensor<T>& weights) {
  const size_t b = feats.dim(0), k = feats.dim(1), f = feats.dim(2);
  Tensor<T> out({b, f});
  for (size_t n = 0; n < b; ++n)
    for (size_t c = 0; c < f; ++c) {
      double acc = 0.0;
      for (size_t i = 0; i < k; ++i)
        acc += static_cast<double>(weights[n * k + i]) * feats[(n * k + i) * f + c];
      out[n * f + c] = static_cast<T>(acc);
    }
  return out;
}

// inter-domain pass with affine maps wt_map/ws_map of shape (F, 2F) + bias (F)
template <typename T>
std::pair<Tensor<T>, Tensor<T>> inter_domain(const Tensor<T>& tex, const Tensor<T>& shape,
                                             const Tensor<T>& wt, const Tensor<T>& ws,
                                             const Tensor<T>& tex_w, const Tensor<T>& tex_b,
                                             const Tensor<T>& shape_w, const Tensor<T>& shape_b) {
  const size_t b = tex.dim(0), k = tex.dim(1), f = tex.dim(2);
  Tensor<T> rt = oracle::domain_summary(tex, wt);
  Tensor<T> rs = oracle::domain_summary(shape, ws);
  Tensor<T> out_t({b, k, f}), out_s({b, k, f});
  for (size_t n = 0; n < b; ++n)
    for (size_t i = 0; i < k; ++i)
      for (size_t o = 0; o < f; ++o) {
        double acc_t = tex_b[o], acc_s = shape_b[o];
        for (size_t c = 0; c < f; ++c) {
          acc_t += static_cast<double>(tex_w[o * 2 * f + c]) * tex[(n * k + i) * f + c];
          acc_t += static_cast<double>(tex_w[o * 2 * f + f + c]) * rs[n * f + c];
          acc_s += static_cast<double>(shape_w[o * 2 * f + c]) * shape[(n * k + i) * f + c];
          acc_s += static_cast<double>(shape_w[o * 2 * f + f + c]) * rt[n * f + c];
        }
        out_t[(n * k + i) * f + o] = static_cast<T>(acc_t);
        out_s[(n * k + i) * f + o] = static_cast<T>(acc_s);
      }
  return {out_t, out_s};
}

template <typename T>
Tensor<T> fuse_patches(const Tensor<T>& feats, const Tensor<T>& weights) {
  const size_t b = feats.dim(0), k = feats.dim(1), f = feats.dim(2);
  Tensor<T> out({b, f});
  for (size_t n = 0; n < b; ++n)
    for (size_t c = 0; c < f; ++c) {
      double acc = 0.0;
      for (size_t i = 0; i < k; ++i)
        acc += static_cast<double>(weights[i]) * feats[(n * k + i) * f + c];
      out[n * f + c] = static_cast<T>(acc);
    }
  return out;
}

template <typename T>
Tensor<T> bilinear_fuse(const Tensor<T>& t, const Tensor<T>& s, const Tensor<T>& omega) {
  const size_t b = t.dim(0), f = t.dim(1);
  Tensor<T> out({b, f * f});
  for (size_t n = 0; n < b; ++n)
    for (size_t i = 0; i < f; ++i)
      for (size_t j = 0; j < f; ++j)
        out[n * f * f + i * f + j] =
            static_cast<T>(static_cast<double>(omega[i * f + j]) * t[n * f + i] * s[n * f + j]);
  return out;
}

// l2: mean_b sum_c (softmax(logits)_c - onehot_c)^2; ce: mean_b -log p_y
template <typename T>
double loss(const Tensor<T>& logits, const std::vector<int>& labels, bool l2) {
  const size_t b = logits.dim(0), c = logits.dim(1);
  double total = 0.0;
  for (size_t n = 0; n < b; ++n) {
    std::vector<T> p(logits.data() + n * c, logits.data() + (n + 1) * c);
    softmax_row(p.data(), c);
    if (l2) {
      for (size_t j = 0; j < c; ++j) {
        const double y = static_cast<size_t>(labels[n]) == j ? 1.0 : 0.0;
        total += (p[j] - y) * (p[j] - y);
      }
    } else {
      total -= std::log(static_cast<double>(p[labels[n]]));
    }
  }
  return total / b;
}

// extent-of-texture score of one patch (C,3,3): cosine between the spatial
// mean and the center vector, band-normalized onto [0,1]
template <typename T>
double eot_score(const T* patch, size_t channels) {
  double dot = 0.0, mm = 0.0, xx = 0.0;
  for (size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (size_t s = 0; s < 9; ++s) mean += patch[c * 9 + s];
    mean /= 9.0;
    const double center = patch[c * 9 + 4];
    dot += mean * center;
    mm += mean * mean;
    xx += center * center;
  }
  if (mm <= 0.0 || xx <= 0.0) return 0.0;
  const double cosine = dot / (std::sqrt(mm) * std::sqrt(xx));
  const double scaled = (cosine - 0.5) / 0.4;
  return std::min(1.0, std::max(0.0, scaled));
}

// power spectrum statistics via a hand-rolled radix-2 FFT; images must be
// square with power-of-two side
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// radial power profile of a grayscale image (side x side, power of two):
// bin r holds the mean squared magnitude at integer radius r
inline std::vector<double> radial_spectrum(const std::vector<double>& gray, size_t side) {
  std::vector<std::vector<std::complex<double>>> rows(side,
                                                      std::vector<std::complex<double>>(side));
  for (size_t y = 0; y < side; ++y) {
    for (size_t x = 0; x < side; ++x) rows[y][x] = gray[y * side + x];
    fft_inplace(rows[y]);
  }
  std::vector<double> power(side * side);
  std::vector<std::complex<double>> col(side);
  for (size_t x = 0; x < side; ++x) {
    for (size_t y = 0; y < side; ++y) col[y] = rows[y][x];
    fft_inplace(col);
    for (size_t y = 0; y < side; ++y) power[y * side + x] = std::norm(col[y]);
  }
  const size_t bins = side / 2;
  std::vector<double> profile(bins, 0.0);
  std::vector<size_t> counts(bins, 0);
  for (size_t y = 0; y < side; ++y)
    for (size_t x = 0; x < side; ++x) {
      const double fy = y <= side / 2 ? static_cast<double>(y) : static_cast<double>(y) - side;
      const double fx = x <= side / 2 ? static_cast<double>(x) : static_cast<double>(x) - side;
      const size_t r = static_cast<size_t>(std::lround(std::sqrt(fy * fy + fx * fx)));
      if (r >= 1 && r < bins) {
        profile[r] += power[y * side + x];
        counts[r]++;
      }
    }
  for (size_t r = 1; r < bins; ++r)
    if (counts[r]) profile[r] /= static_cast<double>(counts[r]);
  return profile;
}

// power-weighted mean radius, DC excluded
inline double spectral_centroid(const std::vector<double>& profile) {
  double num = 0.0, den = 0.0;
  for (size_t r = 1; r < profile.size(); ++r) {
    num += static_cast<double>(r) * profile[r];
    den += profile[r];
  }
  return den > 0 ? num / den : 0.0;
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double mag = std::max(std::abs(static_cast<double>(a[i])),
                                std::abs(static_cast<double>(b[i])));
    if (mag < 1e-6) continue;
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]) / mag);
  }
  return worst;
}

}  // namespace oracle

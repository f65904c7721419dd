#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "eot/module.hpp"
#include "eot/random.hpp"
#include "eot/tensor.hpp"

namespace eot {

// C (MxN) = op(A) * op(B); accumulate adds into C instead of overwriting.
// A is MxK (KxM when ta), B is KxN (NxK when tb); all row-major.
template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
            bool ta = false, bool tb = false, bool accumulate = false) {
  MatMap<T> C(c, m, n);
  auto mul = [&](const auto& A, const auto& B) {
    if (accumulate)
      C.noalias() += A * B;
    else
      C.noalias() = A * B;
  };
  if (!ta && !tb)
    mul(ConstMatMap<T>(a, m, k), ConstMatMap<T>(b, k, n));
  else if (ta && !tb)
    mul(ConstMatMap<T>(a, k, m).transpose(), ConstMatMap<T>(b, k, n));
  else if (!ta && tb)
    mul(ConstMatMap<T>(a, m, k), ConstMatMap<T>(b, n, k).transpose());
  else
    mul(ConstMatMap<T>(a, k, m).transpose(), ConstMatMap<T>(b, n, k).transpose());
}

// Numerically stable softmax over each row of a (rows x cols) buffer.
template <typename T>
void softmax_rows(T* data, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = data + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T sum(0);
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const T inv = T(1) / sum;
    for (std::size_t c = 0; c < cols; ++c) row[c] *= inv;
  }
}

// Given softmax outputs p and upstream dL/dp for one row, writes dL/dz.
template <typename T>
void softmax_backward_row(const T* p, const T* dp, T* dz, std::size_t n) {
  T dot(0);
  for (std::size_t i = 0; i < n; ++i) dot += p[i] * dp[i];
  for (std::size_t i = 0; i < n; ++i) dz[i] = p[i] * (dp[i] - dot);
}

// Affine map on the last axis: (..., in) -> (..., out).
template <typename T>
class Linear : public Module<T> {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, bool with_bias = true)
      : in_(in),
        out_(out),
        with_bias_(with_bias),
        weight_(name + ".weight", {out, in}),
        bias_(name + ".bias", {out}) {}

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    rng.fill_uniform(weight_.value, -bound, bound);
    if (with_bias_) rng.fill_uniform(bias_.value, -bound, bound);
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Tensor<T> forward(const Tensor<T>& x) {
    require<ShapeError>(x.rank() >= 1 && x.shape().back() == in_, "linear ", weight_.name,
                        ": input last dim ", x.shape().empty() ? 0 : x.shape().back(),
                        " != ", in_);
    const std::size_t rows = x.size() / in_;
    input_ = x;
    Shape out_shape = x.shape();
    out_shape.back() = out_;
    Tensor<T> y(out_shape);
    matmul(x.data(), weight_.value.data(), y.data(), rows, out_, in_, false, true);
    if (with_bias_) {
      T* yd = y.data();
      const T* b = bias_.value.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < out_; ++c) yd[r * out_ + c] += b[c];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t rows = dy.size() / out_;
    require<ShapeError>(rows * in_ == input_.size(), "linear backward before forward");
    // dW += dY^T X ; db += colsum(dY) ; dX = dY W
    matmul(dy.data(), input_.data(), weight_.grad.data(), out_, in_, rows, true, false, true);
    if (with_bias_) {
      const T* dyd = dy.data();
      T* db = bias_.grad.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < out_; ++c) db[c] += dyd[r * out_ + c];
    }
    Tensor<T> dx(input_.shape());
    matmul(dy.data(), weight_.value.data(), dx.data(), rows, in_, out_);
    return dx;
  }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (with_bias_) out.push_back(&bias_);
  }

 private:
  std::size_t in_ = 0, out_ = 0;
  bool with_bias_ = true;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// 2-D convolution via im2col + GEMM. Weight layout (Cout, Cin*kh*kw).
template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t cin, std::size_t cout, std::size_t ksize,
         std::size_t stride, std::size_t pad, bool with_bias = false)
      : cin_(cin),
        cout_(cout),
        k_(ksize),
        stride_(stride),
        pad_(pad),
        with_bias_(with_bias),
        weight_(name + ".weight", {cout, cin * ksize * ksize}),
        bias_(name + ".bias", {cout}) {}

  void init(Rng& rng) {
    // fan-in scaled uniform draw
    const double fan_in = static_cast<double>(cin_ * k_ * k_);
    const double bound = std::sqrt(6.0 / fan_in);
    rng.fill_uniform(weight_.value, -bound, bound);
    if (with_bias_) bias_.value.zero();
  }

  std::size_t out_extent(std::size_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    require<ShapeError>(x.rank() == 4 && x.dim(1) == cin_, "conv ", weight_.name,
                        ": expected (B,", cin_, ",H,W), got ", shape_str(x.shape()));
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = out_extent(h), wo = out_extent(w);
    const std::size_t kk = cin_ * k_ * k_;
    input_ = x;
    Tensor<T> y({b, cout_, ho, wo});
    col_.assign(kk * ho * wo, T(0));
    for (std::size_t i = 0; i < b; ++i) {
      im2col(x.data() + i * cin_ * h * w, h, w, ho, wo);
      matmul(weight_.value.data(), col_.data(), y.data() + i * cout_ * ho * wo, cout_, ho * wo, kk);
    }
    if (with_bias_) {
      T* yd = y.data();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < cout_; ++c) {
          const T bv = bias_.value[c];
          T* plane = yd + (i * cout_ + c) * ho * wo;
          for (std::size_t p = 0; p < ho * wo; ++p) plane[p] += bv;
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t b = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
    const std::size_t ho = out_extent(h), wo = out_extent(w);
    const std::size_t kk = cin_ * k_ * k_;
    check_shape(dy, {b, cout_, ho, wo}, "conv backward");
    Tensor<T> dx(input_.shape());
    std::vector<T> dcol(kk * ho * wo);
    for (std::size_t i = 0; i < b; ++i) {
      const T* dyi = dy.data() + i * cout_ * ho * wo;
      // dW += dY_i * col_i^T
      im2col(input_.data() + i * cin_ * h * w, h, w, ho, wo);
      matmul(dyi, col_.data(), weight_.grad.data(), cout_, kk, ho * wo, false, true, true);
      // dcol = W^T * dY_i, then scatter back to dx
      matmul(weight_.value.data(), dyi, dcol.data(), kk, ho * wo, cout_, true, false);
      col2im(dcol.data(), dx.data() + i * cin_ * h * w, h, w, ho, wo);
    }
    if (with_bias_) {
      const T* dyd = dy.data();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < cout_; ++c) {
          const T* plane = dyd + (i * cout_ + c) * ho * wo;
          T acc(0);
          for (std::size_t p = 0; p < ho * wo; ++p) acc += plane[p];
          bias_.grad[c] += acc;
        }
    }
    return dx;
  }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (with_bias_) out.push_back(&bias_);
  }

 private:
  void im2col(const T* img, std::size_t h, std::size_t w, std::size_t ho, std::size_t wo) {
    T* col = col_.data();
    for (std::size_t c = 0; c < cin_; ++c) {
      const T* plane = img + c * h * w;
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
              for (std::size_t ox = 0; ox < wo; ++ox) *col++ = T(0);
              continue;
            }
            const T* row = plane + iy * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                        static_cast<std::ptrdiff_t>(pad_);
              *col++ = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : row[ix];
            }
          }
        }
    }
  }

  void col2im(const T* col, T* img, std::size_t h, std::size_t w, std::size_t ho, std::size_t wo) {
    for (std::size_t c = 0; c < cin_; ++c) {
      T* plane = img + c * h * w;
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
              col += wo;
              continue;
            }
            T* row = plane + iy * w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                        static_cast<std::ptrdiff_t>(pad_);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) row[ix] += *col;
              ++col;
            }
          }
        }
    }
  }

  std::size_t cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  bool with_bias_ = false;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
  std::vector<T> col_;
};

// Per-channel batch normalization over (B,C,H,W).
template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, std::size_t channels, double momentum = 0.1, double eps = 1e-5)
      : c_(channels),
        momentum_(momentum),
        eps_(eps),
        gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        running_mean_({channels}),
        running_var_({channels}),
        name_(std::move(name)) {
    gamma_.value.fill(T(1));
    running_var_.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require<ShapeError>(x.rank() == 4 && x.dim(1) == c_, "batchnorm ", name_, ": expected (B,",
                        c_, ",H,W), got ", shape_str(x.shape()));
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = h * w, n = b * plane;
    Tensor<T> y(x.shape());
    xhat_ = Tensor<T>(x.shape());
    invstd_ = Tensor<T>({c_});
    for (std::size_t c = 0; c < c_; ++c) {
      T mean(0), var(0);
      if (this->training_) {
        for (std::size_t i = 0; i < b; ++i) {
          const T* p = x.data() + (i * c_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j) mean += p[j];
        }
        mean /= static_cast<T>(n);
        for (std::size_t i = 0; i < b; ++i) {
          const T* p = x.data() + (i * c_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j) {
            const T d = p[j] - mean;
            var += d * d;
          }
        }
        var /= static_cast<T>(n);
        const T unbiased = n > 1 ? var * static_cast<T>(n) / static_cast<T>(n - 1) : var;
        running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
        running_var_[c] = static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
      } else {
        mean = running_mean_[c];
        var = running_var_[c];
      }
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
      invstd_[c] = inv;
      const T g = gamma_.value[c], bt = beta_.value[c];
      for (std::size_t i = 0; i < b; ++i) {
        const T* p = x.data() + (i * c_ + c) * plane;
        T* xh = xhat_.data() + (i * c_ + c) * plane;
        T* o = y.data() + (i * c_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          xh[j] = (p[j] - mean) * inv;
          o[j] = g * xh[j] + bt;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    check_shape(dy, xhat_.shape(), "batchnorm backward");
    const std::size_t b = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const std::size_t plane = h * w, n = b * plane;
    Tensor<T> dx(dy.shape());
    for (std::size_t c = 0; c < c_; ++c) {
      T sum_dy(0), sum_dy_xhat(0);
      for (std::size_t i = 0; i < b; ++i) {
        const T* g = dy.data() + (i * c_ + c) * plane;
        const T* xh = xhat_.data() + (i * c_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          sum_dy += g[j];
          sum_dy_xhat += g[j] * xh[j];
        }
      }
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
      const T scale = gamma_.value[c] * invstd_[c];
      if (this->training_) {
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t i = 0; i < b; ++i) {
          const T* g = dy.data() + (i * c_ + c) * plane;
          const T* xh = xhat_.data() + (i * c_ + c) * plane;
          T* o = dx.data() + (i * c_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j)
            o[j] = scale * (g[j] - inv_n * sum_dy - xh[j] * inv_n * sum_dy_xhat);
        }
      } else {
        for (std::size_t i = 0; i < b; ++i) {
          const T* g = dy.data() + (i * c_ + c) * plane;
          T* o = dx.data() + (i * c_ + c) * plane;
          for (std::size_t j = 0; j < plane; ++j) o[j] = scale * g[j];
        }
      }
    }
    return dx;
  }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
  }

 private:
  std::size_t c_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_, invstd_;
  std::string name_;
};

// Max pooling with cached argmax for the backward scatter. Ties resolve to
// the first maximum in scan order.
template <typename T>
class MaxPool2d : public Module<T> {
 public:
  MaxPool2d() = default;
  MaxPool2d(std::size_t ksize, std::size_t stride, std::size_t pad)
      : k_(ksize), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x) {
    require<ShapeError>(x.rank() == 4, "maxpool expects (B,C,H,W), got ", shape_str(x.shape()));
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = (h + 2 * pad_ - k_) / stride_ + 1;
    const std::size_t wo = (w + 2 * pad_ - k_) / stride_ + 1;
    in_shape_ = x.shape();
    Tensor<T> y({b, c, ho, wo});
    argmax_.assign(y.size(), 0);
    for (std::size_t i = 0; i < b * c; ++i) {
      const T* plane = x.data() + i * h * w;
      T* out = y.data() + i * ho * wo;
      std::size_t* amax = argmax_.data() + i * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_ix = 0;
          for (std::size_t ky = 0; ky < k_; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k_; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                        static_cast<std::ptrdiff_t>(pad_);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const T v = plane[iy * w + ix];
              if (v > best) {
                best = v;
                best_ix = static_cast<std::size_t>(iy * w + ix);
              }
            }
          }
          out[oy * wo + ox] = best;
          amax[oy * wo + ox] = best_ix;
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    const std::size_t planes = in_shape_[0] * in_shape_[1];
    const std::size_t out_plane = dy.size() / planes;
    const std::size_t in_plane = in_shape_[2] * in_shape_[3];
    for (std::size_t i = 0; i < planes; ++i) {
      const T* g = dy.data() + i * out_plane;
      T* o = dx.data() + i * in_plane;
      const std::size_t* amax = argmax_.data() + i * out_plane;
      for (std::size_t j = 0; j < out_plane; ++j) o[amax[j]] += g[j];
    }
    return dx;
  }

 private:
  std::size_t k_ = 2, stride_ = 2, pad_ = 0;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// ReLU with cached output (mask reconstructed from the sign of the output).
template <typename T>
class Relu : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    const T* xs = x.data();
    T* ys = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    check_shape(dy, output_.shape(), "relu backward");
    Tensor<T> dx(dy.shape());
    const T* g = dy.data();
    const T* o = output_.data();
    T* d = dx.data();
    for (std::size_t i = 0; i < dy.size(); ++i) d[i] = o[i] > T(0) ? g[i] : T(0);
    return dx;
  }

 private:
  Tensor<T> output_;
};

}  // namespace eot

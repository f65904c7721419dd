#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "eot/layers.hpp"
#include "eot/module.hpp"
#include "eot/tensor.hpp"

namespace eot {

// fused_b = sum_i weights_i * features_bi
template <typename T>
Tensor<T> fuse_patches(const Tensor<T>& feats, const Tensor<T>& weights) {
  require<ShapeError>(feats.rank() == 3, "fuse: expected (B,k,F) features, got ",
                      shape_str(feats.shape()));
  const size_t b = feats.dim(0), k = feats.dim(1), f = feats.dim(2);
  check_shape(weights, {k}, "fuse: weights");
  Tensor<T> out({b, f});
  out.zero();
  for (size_t n = 0; n < b; ++n)
    for (size_t i = 0; i < k; ++i) {
      const T w = weights[i];
      const T* src = feats.data() + (n * k + i) * f;
      T* dst = out.data() + n * f;
      for (size_t c = 0; c < f; ++c) dst[c] += w * src[c];
    }
  return out;
}

// Learnable aggregation weights over the patch axis, shared across the batch.
// Starts as a plain patch average.
template <typename T>
class PatchFusion : public Module<T> {
 public:
  PatchFusion(std::string name, size_t patches)
      : patches_(patches), weights_(std::move(name), {patches}) {}

  void init(Rng&) { weights_.value.fill(T(1) / static_cast<T>(patches_)); }

  Tensor<T> forward(const Tensor<T>& feats) {
    require<ShapeError>(feats.rank() == 3 && feats.dim(1) == patches_, "fuse ", weights_.name,
                        ": expected (B,", patches_, ",F), got ", shape_str(feats.shape()));
    input_ = feats;
    return fuse_patches(feats, weights_.value);
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    const size_t b = input_.dim(0), k = patches_, f = input_.dim(2);
    check_shape(dout, {b, f}, "fuse: upstream gradient");
    Tensor<T> din(input_.shape());
    T* dw = weights_.grad.data();
    for (size_t n = 0; n < b; ++n) {
      const T* go = dout.data() + n * f;
      for (size_t i = 0; i < k; ++i) {
        const T* src = input_.data() + (n * k + i) * f;
        T* dst = din.data() + (n * k + i) * f;
        double acc = 0.0;
        for (size_t c = 0; c < f; ++c) {
          dst[c] = weights_.value[i] * go[c];
          acc += static_cast<double>(go[c]) * src[c];
        }
        dw[i] += static_cast<T>(acc);
      }
    }
    return din;
  }

  void collect_params(std::vector<Parameter<T>*>& out) override { out.push_back(&weights_); }

 private:
  size_t patches_;
  Parameter<T> weights_;
  Tensor<T> input_;
};

// out[b, i*F + j] = omega_ij * t_bi * s_bj
template <typename T>
Tensor<T> bilinear_fuse(const Tensor<T>& t, const Tensor<T>& s, const Tensor<T>& omega) {
  require<ShapeError>(t.rank() == 2 && s.rank() == 2, "bilinear: expected (B,F) inputs");
  const size_t b = t.dim(0), f = t.dim(1);
  check_shape(s, {b, f}, "bilinear: shape stream");
  check_shape(omega, {f, f}, "bilinear: weights");
  Tensor<T> out({b, f * f});
  for (size_t n = 0; n < b; ++n) {
    const T* tb = t.data() + n * f;
    const T* sb = s.data() + n * f;
    T* ob = out.data() + n * f * f;
    for (size_t i = 0; i < f; ++i)
      for (size_t j = 0; j < f; ++j) ob[i * f + j] = omega[i * f + j] * tb[i] * sb[j];
  }
  return out;
}

// Gated outer product of the texture and shape streams. The gate starts at
// all-ones, i.e. a plain flattened outer product.
template <typename T>
class BilinearFusion : public Module<T> {
 public:
  BilinearFusion(std::string name, size_t features)
      : features_(features), omega_(std::move(name), {features, features}) {}

  size_t out_features() const { return features_ * features_; }

  void init(Rng&) { omega_.value.fill(T(1)); }

  Tensor<T> forward(const Tensor<T>& t, const Tensor<T>& s) {
    require<ShapeError>(t.rank() == 2 && t.dim(1) == features_, "bilinear ", omega_.name,
                        ": expected (B,", features_, ") texture stream, got ",
                        shape_str(t.shape()));
    tex_ = t;
    shape_ = s;
    return bilinear_fuse(t, s, omega_.value);
  }

  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dout) {
    const size_t b = tex_.dim(0), f = features_;
    check_shape(dout, {b, f * f}, "bilinear: upstream gradient");
    Tensor<T> dt(tex_.shape()), ds(shape_.shape());
    dt.zero();
    ds.zero();
    T* domega = omega_.grad.data();
    for (size_t n = 0; n < b; ++n) {
      const T* tb = tex_.data() + n * f;
      const T* sb = shape_.data() + n * f;
      const T* go = dout.data() + n * f * f;
      T* dtb = dt.data() + n * f;
      T* dsb = ds.data() + n * f;
      for (size_t i = 0; i < f; ++i)
        for (size_t j = 0; j < f; ++j) {
          const T g = go[i * f + j];
          domega[i * f + j] += g * tb[i] * sb[j];
          dtb[i] += g * omega_.value[i * f + j] * sb[j];
          dsb[j] += g * omega_.value[i * f + j] * tb[i];
        }
    }
    return {std::move(dt), std::move(ds)};
  }

  void collect_params(std::vector<Parameter<T>*>& out) override { out.push_back(&omega_); }

 private:
  size_t features_;
  Parameter<T> omega_;
  Tensor<T> tex_, shape_;
};

template <typename T>
struct ClassScores {
  Tensor<T> logits;         // (B, C)
  Tensor<T> probabilities;  // (B, C), softmax rows
};

template <typename T>
ClassScores<T> make_scores(Tensor<T> logits) {
  require<ShapeError>(logits.rank() == 2, "scores: expected (B,C) logits");
  ClassScores<T> s;
  s.probabilities = logits;
  softmax_rows(s.probabilities.data(), logits.dim(0), logits.dim(1));
  s.logits = std::move(logits);
  return s;
}

// Two affine maps with a ReLU between.
template <typename T>
class Classifier : public Module<T> {
 public:
  Classifier(std::string name, size_t in, size_t hidden, size_t classes)
      : fc1_(name + ".fc1", in, hidden), fc2_(name + ".fc2", hidden, classes) {}

  size_t classes() const { return fc2_.out_features(); }

  void init(Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) { return fc2_.forward(relu_.forward(fc1_.forward(x))); }

  Tensor<T> backward(const Tensor<T>& dlogits) {
    return fc1_.backward(relu_.backward(fc2_.backward(dlogits)));
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    fc1_.collect_params(out);
    fc2_.collect_params(out);
  }

 private:
  Linear<T> fc1_, fc2_;
  Relu<T> relu_;
};

enum class Loss { kL2, kCrossEntropy };

inline Loss parse_loss(const std::string& s) {
  if (s == "l2") return Loss::kL2;
  if (s == "cross_entropy") return Loss::kCrossEntropy;
  throw ConfigError("unknown loss: " + s);
}

inline std::string to_string(Loss l) { return l == Loss::kL2 ? "l2" : "cross_entropy"; }

template <typename T>
void check_labels(const std::vector<int>& labels, size_t batch, size_t classes) {
  require<ValidationError>(labels.size() == batch, "loss: expected ", batch, " labels, got ",
                           labels.size());
  for (int y : labels)
    require<ValidationError>(y >= 0 && static_cast<size_t>(y) < classes, "loss: label ", y,
                             " outside [0,", classes, ")");
}

// Mean over the batch; L2 regresses softmax probabilities onto the one-hot
// target, cross-entropy is the usual negative log-likelihood.
template <typename T>
double compute_loss(const ClassScores<T>& scores, const std::vector<int>& labels, Loss kind) {
  const size_t b = scores.logits.dim(0), c = scores.logits.dim(1);
  check_labels<T>(labels, b, c);
  double total = 0.0;
  for (size_t n = 0; n < b; ++n) {
    const T* p = scores.probabilities.data() + n * c;
    if (kind == Loss::kL2) {
      for (size_t j = 0; j < c; ++j) {
        const double y = static_cast<size_t>(labels[n]) == j ? 1.0 : 0.0;
        const double d = static_cast<double>(p[j]) - y;
        total += d * d;
      }
    } else {
      const double py = std::max(static_cast<double>(p[labels[n]]), 1e-30);
      total -= std::log(py);
    }
  }
  return total / static_cast<double>(b);
}

template <typename T>
Tensor<T> loss_backward(const ClassScores<T>& scores, const std::vector<int>& labels, Loss kind) {
  const size_t b = scores.logits.dim(0), c = scores.logits.dim(1);
  check_labels<T>(labels, b, c);
  Tensor<T> dlogits({b, c});
  const double inv_b = 1.0 / static_cast<double>(b);
  for (size_t n = 0; n < b; ++n) {
    const T* p = scores.probabilities.data() + n * c;
    T* dz = dlogits.data() + n * c;
    if (kind == Loss::kL2) {
      std::vector<T> dp(c);
      for (size_t j = 0; j < c; ++j) {
        const double y = static_cast<size_t>(labels[n]) == j ? 1.0 : 0.0;
        dp[j] = static_cast<T>(2.0 * (static_cast<double>(p[j]) - y) * inv_b);
      }
      softmax_backward_row(p, dp.data(), dz, c);
    } else {
      for (size_t j = 0; j < c; ++j) {
        const double y = static_cast<size_t>(labels[n]) == j ? 1.0 : 0.0;
        dz[j] = static_cast<T>((static_cast<double>(p[j]) - y) * inv_b);
      }
    }
  }
  return dlogits;
}

}  // namespace eot

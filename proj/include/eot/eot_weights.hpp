#pragma once

#include <cmath>

#include "eot/patches.hpp"
#include "eot/tensor.hpp"

namespace eot {

// Texture/shape extent weights per patch. The texture score compares each
// patch's mean feature vector against its center pixel vector by cosine
// similarity, then rescales the usable band [0.5, 0.9] onto [0, 1] and
// clamps. The shape score is the complement.
inline constexpr double kCosineFloor = 0.5;
inline constexpr double kCosineBand = 0.4;

template <typename T>
struct EotWeights {
  Tensor<T> texture;  // (B, k), in [0, 1]
  Tensor<T> shape;    // (B, k), 1 - texture
};

// Weights are detached from the graph by default; construct with
// grad_enabled=true to propagate through the cosine into the patches.
template <typename T>
class EotModule {
 public:
  explicit EotModule(bool grad_enabled = false) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  EotWeights<T> forward(const Tensor<T>& patches) {
    require<ShapeError>(patches.rank() == 5, "eot: expected (B,k,C,3,3) patches, got ",
                        shape_str(patches.shape()));
    const size_t b = patches.dim(0), k = patches.dim(1), c = patches.dim(2);
    require<ShapeError>(patches.dim(3) == kPatchWindow && patches.dim(4) == kPatchWindow,
                        "eot: expected ", kPatchWindow, "x", kPatchWindow, " patches");
    const size_t area = kPatchWindow * kPatchWindow;
    const size_t center = (kPatchWindow / 2) * kPatchWindow + kPatchWindow / 2;

    EotWeights<T> out;
    out.texture = Tensor<T>({b, k});
    out.shape = Tensor<T>({b, k});
    if (grad_enabled_) {
      patches_ = patches;
      active_ = Tensor<T>({b, k});
      mean_ = Tensor<T>({b, k, c});
      norms_ = Tensor<T>({b, k, 3});  // |mean|, |center|, dot
    }

    for (size_t n = 0; n < b; ++n) {
      for (size_t p = 0; p < k; ++p) {
        const T* patch = patches.data() + ((n * k + p) * c) * area;
        double dot = 0.0, mm = 0.0, xx = 0.0;
        for (size_t ch = 0; ch < c; ++ch) {
          const T* cell = patch + ch * area;
          double m = 0.0;
          for (size_t s = 0; s < area; ++s) m += cell[s];
          m /= static_cast<double>(area);
          const double x = cell[center];
          dot += m * x;
          mm += m * m;
          xx += x * x;
          if (grad_enabled_) mean_[(n * k + p) * c + ch] = static_cast<T>(m);
        }
        double t;
        bool active = false;
        if (mm <= 0.0 || xx <= 0.0) {
          t = 0.0;  // degenerate patch: call it pure shape
        } else {
          const double cosine = dot / (std::sqrt(mm) * std::sqrt(xx));
          const double scaled = (cosine - kCosineFloor) / kCosineBand;
          t = scaled < 0.0 ? 0.0 : (scaled > 1.0 ? 1.0 : scaled);
          active = scaled > 0.0 && scaled < 1.0;
        }
        out.texture[n * k + p] = static_cast<T>(t);
        out.shape[n * k + p] = static_cast<T>(1.0) - static_cast<T>(t);
        if (grad_enabled_) {
          active_[n * k + p] = active ? T(1) : T(0);
          norms_[(n * k + p) * 3 + 0] = static_cast<T>(std::sqrt(mm));
          norms_[(n * k + p) * 3 + 1] = static_cast<T>(std::sqrt(xx));
          norms_[(n * k + p) * 3 + 2] = static_cast<T>(dot);
        }
      }
    }
    return out;
  }

  // Maps (dL/dT, dL/dS) back onto the patches. Zero when detached, and zero
  // wherever the clamp or the degenerate fallback was hit.
  Tensor<T> backward(const Tensor<T>& dtexture, const Tensor<T>& dshape) const {
    require<EngineError>(grad_enabled_, "eot: backward called on detached weights");
    const size_t b = patches_.dim(0), k = patches_.dim(1), c = patches_.dim(2);
    check_shape(dtexture, {b, k}, "eot: dtexture");
    check_shape(dshape, {b, k}, "eot: dshape");
    const size_t area = kPatchWindow * kPatchWindow;
    const size_t center = (kPatchWindow / 2) * kPatchWindow + kPatchWindow / 2;

    Tensor<T> dpatches(patches_.shape());
    dpatches.zero();
    for (size_t n = 0; n < b; ++n) {
      for (size_t p = 0; p < k; ++p) {
        if (active_[n * k + p] == T(0)) continue;
        // S = 1 - T folds into a single upstream against T.
        const double dt = static_cast<double>(dtexture[n * k + p]) -
                          static_cast<double>(dshape[n * k + p]);
        if (dt == 0.0) continue;
        const double dcos = dt / kCosineBand;
        const double na = norms_[(n * k + p) * 3 + 0];
        const double nx = norms_[(n * k + p) * 3 + 1];
        const double dot = norms_[(n * k + p) * 3 + 2];
        const double inv = 1.0 / (na * nx);
        const T* patch = patches_.data() + ((n * k + p) * c) * area;
        T* dpatch = dpatches.data() + ((n * k + p) * c) * area;
        const T* mean = mean_.data() + (n * k + p) * c;
        for (size_t ch = 0; ch < c; ++ch) {
          const double m = mean[ch];
          const double x = patch[ch * area + center];
          // d cos / d m and d cos / d x for cos = dot / (|m||x|).
          const double dm = dcos * (x * inv - dot * m / (na * na) * inv);
          const double dx = dcos * (m * inv - dot * x / (nx * nx) * inv);
          T* dcell = dpatch + ch * area;
          const T spread = static_cast<T>(dm / static_cast<double>(area));
          for (size_t s = 0; s < area; ++s) dcell[s] += spread;
          dcell[center] += static_cast<T>(dx);
        }
      }
    }
    return dpatches;
  }

 private:
  bool grad_enabled_;
  Tensor<T> patches_, active_, mean_, norms_;
};

}  // namespace eot

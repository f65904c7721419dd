#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eot/layers.hpp"
#include "eot/module.hpp"
#include "eot/patches.hpp"
#include "eot/tensor.hpp"

namespace eot {

// Encoding layers consume descriptor sets shaped (B, G, M, C): G groups per
// image (36 patches, or 1 for the whole map) of M descriptors each (9 pixels
// per patch, or H*W for the whole map).

template <typename T>
Tensor<T> descriptors_from_patches(const Tensor<T>& patches) {
  require<ShapeError>(patches.rank() == 5, "descriptors: expected (B,k,C,3,3), got ",
                      shape_str(patches.shape()));
  const size_t b = patches.dim(0), k = patches.dim(1), c = patches.dim(2);
  const size_t area = patches.dim(3) * patches.dim(4);
  Tensor<T> out({b, k, area, c});
  for (size_t n = 0; n < b; ++n)
    for (size_t p = 0; p < k; ++p) {
      const T* src = patches.data() + ((n * k + p) * c) * area;
      T* dst = out.data() + ((n * k + p) * area) * c;
      for (size_t ch = 0; ch < c; ++ch)
        for (size_t s = 0; s < area; ++s) dst[s * c + ch] = src[ch * area + s];
    }
  return out;
}

template <typename T>
Tensor<T> descriptors_from_patches_backward(const Tensor<T>& ddesc, const Shape& patch_shape) {
  const size_t b = patch_shape[0], k = patch_shape[1], c = patch_shape[2];
  const size_t area = patch_shape[3] * patch_shape[4];
  check_shape(ddesc, {b, k, area, c}, "descriptors: gradient");
  Tensor<T> out(patch_shape);
  for (size_t n = 0; n < b; ++n)
    for (size_t p = 0; p < k; ++p) {
      const T* src = ddesc.data() + ((n * k + p) * area) * c;
      T* dst = out.data() + ((n * k + p) * c) * area;
      for (size_t ch = 0; ch < c; ++ch)
        for (size_t s = 0; s < area; ++s) dst[ch * area + s] = src[s * c + ch];
    }
  return out;
}

template <typename T>
Tensor<T> descriptors_from_map(const Tensor<T>& z) {
  require<ShapeError>(z.rank() == 4, "descriptors: expected (B,C,H,W), got ", shape_str(z.shape()));
  const size_t b = z.dim(0), c = z.dim(1), hw = z.dim(2) * z.dim(3);
  Tensor<T> out({b, 1, hw, c});
  for (size_t n = 0; n < b; ++n) {
    const T* src = z.data() + n * c * hw;
    T* dst = out.data() + n * hw * c;
    for (size_t ch = 0; ch < c; ++ch)
      for (size_t s = 0; s < hw; ++s) dst[s * c + ch] = src[ch * hw + s];
  }
  return out;
}

template <typename T>
Tensor<T> descriptors_from_map_backward(const Tensor<T>& ddesc, const Shape& zshape) {
  const size_t b = zshape[0], c = zshape[1], hw = zshape[2] * zshape[3];
  check_shape(ddesc, {b, 1, hw, c}, "descriptors: gradient");
  Tensor<T> out(zshape);
  for (size_t n = 0; n < b; ++n) {
    const T* src = ddesc.data() + n * hw * c;
    T* dst = out.data() + n * c * hw;
    for (size_t ch = 0; ch < c; ++ch)
      for (size_t s = 0; s < hw; ++s) dst[ch * hw + s] = src[s * c + ch];
  }
  return out;
}

// Residual encoding against a learned codebook: descriptors are soft-assigned
// to codewords by scaled squared distance, assignment-weighted residuals are
// pooled per codeword, and the codeword-major concatenation is projected to
// the feature width.
template <typename T>
class TextureEncoding : public Module<T> {
 public:
  TextureEncoding(std::string name, size_t channels, size_t codewords, size_t features)
      : channels_(channels),
        codewords_(codewords),
        codebook_(name + ".codebook", {codewords, channels}),
        smoothing_(name + ".smoothing", {codewords}),
        proj_(name + ".proj", codewords * channels, features) {
    require<ConfigError>(codewords > 0, "texture encoding: codewords must be positive");
  }

  size_t channels() const { return channels_; }
  size_t codewords() const { return codewords_; }
  size_t features() const { return proj_.out_features(); }

  void init(Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(codewords_));
    rng.fill_uniform(codebook_.value, -bound, bound);
    rng.fill_uniform(smoothing_.value, T(0), T(1));
    proj_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& desc) {
    require<ShapeError>(desc.rank() == 4 && desc.dim(3) == channels_,
                        "texture encoding: expected (B,G,M,", channels_, "), got ",
                        shape_str(desc.shape()));
    const size_t b = desc.dim(0), g = desc.dim(1), m = desc.dim(2);
    const size_t n = codewords_, c = channels_;
    desc_ = desc;
    weights_ = Tensor<T>({b, g, m, n});

    Tensor<T> concat({b, g, n * c});
    concat.zero();
    const T* codebook = codebook_.value.data();
    const T* smooth = smoothing_.value.data();
    std::vector<T> q(n);
    for (size_t bg = 0; bg < b * g; ++bg) {
      const T* dbase = desc.data() + bg * m * c;
      T* wbase = weights_.data() + bg * m * n;
      T* cat = concat.data() + bg * n * c;
      for (size_t i = 0; i < m; ++i) {
        const T* di = dbase + i * c;
        for (size_t j = 0; j < n; ++j) {
          const T* lj = codebook + j * c;
          double norm2 = 0.0;
          for (size_t ch = 0; ch < c; ++ch) {
            const double r = static_cast<double>(di[ch]) - static_cast<double>(lj[ch]);
            norm2 += r * r;
          }
          q[j] = static_cast<T>(-static_cast<double>(smooth[j]) * norm2);
        }
        softmax_rows(q.data(), 1, n);
        T* wi = wbase + i * n;
        for (size_t j = 0; j < n; ++j) {
          wi[j] = q[j];
          const T* lj = codebook + j * c;
          T* tj = cat + j * c;
          for (size_t ch = 0; ch < c; ++ch) tj[ch] += q[j] * (di[ch] - lj[ch]);
        }
      }
    }
    return proj_.forward(concat);
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    const size_t b = desc_.dim(0), g = desc_.dim(1), m = desc_.dim(2);
    const size_t n = codewords_, c = channels_;
    Tensor<T> dconcat = proj_.backward(dout);

    Tensor<T> ddesc(desc_.shape());
    ddesc.zero();
    const T* codebook = codebook_.value.data();
    const T* smooth = smoothing_.value.data();
    T* dcodebook = codebook_.grad.data();
    T* dsmooth = smoothing_.grad.data();
    std::vector<double> r(n * c), norm2(n), dw(n), dq(n);
    for (size_t bg = 0; bg < b * g; ++bg) {
      const T* dbase = desc_.data() + bg * m * c;
      const T* wbase = weights_.data() + bg * m * n;
      const T* dcat = dconcat.data() + bg * n * c;
      T* gdesc = ddesc.data() + bg * m * c;
      for (size_t i = 0; i < m; ++i) {
        const T* di = dbase + i * c;
        const T* wi = wbase + i * n;
        for (size_t j = 0; j < n; ++j) {
          const T* lj = codebook + j * c;
          const T* gj = dcat + j * c;
          double nrm = 0.0, dot = 0.0;
          for (size_t ch = 0; ch < c; ++ch) {
            const double rv = static_cast<double>(di[ch]) - static_cast<double>(lj[ch]);
            r[j * c + ch] = rv;
            nrm += rv * rv;
            dot += static_cast<double>(gj[ch]) * rv;
          }
          norm2[j] = nrm;
          dw[j] = dot;
        }
        double mix = 0.0;
        for (size_t j = 0; j < n; ++j) mix += dw[j] * static_cast<double>(wi[j]);
        for (size_t j = 0; j < n; ++j) dq[j] = static_cast<double>(wi[j]) * (dw[j] - mix);
        for (size_t j = 0; j < n; ++j) {
          dsmooth[j] += static_cast<T>(-norm2[j] * dq[j]);
          const double coef = -2.0 * static_cast<double>(smooth[j]) * dq[j];
          const double wij = wi[j];
          const T* gj = dcat + j * c;
          T* dlj = dcodebook + j * c;
          T* gdi = gdesc + i * c;
          for (size_t ch = 0; ch < c; ++ch) {
            const double dr = wij * static_cast<double>(gj[ch]) + coef * r[j * c + ch];
            gdi[ch] += static_cast<T>(dr);
            dlj[ch] -= static_cast<T>(dr);
          }
        }
      }
    }
    return ddesc;
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    out.push_back(&codebook_);
    out.push_back(&smoothing_);
    proj_.collect_params(out);
  }

  // Soft-assignment weights from the last forward, shape (B, G, M, N).
  const Tensor<T>& assignments() const { return weights_; }

 private:
  size_t channels_, codewords_;
  Parameter<T> codebook_, smoothing_;
  Linear<T> proj_;
  Tensor<T> desc_, weights_;
};

// Spatial-structure branch: average the descriptors in each group and project
// down to the feature width.
template <typename T>
class ShapeEncoding : public Module<T> {
 public:
  ShapeEncoding(std::string name, size_t channels, size_t features)
      : channels_(channels), proj_(name + ".proj", channels, features) {}

  size_t features() const { return proj_.out_features(); }

  void init(Rng& rng) { proj_.init(rng); }

  Tensor<T> forward(const Tensor<T>& desc) {
    require<ShapeError>(desc.rank() == 4 && desc.dim(3) == channels_,
                        "shape encoding: expected (B,G,M,", channels_, "), got ",
                        shape_str(desc.shape()));
    const size_t b = desc.dim(0), g = desc.dim(1), m = desc.dim(2), c = channels_;
    group_size_ = m;
    Tensor<T> mean({b, g, c});
    mean.zero();
    for (size_t bg = 0; bg < b * g; ++bg) {
      const T* src = desc.data() + bg * m * c;
      T* dst = mean.data() + bg * c;
      for (size_t i = 0; i < m; ++i)
        for (size_t ch = 0; ch < c; ++ch) dst[ch] += src[i * c + ch];
      for (size_t ch = 0; ch < c; ++ch) dst[ch] /= static_cast<T>(m);
    }
    return proj_.forward(mean);
  }

  Tensor<T> backward(const Tensor<T>& dout) {
    Tensor<T> dmean = proj_.backward(dout);
    const size_t b = dmean.dim(0), g = dmean.dim(1), c = channels_, m = group_size_;
    Tensor<T> ddesc({b, g, m, c});
    for (size_t bg = 0; bg < b * g; ++bg) {
      const T* src = dmean.data() + bg * c;
      T* dst = ddesc.data() + bg * m * c;
      for (size_t i = 0; i < m; ++i)
        for (size_t ch = 0; ch < c; ++ch) dst[i * c + ch] = src[ch] / static_cast<T>(m);
    }
    return ddesc;
  }

  void collect_params(std::vector<Parameter<T>*>& out) override { proj_.collect_params(out); }

 private:
  size_t channels_;
  Linear<T> proj_;
  size_t group_size_ = 0;
};

}  // namespace eot

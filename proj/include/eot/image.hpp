#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "eot/random.hpp"
#include "eot/tensor.hpp"

namespace eot {

// Images travel as (3,H,W) float tensors, RGB, values in [0,1] until
// normalization.

inline constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};

inline Tensor<float> decode_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  require<DataError>(!bgr.empty(), "cannot decode image: ", path);
  const size_t h = bgr.rows, w = bgr.cols;
  Tensor<float> out({3, h, w});
  for (size_t y = 0; y < h; ++y) {
    const uchar* row = bgr.ptr<uchar>(static_cast<int>(y));
    for (size_t x = 0; x < w; ++x) {
      out[(0 * h + y) * w + x] = static_cast<float>(row[x * 3 + 2]) / 255.f;
      out[(1 * h + y) * w + x] = static_cast<float>(row[x * 3 + 1]) / 255.f;
      out[(2 * h + y) * w + x] = static_cast<float>(row[x * 3 + 0]) / 255.f;
    }
  }
  return out;
}

inline void encode_png(const std::string& path, const Tensor<float>& img) {
  require<ShapeError>(img.rank() == 3 && img.dim(0) == 3, "encode: expected (3,H,W), got ",
                      shape_str(img.shape()));
  const size_t h = img.dim(1), w = img.dim(2);
  cv::Mat bgr(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
  for (size_t y = 0; y < h; ++y) {
    uchar* row = bgr.ptr<uchar>(static_cast<int>(y));
    for (size_t x = 0; x < w; ++x)
      for (size_t c = 0; c < 3; ++c) {
        const float v = img[(c * h + y) * w + x];
        row[x * 3 + (2 - c)] = static_cast<uchar>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
      }
  }
  require<IoError>(cv::imwrite(path, bgr), "cannot write image: ", path);
}

// Bilinear resampling with half-pixel centers and edge clamping.
inline Tensor<float> resize_bilinear(const Tensor<float>& img, size_t out_h, size_t out_w) {
  require<ShapeError>(img.rank() == 3, "resize: expected (C,H,W)");
  const size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  require<ShapeError>(h > 0 && w > 0 && out_h > 0 && out_w > 0, "resize: empty image");
  Tensor<float> out({c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (size_t y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const size_t y0 = static_cast<size_t>(fy);
    const size_t y1 = std::min(y0 + 1, h - 1);
    const float wy = static_cast<float>(fy - y0);
    for (size_t x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const size_t x0 = static_cast<size_t>(fx);
      const size_t x1 = std::min(x0 + 1, w - 1);
      const float wx = static_cast<float>(fx - x0);
      for (size_t ch = 0; ch < c; ++ch) {
        const float* p = img.data() + ch * h * w;
        const float top = p[y0 * w + x0] * (1.f - wx) + p[y0 * w + x1] * wx;
        const float bot = p[y1 * w + x0] * (1.f - wx) + p[y1 * w + x1] * wx;
        out[(ch * out_h + y) * out_w + x] = top * (1.f - wy) + bot * wy;
      }
    }
  }
  return out;
}

inline Tensor<float> center_crop(const Tensor<float>& img, size_t size) {
  const size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  require<ShapeError>(h >= size && w >= size, "crop: image ", h, "x", w, " smaller than ", size);
  const size_t oy = (h - size) / 2, ox = (w - size) / 2;
  Tensor<float> out({c, size, size});
  for (size_t ch = 0; ch < c; ++ch)
    for (size_t y = 0; y < size; ++y)
      for (size_t x = 0; x < size; ++x)
        out[(ch * size + y) * size + x] = img[(ch * h + y + oy) * w + x + ox];
  return out;
}

inline void hflip_inplace(Tensor<float>& img) {
  const size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  for (size_t ch = 0; ch < c; ++ch)
    for (size_t y = 0; y < h; ++y) {
      float* row = img.data() + (ch * h + y) * w;
      for (size_t x = 0; x < w / 2; ++x) std::swap(row[x], row[w - 1 - x]);
    }
}

namespace detail {

inline void clamp_unit(Tensor<float>& img) {
  for (float& v : img) v = std::clamp(v, 0.f, 1.f);
}

}  // namespace detail

// out = factor * img, clamped
inline void adjust_brightness(Tensor<float>& img, float factor) {
  for (float& v : img) v *= factor;
  detail::clamp_unit(img);
}

// blend with the image's mean luma
inline void adjust_contrast(Tensor<float>& img, float factor) {
  const size_t hw = img.dim(1) * img.dim(2);
  const float* r = img.data();
  const float* g = r + hw;
  const float* b = g + hw;
  double mean = 0.0;
  for (size_t i = 0; i < hw; ++i) mean += 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  const float m = static_cast<float>(mean / hw);
  for (float& v : img) v = factor * v + (1.f - factor) * m;
  detail::clamp_unit(img);
}

// blend each pixel with its own luma
inline void adjust_saturation(Tensor<float>& img, float factor) {
  const size_t hw = img.dim(1) * img.dim(2);
  float* r = img.data();
  float* g = r + hw;
  float* b = g + hw;
  for (size_t i = 0; i < hw; ++i) {
    const float luma = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
    r[i] = factor * r[i] + (1.f - factor) * luma;
    g[i] = factor * g[i] + (1.f - factor) * luma;
    b[i] = factor * b[i] + (1.f - factor) * luma;
  }
  detail::clamp_unit(img);
}

inline void normalize_imagenet(Tensor<float>& img) {
  const size_t hw = img.dim(1) * img.dim(2);
  for (size_t c = 0; c < 3; ++c) {
    float* p = img.data() + c * hw;
    for (size_t i = 0; i < hw; ++i) p[i] = (p[i] - kImagenetMean[c]) / kImagenetStd[c];
  }
}

}  // namespace eot

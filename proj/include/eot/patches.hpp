#pragma once

#include "eot/backbone.hpp"
#include "eot/tensor.hpp"

namespace eot {

// Overlapping patch grid on the backbone output. Window 3, stride 1 on an
// 8x8 map gives a 6x6 grid of origins, enumerated row-major: patch 0 covers
// rows 0..2 / cols 0..2, patch 1 shifts one column right, patch 6 starts the
// second row of origins.
inline constexpr size_t kPatchWindow = 3;
inline constexpr size_t kPatchStride = 1;
inline constexpr size_t kPatchGrid = kBackboneGrid - kPatchWindow + 1;
inline constexpr size_t kPatchCount = kPatchGrid * kPatchGrid;

template <typename T>
Tensor<T> extract_patches(const Tensor<T>& z) {
  require<ShapeError>(z.rank() == 4, "extract_patches: expected (B,C,H,W), got ", shape_str(z.shape()));
  const size_t b = z.dim(0), c = z.dim(1), h = z.dim(2), w = z.dim(3);
  require<ShapeError>(h == kBackboneGrid && w == kBackboneGrid,
                      "extract_patches: expected ", kBackboneGrid, "x", kBackboneGrid,
                      " spatial map, got ", h, "x", w);
  Tensor<T> out({b, kPatchCount, c, kPatchWindow, kPatchWindow});
  const T* src = z.data();
  T* dst = out.data();
  for (size_t n = 0; n < b; ++n) {
    for (size_t py = 0; py < kPatchGrid; ++py) {
      for (size_t px = 0; px < kPatchGrid; ++px) {
        const size_t p = py * kPatchGrid + px;
        for (size_t ch = 0; ch < c; ++ch) {
          const T* plane = src + (n * c + ch) * h * w;
          T* cell = dst + (((n * kPatchCount + p) * c + ch) * kPatchWindow) * kPatchWindow;
          for (size_t ky = 0; ky < kPatchWindow; ++ky)
            for (size_t kx = 0; kx < kPatchWindow; ++kx)
              cell[ky * kPatchWindow + kx] = plane[(py * kPatchStride + ky) * w + px * kPatchStride + kx];
        }
      }
    }
  }
  return out;
}

// Scatter-add of patch gradients back onto the feature map. Overlapping
// windows mean interior cells receive up to nine contributions.
template <typename T>
Tensor<T> extract_patches_backward(const Tensor<T>& dpatches, const Shape& zshape) {
  require<ShapeError>(zshape.size() == 4, "extract_patches_backward: bad map shape");
  const size_t b = zshape[0], c = zshape[1], h = zshape[2], w = zshape[3];
  check_shape(dpatches, {b, kPatchCount, c, kPatchWindow, kPatchWindow}, "extract_patches_backward: dpatches");
  Tensor<T> dz(zshape);
  dz.zero();
  const T* src = dpatches.data();
  T* dst = dz.data();
  for (size_t n = 0; n < b; ++n) {
    for (size_t py = 0; py < kPatchGrid; ++py) {
      for (size_t px = 0; px < kPatchGrid; ++px) {
        const size_t p = py * kPatchGrid + px;
        for (size_t ch = 0; ch < c; ++ch) {
          T* plane = dst + (n * c + ch) * h * w;
          const T* cell = src + (((n * kPatchCount + p) * c + ch) * kPatchWindow) * kPatchWindow;
          for (size_t ky = 0; ky < kPatchWindow; ++ky)
            for (size_t kx = 0; kx < kPatchWindow; ++kx)
              plane[(py * kPatchStride + ky) * w + px * kPatchStride + kx] += cell[ky * kPatchWindow + kx];
        }
      }
    }
  }
  return dz;
}

}  // namespace eot

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "eot/config.hpp"
#include "eot/image.hpp"
#include "eot/random.hpp"
#include "eot/tensor.hpp"

namespace eot {

namespace fs = std::filesystem;

enum class Split { kTrain, kTest };

inline std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

struct DatasetEntry {
  std::string path;
  int label;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  std::vector<std::string> class_names;
  Split split = Split::kTrain;

  size_t classes() const { return class_names.size(); }
  size_t size() const { return entries.size(); }
};

namespace detail {

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<std::string> sorted_subdirs(const fs::path& root) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline std::vector<std::string> sorted_images(const fs::path& dir) {
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  return paths;
}

// class-per-subdirectory tree
inline DatasetIndex scan_class_tree(const fs::path& root, Split split) {
  require<DataError>(fs::is_directory(root), "dataset root not found: ", root.string());
  DatasetIndex idx;
  idx.split = split;
  idx.class_names = sorted_subdirs(root);
  require<DataError>(idx.class_names.size() >= 2, "dataset root ", root.string(),
                     ": need at least 2 class directories, found ", idx.class_names.size());
  for (size_t c = 0; c < idx.class_names.size(); ++c)
    for (std::string& p : sorted_images(root / idx.class_names[c]))
      idx.entries.push_back({std::move(p), static_cast<int>(c)});
  require<DataError>(!idx.entries.empty(), "dataset root ", root.string(), ": no images found");
  return idx;
}

inline int class_id_of(const std::vector<std::string>& names, const std::string& name,
                       const std::string& context) {
  const auto it = std::lower_bound(names.begin(), names.end(), name);
  require<DataError>(it != names.end() && *it == name, context, ": unknown class '", name, "'");
  return static_cast<int>(it - names.begin());
}

// split file of image paths relative to `base`, one per line, with the class
// name as the path component at `class_depth`
inline DatasetIndex scan_split_file(const fs::path& root, const fs::path& base,
                                    const fs::path& list_path, size_t class_depth, Split split) {
  require<DataError>(fs::is_directory(root), "dataset root not found: ", root.string());
  require<DataError>(fs::is_directory(root / "images"), "missing images/ under ", root.string());
  DatasetIndex idx;
  idx.split = split;
  idx.class_names = sorted_subdirs(root / "images");
  require<DataError>(idx.class_names.size() >= 2, "dataset ", root.string(),
                     ": need at least 2 class directories under images/");
  std::ifstream in(list_path);
  require<DataError>(in.good(), "missing split file: ", list_path.string());
  std::string line;
  std::vector<std::string> rels;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) rels.push_back(line);
  }
  std::sort(rels.begin(), rels.end());
  for (const std::string& rel : rels) {
    fs::path p(rel);
    std::vector<std::string> parts;
    for (const auto& comp : p) parts.push_back(comp.string());
    require<DataError>(parts.size() > class_depth, list_path.string(), ": malformed line '", rel,
                       "'");
    const int label = class_id_of(idx.class_names, parts[class_depth], list_path.string());
    idx.entries.push_back({(base / p).string(), label});
  }
  require<DataError>(!idx.entries.empty(), "split file ", list_path.string(), " lists no images");
  return idx;
}

}  // namespace detail

// Layouts: generic = one subdirectory per class (no split structure);
// gtos_mobile = train/ and test/ class trees; dtd = images/<class>/<file>
// with labels/{train1,test1}.txt lines "<class>/<file>"; minc2500 =
// images/<class>/<file> with labels/{train1,test1}.txt lines
// "images/<class>/<file>".
inline DatasetIndex scan_dataset(const std::string& root, DatasetLayout layout, Split split) {
  const fs::path r(root);
  switch (layout) {
    case DatasetLayout::kGeneric:
      return detail::scan_class_tree(r, split);
    case DatasetLayout::kGtosMobile: {
      const fs::path sub = r / to_string(split);
      require<DataError>(fs::is_directory(sub), "gtos_mobile: missing split directory ",
                         sub.string());
      return detail::scan_class_tree(sub, split);
    }
    case DatasetLayout::kDtd:
      return detail::scan_split_file(
          r, r / "images", r / "labels" / (split == Split::kTrain ? "train1.txt" : "test1.txt"), 0,
          split);
    default:
      return detail::scan_split_file(
          r, r, r / "labels" / (split == Split::kTrain ? "train1.txt" : "test1.txt"), 1, split);
  }
}

struct AugmentationPolicy {
  enum class Mode { kSingleScale, kMultiScale, kEval };

  Mode mode = Mode::kEval;
  double flip_prob = 0.5;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  unsigned long long seed = 0;

  static AugmentationPolicy train_policy(const TrainConfig& cfg, unsigned long long seed) {
    AugmentationPolicy p;
    p.mode = cfg.scale_mode == ScaleMode::kSingle ? Mode::kSingleScale : Mode::kMultiScale;
    p.flip_prob = cfg.flip_prob;
    p.brightness = cfg.jitter_brightness;
    p.contrast = cfg.jitter_contrast;
    p.saturation = cfg.jitter_saturation;
    p.seed = seed;
    return p;
  }

  static AugmentationPolicy eval_policy() { return AugmentationPolicy{}; }
};

inline constexpr size_t kResizeShort = 286;
inline constexpr size_t kCropSize = 256;
inline constexpr size_t kMultiScales[3] = {256, 384, 512};

// Deterministic per (policy.seed, entry index): the augmentation stream for
// one example never depends on load order.
inline Tensor<float> load_example(const DatasetIndex& index, size_t i,
                                  const AugmentationPolicy& policy) {
  require<ValidationError>(i < index.size(), "load_example: index ", i, " out of range");
  Tensor<float> img = decode_image(index.entries[i].path);
  if (policy.mode == AugmentationPolicy::Mode::kEval) {
    img = center_crop(resize_bilinear(img, kResizeShort, kResizeShort), kCropSize);
    normalize_imagenet(img);
    return img;
  }
  Rng rng(fold_seed(policy.seed, i));
  size_t scale = kResizeShort;
  if (policy.mode == AugmentationPolicy::Mode::kMultiScale) scale = kMultiScales[rng.index(3)];
  img = center_crop(resize_bilinear(img, scale, scale), kCropSize);
  if (rng.bernoulli(policy.flip_prob)) hflip_inplace(img);
  const float fb = static_cast<float>(rng.uniform(std::max(0.0, 1.0 - policy.brightness),
                                                  1.0 + policy.brightness));
  const float fc = static_cast<float>(rng.uniform(std::max(0.0, 1.0 - policy.contrast),
                                                  1.0 + policy.contrast));
  const float fs = static_cast<float>(rng.uniform(std::max(0.0, 1.0 - policy.saturation),
                                                  1.0 + policy.saturation));
  adjust_brightness(img, fb);
  adjust_contrast(img, fc);
  adjust_saturation(img, fs);
  normalize_imagenet(img);
  return img;
}

// Stacks the chosen entries into a batch. With strict=false, unreadable
// images are dropped with a warning instead of failing the batch.
inline Tensor<float> load_batch(const DatasetIndex& index, const std::vector<size_t>& ids,
                                const AugmentationPolicy& policy, bool strict,
                                std::vector<int>& labels_out) {
  std::vector<Tensor<float>> images;
  labels_out.clear();
  for (size_t i : ids) {
    try {
      images.push_back(load_example(index, i, policy));
      labels_out.push_back(index.entries[i].label);
    } catch (const DataError& e) {
      if (strict) throw;
      std::cerr << "warning: skipping " << index.entries[i].path << ": " << e.what() << "\n";
    }
  }
  require<DataError>(!images.empty(), "batch has no readable images");
  Tensor<float> batch({images.size(), 3, kCropSize, kCropSize});
  for (size_t n = 0; n < images.size(); ++n)
    std::copy(images[n].begin(), images[n].end(), batch.data() + n * images[n].size());
  return batch;
}

namespace detail {

// Procedural texture families with distinct spatial statistics. Luma pattern
// first, then a random per-image color tint.
inline Tensor<float> synth_image(int family, int level, Rng& rng) {
  const size_t s = kCropSize;
  Tensor<float> luma({s, s});
  switch (family) {
    case 0: {  // low-frequency oriented stripes
      const double freq = (6.0 + rng.uniform(0.0, 2.0)) * (1 + level);
      const double theta = rng.uniform(0.0, 3.14159265358979);
      const double phase = rng.uniform(0.0, 6.28318530717959);
      const double kx = std::cos(theta) * freq * 6.28318530717959 / s;
      const double ky = std::sin(theta) * freq * 6.28318530717959 / s;
      for (size_t y = 0; y < s; ++y)
        for (size_t x = 0; x < s; ++x)
          luma[y * s + x] =
              static_cast<float>(0.5 + 0.45 * std::sin(kx * x + ky * y + phase));
      break;
    }
    case 1: {  // fine checkerboard
      const size_t cell = 10 + rng.index(5) + 4 * level;
      const size_t ox = rng.index(cell), oy = rng.index(cell);
      const float lo = static_cast<float>(rng.uniform(0.05, 0.25));
      const float hi = static_cast<float>(rng.uniform(0.75, 0.95));
      for (size_t y = 0; y < s; ++y)
        for (size_t x = 0; x < s; ++x)
          luma[y * s + x] = (((x + ox) / cell + (y + oy) / cell) % 2 == 0) ? lo : hi;
      break;
    }
    case 2: {  // sparse soft blobs
      luma.fill(0.15f);
      const size_t count = 24 + rng.index(8) + 8 * level;
      for (size_t b = 0; b < count; ++b) {
        const double cx = rng.uniform(0.0, static_cast<double>(s));
        const double cy = rng.uniform(0.0, static_cast<double>(s));
        const double sigma = rng.uniform(8.0, 14.0);
        const double amp = rng.uniform(0.5, 0.8);
        const int r = static_cast<int>(3 * sigma);
        for (int dy = -r; dy <= r; ++dy) {
          const int y = static_cast<int>(cy) + dy;
          if (y < 0 || y >= static_cast<int>(s)) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int x = static_cast<int>(cx) + dx;
            if (x < 0 || x >= static_cast<int>(s)) continue;
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const float v = static_cast<float>(amp * std::exp(-d2 / (2 * sigma * sigma)));
            float& px = luma[static_cast<size_t>(y) * s + static_cast<size_t>(x)];
            px = std::min(1.f, px + v);
          }
        }
      }
      break;
    }
    default: {  // short-range correlated noise
      rng.fill_uniform(luma, 0.f, 1.f);
      const int radius = 2 + level;
      Tensor<float> tmp({s, s});
      for (int pass = 0; pass < 2; ++pass) {
        // horizontal then vertical box blur
        for (size_t y = 0; y < s; ++y)
          for (size_t x = 0; x < s; ++x) {
            double acc = 0.0;
            int cnt = 0;
            for (int d = -radius; d <= radius; ++d) {
              const int xx = static_cast<int>(x) + d;
              if (xx < 0 || xx >= static_cast<int>(s)) continue;
              acc += luma[y * s + static_cast<size_t>(xx)];
              ++cnt;
            }
            tmp[y * s + x] = static_cast<float>(acc / cnt);
          }
        for (size_t y = 0; y < s; ++y)
          for (size_t x = 0; x < s; ++x) {
            double acc = 0.0;
            int cnt = 0;
            for (int d = -radius; d <= radius; ++d) {
              const int yy = static_cast<int>(y) + d;
              if (yy < 0 || yy >= static_cast<int>(s)) continue;
              acc += tmp[static_cast<size_t>(yy) * s + x];
              ++cnt;
            }
            luma[y * s + x] = static_cast<float>(acc / cnt);
          }
      }
      // stretch the smoothed field back to full contrast
      float mn = luma[0], mx = luma[0];
      for (float v : luma) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      const float range = std::max(mx - mn, 1e-6f);
      for (float& v : luma) v = (v - mn) / range;
      break;
    }
  }
  Tensor<float> img({3, s, s});
  const float tint[3] = {static_cast<float>(rng.uniform(0.6, 1.0)),
                         static_cast<float>(rng.uniform(0.6, 1.0)),
                         static_cast<float>(rng.uniform(0.6, 1.0))};
  for (size_t c = 0; c < 3; ++c)
    for (size_t i = 0; i < s * s; ++i) img[c * s * s + i] = tint[c] * luma[i];
  return img;
}

}  // namespace detail

// Writes classes × per_class procedural 256×256 textures under
// out_root/class_XX/img_XXXX.png plus a manifest (path<TAB>class_id, paths
// relative to out_root). Byte-identical across runs for a fixed seed.
inline DatasetIndex generate_synthetic(size_t classes, size_t per_class, unsigned long long seed,
                                       const std::string& out_root) {
  require<ConfigError>(classes >= 2, "synthetic: need at least 2 classes");
  require<ConfigError>(per_class >= 1, "synthetic: per_class must be positive");
  const fs::path root(out_root);
  std::error_code ec;
  fs::create_directories(root, ec);
  require<IoError>(fs::is_directory(root), "cannot create output root: ", out_root);

  DatasetIndex idx;
  idx.split = Split::kTrain;
  std::ofstream manifest(root / "manifest.tsv");
  require<IoError>(manifest.good(), "cannot write manifest under ", out_root);
  char name[64];
  for (size_t c = 0; c < classes; ++c) {
    std::snprintf(name, sizeof(name), "class_%02zu", c);
    const std::string class_name(name);
    idx.class_names.push_back(class_name);
    fs::create_directories(root / class_name, ec);
    for (size_t i = 0; i < per_class; ++i) {
      Rng rng(fold_seed(seed, c, i));
      Tensor<float> img = detail::synth_image(static_cast<int>(c % 4),
                                              static_cast<int>(c / 4), rng);
      std::snprintf(name, sizeof(name), "img_%04zu.png", i);
      const std::string rel = class_name + "/" + name;
      encode_png((root / rel).string(), img);
      manifest << rel << '\t' << c << '\n';
      idx.entries.push_back({(root / rel).string(), static_cast<int>(c)});
    }
  }
  return idx;
}

}  // namespace eot

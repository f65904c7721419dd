#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eot/layers.hpp"
#include "eot/module.hpp"
#include "eot/random.hpp"
#include "eot/serialize.hpp"
#include "eot/tensor.hpp"

namespace eot {

constexpr std::size_t kBackboneChannels = 512;
constexpr std::size_t kBackboneGrid = 8;
constexpr std::size_t kInputSize = 256;

// Two 3x3 convolutions with an identity (or strided 1x1) shortcut.
template <typename T>
class BasicBlock : public Module<T> {
 public:
  BasicBlock(const std::string& name, std::size_t cin, std::size_t cout, std::size_t stride)
      : conv1_(name + ".conv1", cin, cout, 3, stride, 1),
        bn1_(name + ".bn1", cout),
        conv2_(name + ".conv2", cout, cout, 3, 1, 1),
        bn2_(name + ".bn2", cout),
        downsample_(stride != 1 || cin != cout) {
    if (downsample_) {
      down_conv_ = Conv2d<T>(name + ".down.conv", cin, cout, 1, stride, 0);
      down_bn_ = BatchNorm2d<T>(name + ".down.bn", cout);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (downsample_) down_conv_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    out = bn2_.forward(conv2_.forward(out));
    Tensor<T> shortcut = downsample_ ? down_bn_.forward(down_conv_.forward(x)) : x;
    check_shape(shortcut, out.shape(), "residual add");
    axpy(T(1), shortcut, out);
    return relu2_.forward(out);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dsum = relu2_.backward(dy);
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(
        conv2_.backward(bn2_.backward(dsum)))));
    if (downsample_) {
      Tensor<T> dshort = down_conv_.backward(down_bn_.backward(dsum));
      axpy(T(1), dshort, dx);
    } else {
      axpy(T(1), dsum, dx);
    }
    return dx;
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (downsample_) {
      down_conv_.collect_params(out);
      down_bn_.collect_params(out);
    }
  }
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
    if (downsample_) down_bn_.collect_buffers(out);
  }
  void set_training(bool t) override {
    Module<T>::set_training(t);
    bn1_.set_training(t);
    bn2_.set_training(t);
    if (downsample_) down_bn_.set_training(t);
  }

 private:
  Conv2d<T> conv1_, conv2_;
  BatchNorm2d<T> bn1_, bn2_;
  Relu<T> relu1_, relu2_;
  bool downsample_ = false;
  Conv2d<T> down_conv_;
  BatchNorm2d<T> down_bn_;
};

// 1x1 reduce, 3x3, 1x1 expand (x4) with shortcut; the 50-layer building block.
template <typename T>
class Bottleneck : public Module<T> {
 public:
  static constexpr std::size_t kExpansion = 4;

  Bottleneck(const std::string& name, std::size_t cin, std::size_t width, std::size_t stride)
      : conv1_(name + ".conv1", cin, width, 1, 1, 0),
        bn1_(name + ".bn1", width),
        conv2_(name + ".conv2", width, width, 3, stride, 1),
        bn2_(name + ".bn2", width),
        conv3_(name + ".conv3", width, width * kExpansion, 1, 1, 0),
        bn3_(name + ".bn3", width * kExpansion),
        downsample_(stride != 1 || cin != width * kExpansion) {
    if (downsample_) {
      down_conv_ = Conv2d<T>(name + ".down.conv", cin, width * kExpansion, 1, stride, 0);
      down_bn_ = BatchNorm2d<T>(name + ".down.bn", width * kExpansion);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (downsample_) down_conv_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x)));
    out = relu2_.forward(bn2_.forward(conv2_.forward(out)));
    out = bn3_.forward(conv3_.forward(out));
    Tensor<T> shortcut = downsample_ ? down_bn_.forward(down_conv_.forward(x)) : x;
    axpy(T(1), shortcut, out);
    return relu3_.forward(out);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dsum = relu3_.backward(dy);
    Tensor<T> d = conv3_.backward(bn3_.backward(dsum));
    d = conv2_.backward(bn2_.backward(relu2_.backward(d)));
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(d)));
    if (downsample_) {
      Tensor<T> dshort = down_conv_.backward(down_bn_.backward(dsum));
      axpy(T(1), dshort, dx);
    } else {
      axpy(T(1), dsum, dx);
    }
    return dx;
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    conv3_.collect_params(out);
    bn3_.collect_params(out);
    if (downsample_) {
      down_conv_.collect_params(out);
      down_bn_.collect_params(out);
    }
  }
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
    bn3_.collect_buffers(out);
    if (downsample_) down_bn_.collect_buffers(out);
  }
  void set_training(bool t) override {
    Module<T>::set_training(t);
    bn1_.set_training(t);
    bn2_.set_training(t);
    bn3_.set_training(t);
    if (downsample_) down_bn_.set_training(t);
  }

 private:
  Conv2d<T> conv1_, conv2_, conv3_;
  BatchNorm2d<T> bn1_, bn2_, bn3_;
  Relu<T> relu1_, relu2_, relu3_;
  bool downsample_ = false;
  Conv2d<T> down_conv_;
  BatchNorm2d<T> down_bn_;
};

// Residual feature extractor: maps a normalized (B,3,256,256) batch to the
// (B,512,8,8) latent grid. The classifier head and global pooling of the
// stock 18/50-layer networks are removed; for depth 50 a 1x1 convolution
// brings the 2048 output channels down to 512.
template <typename T>
class Backbone : public Module<T> {
 public:
  explicit Backbone(std::size_t depth = 18)
      : depth_(depth),
        conv1_("backbone.conv1", 3, 64, 7, 2, 3),
        bn1_("backbone.bn1", 64),
        pool_(3, 2, 1) {
    require<ConfigError>(depth == 18 || depth == 50, "backbone depth must be 18 or 50, got ",
                         depth);
    const std::size_t widths[4] = {64, 128, 256, 512};
    if (depth_ == 18) {
      const std::size_t counts[4] = {2, 2, 2, 2};
      std::size_t cin = 64;
      for (int s = 0; s < 4; ++s)
        for (std::size_t b = 0; b < counts[s]; ++b) {
          const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
          basic_.push_back(std::make_unique<BasicBlock<T>>(
              "backbone.layer" + std::to_string(s + 1) + "." + std::to_string(b), cin, widths[s],
              stride));
          cin = widths[s];
        }
    } else {
      const std::size_t counts[4] = {3, 4, 6, 3};
      std::size_t cin = 64;
      for (int s = 0; s < 4; ++s)
        for (std::size_t b = 0; b < counts[s]; ++b) {
          const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
          bottleneck_.push_back(std::make_unique<Bottleneck<T>>(
              "backbone.layer" + std::to_string(s + 1) + "." + std::to_string(b), cin, widths[s],
              stride));
          cin = widths[s] * Bottleneck<T>::kExpansion;
        }
      reduce_ = Conv2d<T>("backbone.reduce", 2048, kBackboneChannels, 1, 1, 0, /*bias=*/true);
    }
  }

  std::size_t depth() const { return depth_; }

  void init(Rng& rng) {
    conv1_.init(rng);
    for (auto& b : basic_) b->init(rng);
    for (auto& b : bottleneck_) b->init(rng);
    if (depth_ == 50) reduce_.init(rng);
  }

  // Latent feature extraction; the input spatial size is part of the
  // contract because the 8x8 output grid depends on it.
  Tensor<T> forward(const Tensor<T>& images) {
    require<ShapeError>(images.rank() == 4 && images.dim(1) == 3,
                        "backbone input: expected (B,3,", kInputSize, ",", kInputSize, "), got ",
                        shape_str(images.shape()));
    require<ShapeError>(images.dim(2) == kInputSize && images.dim(3) == kInputSize,
                        "backbone input: expected ", kInputSize, "x", kInputSize, " spatial size, got ",
                        images.dim(2), "x", images.dim(3));
    Tensor<T> x = pool_.forward(relu1_.forward(bn1_.forward(conv1_.forward(images))));
    for (auto& b : basic_) x = b->forward(x);
    for (auto& b : bottleneck_) x = b->forward(x);
    if (depth_ == 50) x = reduce_.forward(x);
    check_shape(x, {images.dim(0), kBackboneChannels, kBackboneGrid, kBackboneGrid},
                "backbone output");
    return x;
  }

  Tensor<T> backward(const Tensor<T>& dz) {
    Tensor<T> d = dz;
    if (depth_ == 50) d = reduce_.backward(d);
    for (auto it = bottleneck_.rbegin(); it != bottleneck_.rend(); ++it) d = (*it)->backward(d);
    for (auto it = basic_.rbegin(); it != basic_.rend(); ++it) d = (*it)->backward(d);
    return conv1_.backward(bn1_.backward(relu1_.backward(pool_.backward(d))));
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    for (auto& b : basic_) b->collect_params(out);
    for (auto& b : bottleneck_) b->collect_params(out);
    if (depth_ == 50) reduce_.collect_params(out);
  }
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    bn1_.collect_buffers(out);
    for (auto& b : basic_) b->collect_buffers(out);
    for (auto& b : bottleneck_) b->collect_buffers(out);
  }
  void set_training(bool t) override {
    Module<T>::set_training(t);
    bn1_.set_training(t);
    for (auto& b : basic_) b->set_training(t);
    for (auto& b : bottleneck_) b->set_training(t);
  }

 private:
  std::size_t depth_;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Relu<T> relu1_;
  MaxPool2d<T> pool_;
  std::vector<std::unique_ptr<BasicBlock<T>>> basic_;
  std::vector<std::unique_ptr<Bottleneck<T>>> bottleneck_;
  Conv2d<T> reduce_;
};

// Weights container manifest keys. A weights file is the standard tensor
// container with a manifest recording the depth and channel layout.
inline void save_backbone(Backbone<float>& backbone, const std::string& path) {
  TensorStore store = snapshot_module(backbone);
  store.meta.insert(store.meta.begin(),
                    {{"format", "eot-backbone"},
                     {"depth", std::to_string(backbone.depth())},
                     {"out_channels", std::to_string(kBackboneChannels)},
                     {"input_size", std::to_string(kInputSize)}});
  store.save(path);
}

inline void load_pretrained_into(const std::string& path, Backbone<float>& backbone) {
  TensorStore store = TensorStore::load(path);
  const std::string* format = store.find_meta("format");
  require<LoadError>(format && *format == "eot-backbone", path, ": not a backbone weights file");
  const std::string* stored_depth = store.find_meta("depth");
  require<LoadError>(stored_depth != nullptr, path, ": missing depth record");
  require<LoadError>(*stored_depth == std::to_string(backbone.depth()), path,
                     ": depth mismatch, file has ", *stored_depth, ", requested ",
                     backbone.depth());
  const std::string* channels = store.find_meta("out_channels");
  require<LoadError>(channels && *channels == std::to_string(kBackboneChannels), path,
                     ": unexpected channel count");
  restore_module(store, backbone);
}

inline Backbone<float> load_pretrained(const std::string& path, std::size_t depth) {
  Backbone<float> backbone(depth);
  load_pretrained_into(path, backbone);
  return backbone;
}

}  // namespace eot

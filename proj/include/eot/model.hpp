#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eot/backbone.hpp"
#include "eot/encoding.hpp"
#include "eot/eot_weights.hpp"
#include "eot/graph.hpp"
#include "eot/head.hpp"
#include "eot/patches.hpp"
#include "eot/tensor.hpp"

namespace eot {

enum class Variant { kDeepTen, kB1, kB2, kB3, kB4, kFull };

inline Variant parse_variant(const std::string& s) {
  if (s == "deep_ten") return Variant::kDeepTen;
  if (s == "b1") return Variant::kB1;
  if (s == "b2") return Variant::kB2;
  if (s == "b3") return Variant::kB3;
  if (s == "b4") return Variant::kB4;
  if (s == "full") return Variant::kFull;
  throw ConfigError("unknown variant: " + s);
}

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kDeepTen: return "deep_ten";
    case Variant::kB1: return "b1";
    case Variant::kB2: return "b2";
    case Variant::kB3: return "b3";
    case Variant::kB4: return "b4";
    default: return "full";
  }
}

struct ModelConfig {
  Variant variant = Variant::kFull;
  size_t backbone_depth = 18;
  size_t classes = 0;
  size_t codewords = 8;
  size_t features = 64;
  size_t heads = 4;
  size_t rounds = 2;
  size_t classifier_hidden = 512;
  GatMerge merge = GatMerge::kAverage;
  bool eot_grad = false;

  void validate() const {
    require<ConfigError>(classes >= 2, "model: need at least 2 classes, got ", classes);
    require<ConfigError>(features > 0 && codewords > 0 && heads > 0 && rounds > 0,
                         "model: dims must be positive");
    require<ConfigError>(backbone_depth == 18 || backbone_depth == 50,
                         "model: backbone depth must be 18 or 50");
  }
};

// Shapes observed on the most recent forward pass (empty where a variant
// skips the stage).
struct ForwardTrace {
  Shape input, feature_map, patches, texture_features, shape_features;
  Shape fused_texture, fused_shape, bilinear, logits;
};

// The variant ladder. deep_ten encodes the whole map and classifies; b1 adds
// the shape stream and bilinear fusion; b2 moves both encodings onto the
// overlapping patch grid with learned fusion; b3 adds one intra-domain
// attention round, b4 instead adds one EoT-guided inter-domain round, and
// full runs both pass types for the configured number of rounds.
template <typename T>
class TerrainModel : public Module<T> {
 public:
  explicit TerrainModel(const ModelConfig& cfg)
      : cfg_(cfg), backbone_(cfg.backbone_depth), eot_(cfg.eot_grad) {
    cfg_.validate();
    const size_t c = kBackboneChannels, f = cfg.features;
    tex_enc_ = std::make_unique<TextureEncoding<T>>("tex_enc", c, cfg.codewords, f);
    if (cfg.variant != Variant::kDeepTen)
      shape_enc_ = std::make_unique<ShapeEncoding<T>>("shape_enc", c, f);
    if (uses_stack()) {
      StackConfig sc;
      sc.rounds = cfg.variant == Variant::kFull ? cfg.rounds : 1;
      sc.intra = cfg.variant == Variant::kB3 || cfg.variant == Variant::kFull;
      sc.inter = cfg.variant == Variant::kB4 || cfg.variant == Variant::kFull;
      sc.heads = cfg.heads;
      sc.merge = cfg.merge;
      stack_ = std::make_unique<MessagePassingStack<T>>("stack", f, sc);
    }
    if (uses_patches()) {
      fuse_tex_ = std::make_unique<PatchFusion<T>>("fuse_tex", kPatchCount);
      fuse_shape_ = std::make_unique<PatchFusion<T>>("fuse_shape", kPatchCount);
    }
    if (cfg.variant != Variant::kDeepTen)
      bilinear_ = std::make_unique<BilinearFusion<T>>("bilinear", f);
    const size_t head_in = cfg.variant == Variant::kDeepTen ? f : f * f;
    classifier_ = std::make_unique<Classifier<T>>("classifier", head_in, cfg.classifier_hidden,
                                                  cfg.classes);
  }

  const ModelConfig& config() const { return cfg_; }
  Backbone<T>& backbone() { return backbone_; }
  const ForwardTrace& trace() const { return trace_; }

  bool uses_patches() const { return cfg_.variant != Variant::kDeepTen && cfg_.variant != Variant::kB1; }
  bool uses_stack() const {
    return cfg_.variant == Variant::kB3 || cfg_.variant == Variant::kB4 ||
           cfg_.variant == Variant::kFull;
  }
  bool uses_eot() const { return cfg_.variant == Variant::kB4 || cfg_.variant == Variant::kFull; }

  // Pipeline stage names in execution order, for introspection.
  std::vector<std::string> stages() const {
    std::vector<std::string> s{"backbone"};
    if (uses_patches()) s.push_back("patch_extraction");
    s.push_back("texture_encoding");
    if (cfg_.variant != Variant::kDeepTen) s.push_back("shape_encoding");
    if (uses_eot()) s.push_back("eot_weights");
    if (uses_stack()) {
      const StackConfig& sc = stack_->config();
      if (sc.intra) s.push_back("intra_domain_passing");
      if (sc.inter) s.push_back("inter_domain_passing");
    }
    if (uses_patches()) s.push_back("patch_fusion");
    if (cfg_.variant != Variant::kDeepTen) s.push_back("bilinear_fusion");
    s.push_back("classifier");
    return s;
  }

  void init(Rng& rng) {
    backbone_.init(rng);
    tex_enc_->init(rng);
    if (shape_enc_) shape_enc_->init(rng);
    if (stack_) stack_->init(rng);
    if (fuse_tex_) {
      fuse_tex_->init(rng);
      fuse_shape_->init(rng);
    }
    if (bilinear_) bilinear_->init(rng);
    classifier_->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& images) {
    trace_ = ForwardTrace{};
    trace_.input = images.shape();
    Tensor<T> z = backbone_.forward(images);
    trace_.feature_map = z.shape();
    zshape_ = z.shape();

    Tensor<T> logits;
    if (cfg_.variant == Variant::kDeepTen) {
      Tensor<T> enc = tex_enc_->forward(descriptors_from_map(z));
      trace_.texture_features = enc.shape();
      logits = classifier_->forward(enc.reshaped({enc.dim(0), enc.dim(2)}));
    } else if (cfg_.variant == Variant::kB1) {
      Tensor<T> desc = descriptors_from_map(z);
      Tensor<T> et = tex_enc_->forward(desc);
      Tensor<T> es = shape_enc_->forward(desc);
      trace_.texture_features = et.shape();
      trace_.shape_features = es.shape();
      Tensor<T> t = et.reshaped({et.dim(0), et.dim(2)});
      Tensor<T> s = es.reshaped({es.dim(0), es.dim(2)});
      trace_.fused_texture = t.shape();
      trace_.fused_shape = s.shape();
      Tensor<T> fused = bilinear_->forward(t, s);
      trace_.bilinear = fused.shape();
      logits = classifier_->forward(fused);
    } else {
      Tensor<T> patches = extract_patches(z);
      trace_.patches = patches.shape();
      patch_shape_ = patches.shape();
      Tensor<T> desc = descriptors_from_patches(patches);
      Tensor<T> et = tex_enc_->forward(desc);
      Tensor<T> es = shape_enc_->forward(desc);
      if (uses_eot()) weights_ = eot_.forward(patches);
      if (stack_) {
        auto [t2, s2] = stack_->forward(et, es, weights_.texture, weights_.shape);
        et = std::move(t2);
        es = std::move(s2);
      }
      trace_.texture_features = et.shape();
      trace_.shape_features = es.shape();
      Tensor<T> t = fuse_tex_->forward(et);
      Tensor<T> s = fuse_shape_->forward(es);
      trace_.fused_texture = t.shape();
      trace_.fused_shape = s.shape();
      Tensor<T> fused = bilinear_->forward(t, s);
      trace_.bilinear = fused.shape();
      logits = classifier_->forward(fused);
    }
    trace_.logits = logits.shape();
    return logits;
  }

  void backward(const Tensor<T>& dlogits) {
    Tensor<T> dhead = classifier_->backward(dlogits);
    Tensor<T> dz;
    if (cfg_.variant == Variant::kDeepTen) {
      const size_t b = dhead.dim(0), f = dhead.dim(1);
      Tensor<T> ddesc = tex_enc_->backward(dhead.reshaped({b, 1, f}));
      dz = descriptors_from_map_backward(ddesc, zshape_);
    } else if (cfg_.variant == Variant::kB1) {
      auto [dt, ds] = bilinear_->backward(dhead);
      const size_t b = dt.dim(0), f = dt.dim(1);
      Tensor<T> ddesc = tex_enc_->backward(dt.reshaped({b, 1, f}));
      Tensor<T> ddesc_s = shape_enc_->backward(ds.reshaped({b, 1, f}));
      axpy(T(1), ddesc_s, ddesc);
      dz = descriptors_from_map_backward(ddesc, zshape_);
    } else {
      auto [dtf, dsf] = bilinear_->backward(dhead);
      Tensor<T> det = fuse_tex_->backward(dtf);
      Tensor<T> des = fuse_shape_->backward(dsf);
      const size_t b = det.dim(0), k = det.dim(1);
      Tensor<T> dwt({b, k}), dws({b, k});
      dwt.zero();
      dws.zero();
      if (stack_) {
        auto [dt2, ds2] = stack_->backward(det, des, dwt, dws);
        det = std::move(dt2);
        des = std::move(ds2);
      }
      Tensor<T> ddesc = tex_enc_->backward(det);
      Tensor<T> ddesc_s = shape_enc_->backward(des);
      axpy(T(1), ddesc_s, ddesc);
      Tensor<T> dpatches = descriptors_from_patches_backward(ddesc, patch_shape_);
      if (uses_eot() && eot_.grad_enabled()) {
        Tensor<T> dfrom_eot = eot_.backward(dwt, dws);
        axpy(T(1), dfrom_eot, dpatches);
      }
      dz = extract_patches_backward(dpatches, zshape_);
    }
    backbone_.backward(dz);
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    backbone_.collect_params(out);
    tex_enc_->collect_params(out);
    if (shape_enc_) shape_enc_->collect_params(out);
    if (stack_) stack_->collect_params(out);
    if (fuse_tex_) {
      fuse_tex_->collect_params(out);
      fuse_shape_->collect_params(out);
    }
    if (bilinear_) bilinear_->collect_params(out);
    classifier_->collect_params(out);
  }

  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    backbone_.collect_buffers(out);
  }

  void set_training(bool t) override {
    Module<T>::set_training(t);
    backbone_.set_training(t);
  }

 private:
  ModelConfig cfg_;
  Backbone<T> backbone_;
  EotModule<T> eot_;
  std::unique_ptr<TextureEncoding<T>> tex_enc_;
  std::unique_ptr<ShapeEncoding<T>> shape_enc_;
  std::unique_ptr<MessagePassingStack<T>> stack_;
  std::unique_ptr<PatchFusion<T>> fuse_tex_, fuse_shape_;
  std::unique_ptr<BilinearFusion<T>> bilinear_;
  std::unique_ptr<Classifier<T>> classifier_;
  EotWeights<T> weights_;
  Shape zshape_, patch_shape_;
  ForwardTrace trace_;
};

}  // namespace eot

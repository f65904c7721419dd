#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eot/layers.hpp"
#include "eot/module.hpp"
#include "eot/tensor.hpp"

namespace eot {

enum class GatMerge { kAverage, kConcatProject };

inline GatMerge parse_gat_merge(const std::string& s) {
  if (s == "average") return GatMerge::kAverage;
  if (s == "concat_project") return GatMerge::kConcatProject;
  throw ConfigError("unknown gat merge: " + s);
}

inline std::string to_string(GatMerge m) {
  return m == GatMerge::kAverage ? "average" : "concat_project";
}

// Graph attention over the complete patch graph (self-edges included).
// Edge scores are additive attention with a LeakyReLU, normalised per source
// node; head outputs are merged and then ReLU-activated.
template <typename T>
class GatLayer : public Module<T> {
 public:
  GatLayer(std::string name, size_t features, size_t heads, GatMerge merge = GatMerge::kAverage)
      : features_(features), heads_(heads), merge_(merge) {
    require<ConfigError>(heads > 0, "gat: heads must be positive");
    for (size_t h = 0; h < heads; ++h) {
      const std::string prefix = name + ".head" + std::to_string(h);
      weight_.emplace_back(prefix + ".weight", Shape{features, features});
      attn_.emplace_back(prefix + ".attn", Shape{2 * features});
    }
    if (merge_ == GatMerge::kConcatProject)
      proj_ = std::make_unique<Linear<T>>(name + ".merge", heads * features, features, false);
  }

  size_t features() const { return features_; }
  size_t heads() const { return heads_; }

  void init(Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(features_));
    for (size_t h = 0; h < heads_; ++h) {
      rng.fill_uniform(weight_[h].value, -bound, bound);
      rng.fill_uniform(attn_[h].value, -bound, bound);
    }
    if (proj_) proj_->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(2) == features_, "gat: expected (B,k,", features_,
                        "), got ", shape_str(x.shape()));
    const size_t b = x.dim(0), k = x.dim(1), f = features_;
    input_ = x;
    proto_.assign(b * heads_, Tensor<T>());
    alpha_.assign(b * heads_, Tensor<T>());
    scores_.assign(b * heads_, Tensor<T>());

    Tensor<T> merged = merge_ == GatMerge::kAverage ? Tensor<T>({b, k, f})
                                                    : Tensor<T>({b, k, heads_ * f});
    merged.zero();
    for (size_t n = 0; n < b; ++n) {
      const T* xb = x.data() + n * k * f;
      for (size_t h = 0; h < heads_; ++h) {
        Tensor<T>& u = proto_[n * heads_ + h];
        u = Tensor<T>({k, f});
        matmul(xb, weight_[h].value.data(), u.data(), k, f, f, false, true);

        const T* a1 = attn_[h].value.data();
        const T* a2 = a1 + f;
        std::vector<T> p(k), q(k);
        for (size_t i = 0; i < k; ++i) {
          double sp = 0.0, sq = 0.0;
          const T* ui = u.data() + i * f;
          for (size_t c = 0; c < f; ++c) {
            sp += static_cast<double>(ui[c]) * a1[c];
            sq += static_cast<double>(ui[c]) * a2[c];
          }
          p[i] = static_cast<T>(sp);
          q[i] = static_cast<T>(sq);
        }
        Tensor<T>& z = scores_[n * heads_ + h];
        z = Tensor<T>({k, k});
        Tensor<T>& alpha = alpha_[n * heads_ + h];
        alpha = Tensor<T>({k, k});
        for (size_t i = 0; i < k; ++i)
          for (size_t j = 0; j < k; ++j) {
            const T zij = p[i] + q[j];
            z[i * k + j] = zij;
            alpha[i * k + j] = zij > T(0) ? zij : static_cast<T>(kLeakySlope) * zij;
          }
        softmax_rows(alpha.data(), k, k);

        if (merge_ == GatMerge::kAverage) {
          Tensor<T> agg({k, f});
          matmul(alpha.data(), u.data(), agg.data(), k, f, k);
          T* mb = merged.data() + n * k * f;
          const T scale = T(1) / static_cast<T>(heads_);
          for (size_t s = 0; s < k * f; ++s) mb[s] += scale * agg[s];
        } else {
          Tensor<T> agg({k, f});
          matmul(alpha.data(), u.data(), agg.data(), k, f, k);
          T* mb = merged.data() + n * k * heads_ * f;
          for (size_t i = 0; i < k; ++i)
            for (size_t c = 0; c < f; ++c) mb[i * heads_ * f + h * f + c] = agg[i * f + c];
        }
      }
    }
    pre_act_ = proj_ ? proj_->forward(merged) : std::move(merged);
    Tensor<T> out(pre_act_.shape());
    for (size_t s = 0; s < out.size(); ++s)
      out[s] = pre_act_[s] > T(0) ? pre_act_[s] : T(0);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    check_shape(dy, pre_act_.shape(), "gat: upstream gradient");
    const size_t b = input_.dim(0), k = input_.dim(1), f = features_;
    Tensor<T> dact(dy.shape());
    for (size_t s = 0; s < dy.size(); ++s) dact[s] = pre_act_[s] > T(0) ? dy[s] : T(0);
    Tensor<T> dmerged = proj_ ? proj_->backward(dact) : std::move(dact);

    Tensor<T> dx(input_.shape());
    dx.zero();
    for (size_t n = 0; n < b; ++n) {
      const T* xb = input_.data() + n * k * f;
      T* dxb = dx.data() + n * k * f;
      for (size_t h = 0; h < heads_; ++h) {
        const Tensor<T>& u = proto_[n * heads_ + h];
        const Tensor<T>& alpha = alpha_[n * heads_ + h];
        const Tensor<T>& z = scores_[n * heads_ + h];

        Tensor<T> dagg({k, f});
        if (merge_ == GatMerge::kAverage) {
          const T scale = T(1) / static_cast<T>(heads_);
          const T* mb = dmerged.data() + n * k * f;
          for (size_t s = 0; s < k * f; ++s) dagg[s] = scale * mb[s];
        } else {
          const T* mb = dmerged.data() + n * k * heads_ * f;
          for (size_t i = 0; i < k; ++i)
            for (size_t c = 0; c < f; ++c) dagg[i * f + c] = mb[i * heads_ * f + h * f + c];
        }

        // agg = alpha * u
        Tensor<T> dalpha({k, k});
        matmul(dagg.data(), u.data(), dalpha.data(), k, k, f, false, true);
        Tensor<T> du({k, f});
        matmul(alpha.data(), dagg.data(), du.data(), k, f, k, true, false);

        // softmax rows, then the LeakyReLU on raw scores
        Tensor<T> dz({k, k});
        for (size_t i = 0; i < k; ++i) {
          const T* ai = alpha.data() + i * k;
          const T* gi = dalpha.data() + i * k;
          double mix = 0.0;
          for (size_t j = 0; j < k; ++j) mix += static_cast<double>(gi[j]) * ai[j];
          for (size_t j = 0; j < k; ++j) {
            const T de = static_cast<T>(ai[j] * (static_cast<double>(gi[j]) - mix));
            dz[i * k + j] = z[i * k + j] > T(0) ? de : static_cast<T>(kLeakySlope) * de;
          }
        }

        // z_ij = u_i . a1 + u_j . a2
        std::vector<T> dp(k, T(0)), dq(k, T(0));
        for (size_t i = 0; i < k; ++i)
          for (size_t j = 0; j < k; ++j) {
            dp[i] += dz[i * k + j];
            dq[j] += dz[i * k + j];
          }
        const T* a1 = attn_[h].value.data();
        const T* a2 = a1 + f;
        T* da1 = attn_[h].grad.data();
        T* da2 = da1 + f;
        for (size_t i = 0; i < k; ++i) {
          const T* ui = u.data() + i * f;
          T* dui = du.data() + i * f;
          for (size_t c = 0; c < f; ++c) {
            da1[c] += dp[i] * ui[c];
            da2[c] += dq[i] * ui[c];
            dui[c] += dp[i] * a1[c] + dq[i] * a2[c];
          }
        }

        // u = x W^T
        matmul(du.data(), xb, weight_[h].grad.data(), f, f, k, true, false, true);
        matmul(du.data(), weight_[h].value.data(), dxb, k, f, f, false, false, true);
      }
    }
    return dx;
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    for (size_t h = 0; h < heads_; ++h) {
      out.push_back(&weight_[h]);
      out.push_back(&attn_[h]);
    }
    if (proj_) proj_->collect_params(out);
  }

  // Normalized attention map for one (sample, head) pair from the last
  // forward, shape (k, k); rows sum to one.
  const Tensor<T>& attention(size_t sample, size_t head) const {
    return alpha_.at(sample * heads_ + head);
  }

  // Raw additive edge scores (before the LeakyReLU) for one (sample, head)
  // pair from the last forward, shape (k, k).
  const Tensor<T>& edge_scores(size_t sample, size_t head) const {
    return scores_.at(sample * heads_ + head);
  }

  // Merged head outputs before the final ReLU, from the last forward.
  const Tensor<T>& pre_activation() const { return pre_act_; }

 private:
  static constexpr double kLeakySlope = 0.2;

  size_t features_, heads_;
  GatMerge merge_;
  std::vector<Parameter<T>> weight_, attn_;
  std::unique_ptr<Linear<T>> proj_;
  Tensor<T> input_, pre_act_;
  std::vector<Tensor<T>> proto_, alpha_, scores_;
};

// Weighted sum of per-patch features: summary_b = sum_i w_bi * feat_bi.
template <typename T>
Tensor<T> domain_summary(const Tensor<T>& feats, const Tensor<T>& weights) {
  require<ShapeError>(feats.rank() == 3, "domain summary: expected (B,k,F) features, got ",
                      shape_str(feats.shape()));
  const size_t b = feats.dim(0), k = feats.dim(1), f = feats.dim(2);
  check_shape(weights, {b, k}, "domain summary: weights");
  Tensor<T> out({b, f});
  out.zero();
  for (size_t n = 0; n < b; ++n)
    for (size_t i = 0; i < k; ++i) {
      const T w = weights[n * k + i];
      const T* src = feats.data() + (n * k + i) * f;
      T* dst = out.data() + n * f;
      for (size_t c = 0; c < f; ++c) dst[c] += w * src[c];
    }
  return out;
}

template <typename T>
void domain_summary_backward(const Tensor<T>& dsummary, const Tensor<T>& feats,
                             const Tensor<T>& weights, Tensor<T>& dfeats, Tensor<T>& dweights) {
  const size_t b = feats.dim(0), k = feats.dim(1), f = feats.dim(2);
  check_shape(dsummary, {b, f}, "domain summary: upstream gradient");
  for (size_t n = 0; n < b; ++n) {
    const T* ds = dsummary.data() + n * f;
    for (size_t i = 0; i < k; ++i) {
      const T w = weights[n * k + i];
      const T* src = feats.data() + (n * k + i) * f;
      T* dst = dfeats.data() + (n * k + i) * f;
      double acc = 0.0;
      for (size_t c = 0; c < f; ++c) {
        dst[c] += w * ds[c];
        acc += static_cast<double>(ds[c]) * src[c];
      }
      dweights[n * k + i] += static_cast<T>(acc);
    }
  }
}

// Cross-domain exchange guided by the extent weights: each texture feature is
// refreshed with the shape-domain summary and vice versa, through learned
// affine reductions of the concatenated pair.
template <typename T>
class InterDomainLayer : public Module<T> {
 public:
  InterDomainLayer(std::string name, size_t features)
      : features_(features),
        mix_tex_(name + ".tex", 2 * features, features),
        mix_shape_(name + ".shape", 2 * features, features) {}

  void init(Rng& rng) {
    mix_tex_.init(rng);
    mix_shape_.init(rng);
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& tex, const Tensor<T>& shape,
                                          const Tensor<T>& wt, const Tensor<T>& ws) {
    const size_t b = tex.dim(0), k = tex.dim(1), f = features_;
    check_shape(tex, {b, k, f}, "inter-domain: texture features");
    check_shape(shape, {b, k, f}, "inter-domain: shape features");
    check_shape(wt, {b, k}, "inter-domain: texture weights");
    check_shape(ws, {b, k}, "inter-domain: shape weights");
    tex_ = tex;
    shape_ = shape;
    wt_ = wt;
    ws_ = ws;
    sum_tex_ = domain_summary(tex, wt);
    sum_shape_ = domain_summary(shape, ws);

    Tensor<T> cat_t({b, k, 2 * f}), cat_s({b, k, 2 * f});
    for (size_t n = 0; n < b; ++n)
      for (size_t i = 0; i < k; ++i) {
        T* ct = cat_t.data() + (n * k + i) * 2 * f;
        T* cs = cat_s.data() + (n * k + i) * 2 * f;
        const T* et = tex.data() + (n * k + i) * f;
        const T* es = shape.data() + (n * k + i) * f;
        const T* rt = sum_tex_.data() + n * f;
        const T* rs = sum_shape_.data() + n * f;
        for (size_t c = 0; c < f; ++c) {
          ct[c] = et[c];
          ct[f + c] = rs[c];
          cs[c] = es[c];
          cs[f + c] = rt[c];
        }
      }
    return {mix_tex_.forward(cat_t), mix_shape_.forward(cat_s)};
  }

  // Returns gradients for (tex, shape) and accumulates into (dwt, dws).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dtex_out, const Tensor<T>& dshape_out,
                                           Tensor<T>& dwt, Tensor<T>& dws) {
    const size_t b = tex_.dim(0), k = tex_.dim(1), f = features_;
    Tensor<T> dcat_t = mix_tex_.backward(dtex_out);
    Tensor<T> dcat_s = mix_shape_.backward(dshape_out);

    Tensor<T> dtex(tex_.shape()), dshape(shape_.shape());
    dtex.zero();
    dshape.zero();
    Tensor<T> dsum_tex({b, f}), dsum_shape({b, f});
    dsum_tex.zero();
    dsum_shape.zero();
    for (size_t n = 0; n < b; ++n)
      for (size_t i = 0; i < k; ++i) {
        const T* ct = dcat_t.data() + (n * k + i) * 2 * f;
        const T* cs = dcat_s.data() + (n * k + i) * 2 * f;
        T* dt = dtex.data() + (n * k + i) * f;
        T* ds = dshape.data() + (n * k + i) * f;
        T* drt = dsum_tex.data() + n * f;
        T* drs = dsum_shape.data() + n * f;
        for (size_t c = 0; c < f; ++c) {
          dt[c] += ct[c];
          drs[c] += ct[f + c];
          ds[c] += cs[c];
          drt[c] += cs[f + c];
        }
      }
    domain_summary_backward(dsum_tex, tex_, wt_, dtex, dwt);
    domain_summary_backward(dsum_shape, shape_, ws_, dshape, dws);
    return {std::move(dtex), std::move(dshape)};
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    mix_tex_.collect_params(out);
    mix_shape_.collect_params(out);
  }

 private:
  size_t features_;
  Linear<T> mix_tex_, mix_shape_;
  Tensor<T> tex_, shape_, wt_, ws_, sum_tex_, sum_shape_;
};

// One round = optional intra-domain attention per domain, then optional
// EoT-guided inter-domain exchange. Rounds run with fixed extent weights but
// recompute domain summaries from the current features.
struct StackConfig {
  size_t rounds = 2;
  bool intra = true;
  bool inter = true;
  size_t heads = 4;
  GatMerge merge = GatMerge::kAverage;
};

template <typename T>
class MessagePassingStack : public Module<T> {
 public:
  MessagePassingStack(std::string name, size_t features, const StackConfig& cfg)
      : config_(cfg) {
    require<ConfigError>(cfg.rounds > 0, "message passing: rounds must be positive");
    require<ConfigError>(cfg.intra || cfg.inter, "message passing: at least one pass type");
    for (size_t r = 0; r < cfg.rounds; ++r) {
      const std::string prefix = name + ".round" + std::to_string(r);
      Round round;
      if (cfg.intra) {
        round.gat_tex = std::make_unique<GatLayer<T>>(prefix + ".gat_tex", features, cfg.heads,
                                                      cfg.merge);
        round.gat_shape = std::make_unique<GatLayer<T>>(prefix + ".gat_shape", features, cfg.heads,
                                                        cfg.merge);
      }
      if (cfg.inter)
        round.inter = std::make_unique<InterDomainLayer<T>>(prefix + ".inter", features);
      rounds_.push_back(std::move(round));
    }
  }

  const StackConfig& config() const { return config_; }

  void init(Rng& rng) {
    for (Round& r : rounds_) {
      if (r.gat_tex) r.gat_tex->init(rng);
      if (r.gat_shape) r.gat_shape->init(rng);
      if (r.inter) r.inter->init(rng);
    }
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& tex, const Tensor<T>& shape,
                                          const Tensor<T>& wt, const Tensor<T>& ws) {
    Tensor<T> t = tex, s = shape;
    for (Round& r : rounds_) {
      if (r.gat_tex) {
        t = r.gat_tex->forward(t);
        s = r.gat_shape->forward(s);
      }
      if (r.inter) {
        auto [t2, s2] = r.inter->forward(t, s, wt, ws);
        t = std::move(t2);
        s = std::move(s2);
      }
    }
    return {std::move(t), std::move(s)};
  }

  // dwt/dws accumulate the extent-weight gradients from every round.
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dtex, const Tensor<T>& dshape,
                                           Tensor<T>& dwt, Tensor<T>& dws) {
    Tensor<T> dt = dtex, ds = dshape;
    for (auto it = rounds_.rbegin(); it != rounds_.rend(); ++it) {
      if (it->inter) {
        auto [dt2, ds2] = it->inter->backward(dt, ds, dwt, dws);
        dt = std::move(dt2);
        ds = std::move(ds2);
      }
      if (it->gat_tex) {
        dt = it->gat_tex->backward(dt);
        ds = it->gat_shape->backward(ds);
      }
    }
    return {std::move(dt), std::move(ds)};
  }

  void collect_params(std::vector<Parameter<T>*>& out) override {
    for (Round& r : rounds_) {
      if (r.gat_tex) r.gat_tex->collect_params(out);
      if (r.gat_shape) r.gat_shape->collect_params(out);
      if (r.inter) r.inter->collect_params(out);
    }
  }

 private:
  struct Round {
    std::unique_ptr<GatLayer<T>> gat_tex, gat_shape;
    std::unique_ptr<InterDomainLayer<T>> inter;
  };

  StackConfig config_;
  std::vector<Round> rounds_;
};

}  // namespace eot

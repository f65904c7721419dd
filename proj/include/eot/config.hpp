#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eot/common.hpp"
#include "eot/graph.hpp"
#include "eot/head.hpp"
#include "eot/model.hpp"

namespace eot {

// Flat key=value text: one pair per line, '#' starts a comment, blank lines
// ignored, dotted keys namespace sub-configs. Insertion order is preserved so
// serialisation is stable.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const size_t eq = trimmed.find('=');
      require<ConfigError>(eq != std::string::npos, "config line ", lineno, ": expected key=value");
      std::string key = trim(trimmed.substr(0, eq));
      require<ConfigError>(!key.empty(), "config line ", lineno, ": empty key");
      require<ConfigError>(!cfg.has(key), "config line ", lineno, ": duplicate key '", key, "'");
      cfg.set(key, trim(trimmed.substr(eq + 1)));
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    require<IoError>(in.good(), "cannot open config file: ", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : pairs_) {
      out += k;
      out += '=';
      out += v;
      out += '\n';
    }
    return out;
  }

  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : pairs_)
      if (k == key) {
        v = std::move(value);
        return;
      }
    pairs_.emplace_back(key, std::move(value));
  }

  bool has(const std::string& key) const {
    for (const auto& [k, v] : pairs_)
      if (k == key) return true;
    return false;
  }

  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : pairs_)
      if (k == key) return v;
    throw ConfigError("missing config key: " + key);
  }

  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

  // "key=value" override strings from the command line.
  void apply_override(const std::string& spec) {
    const size_t eq = spec.find('=');
    require<ConfigError>(eq != std::string::npos && eq > 0, "override must be key=value: ", spec);
    set(trim(spec.substr(0, eq)), trim(spec.substr(eq + 1)));
  }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::vector<std::pair<std::string, std::string>> pairs_;
};

namespace detail {

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require<ConfigError>(ec == std::errc() && ptr == v.data() + v.size(), "config key ", key,
                       ": expected integer, got '", v, "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require<ConfigError>(ec == std::errc() && ptr == v.data() + v.size(), "config key ", key,
                       ": expected number, got '", v, "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + v + "'");
}

inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

enum class ScaleMode { kSingle, kMulti };

inline ScaleMode parse_scale_mode(const std::string& s) {
  if (s == "single") return ScaleMode::kSingle;
  if (s == "multi") return ScaleMode::kMulti;
  throw ConfigError("unknown scale_mode: " + s);
}

inline std::string to_string(ScaleMode m) { return m == ScaleMode::kSingle ? "single" : "multi"; }

enum class DatasetLayout { kGeneric, kGtosMobile, kDtd, kMinc2500 };

inline DatasetLayout parse_layout(const std::string& s) {
  if (s == "generic") return DatasetLayout::kGeneric;
  if (s == "gtos_mobile") return DatasetLayout::kGtosMobile;
  if (s == "dtd") return DatasetLayout::kDtd;
  if (s == "minc2500") return DatasetLayout::kMinc2500;
  throw ConfigError("unknown dataset layout: " + s);
}

inline std::string to_string(DatasetLayout l) {
  switch (l) {
    case DatasetLayout::kGeneric: return "generic";
    case DatasetLayout::kGtosMobile: return "gtos_mobile";
    case DatasetLayout::kDtd: return "dtd";
    default: return "minc2500";
  }
}

// Complete run description: model dims, optimizer recipe, data location and
// augmentation. One-to-one with the config file schema.
struct TrainConfig {
  std::string variant = "full";
  size_t epochs = 30;
  size_t batch_size = 128;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  ScaleMode scale_mode = ScaleMode::kSingle;
  unsigned long long seed = 1;
  Loss loss = Loss::kL2;

  size_t backbone_depth = 18;
  std::string backbone_pretrained;  // empty = random init

  size_t codewords = 8;
  size_t features = 64;
  size_t gat_heads = 4;
  GatMerge gat_merge = GatMerge::kAverage;
  size_t rounds = 2;
  size_t classifier_hidden = 512;
  bool eot_grad = false;

  std::string data_root;
  std::string data_test_root;  // generic layout: separate test tree (else split of root)
  DatasetLayout data_layout = DatasetLayout::kGeneric;
  bool data_strict = true;

  double flip_prob = 0.5;
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;

  void validate() const {
    require<ConfigError>(epochs >= 1, "epochs must be >= 1, got ", epochs);
    require<ConfigError>(batch_size >= 1, "batch_size must be >= 1");
    require<ConfigError>(lr > 0, "lr must be positive");
    require<ConfigError>(momentum >= 0 && momentum < 1, "momentum must be in [0,1)");
    require<ConfigError>(weight_decay >= 0, "weight_decay must be non-negative");
    require<ConfigError>(flip_prob >= 0 && flip_prob <= 1, "flip_prob must be in [0,1]");
    require<ConfigError>(jitter_brightness >= 0 && jitter_contrast >= 0 && jitter_saturation >= 0,
                         "jitter magnitudes must be non-negative");
    parse_variant(variant);
  }

  static TrainConfig from_kv(const KvConfig& kv) {
    TrainConfig c;
    std::vector<std::string> seen;
    auto take = [&](const std::string& key) -> const std::string* {
      if (!kv.has(key)) return nullptr;
      seen.push_back(key);
      return &kv.get(key);
    };
    if (const auto* v = take("variant")) c.variant = *v;
    if (const auto* v = take("epochs")) c.epochs = checked_size("epochs", *v);
    if (const auto* v = take("batch_size")) c.batch_size = checked_size("batch_size", *v);
    if (const auto* v = take("lr")) c.lr = detail::parse_real("lr", *v);
    if (const auto* v = take("momentum")) c.momentum = detail::parse_real("momentum", *v);
    if (const auto* v = take("weight_decay")) c.weight_decay = detail::parse_real("weight_decay", *v);
    if (const auto* v = take("scale_mode")) c.scale_mode = parse_scale_mode(*v);
    if (const auto* v = take("seed"))
      c.seed = static_cast<unsigned long long>(detail::parse_int("seed", *v));
    if (const auto* v = take("loss")) c.loss = parse_loss(*v);
    if (const auto* v = take("backbone_depth"))
      c.backbone_depth = checked_size("backbone_depth", *v);
    if (const auto* v = take("backbone_pretrained")) c.backbone_pretrained = *v;
    if (const auto* v = take("codewords")) c.codewords = checked_size("codewords", *v);
    if (const auto* v = take("features")) c.features = checked_size("features", *v);
    if (const auto* v = take("gat_heads")) c.gat_heads = checked_size("gat_heads", *v);
    if (const auto* v = take("gat_merge")) c.gat_merge = parse_gat_merge(*v);
    if (const auto* v = take("rounds")) c.rounds = checked_size("rounds", *v);
    if (const auto* v = take("classifier_hidden"))
      c.classifier_hidden = checked_size("classifier_hidden", *v);
    if (const auto* v = take("eot_grad")) c.eot_grad = detail::parse_bool("eot_grad", *v);
    if (const auto* v = take("data.root")) c.data_root = *v;
    if (const auto* v = take("data.test_root")) c.data_test_root = *v;
    if (const auto* v = take("data.layout")) c.data_layout = parse_layout(*v);
    if (const auto* v = take("data.strict")) c.data_strict = detail::parse_bool("data.strict", *v);
    if (const auto* v = take("augment.flip_prob"))
      c.flip_prob = detail::parse_real("augment.flip_prob", *v);
    if (const auto* v = take("augment.brightness"))
      c.jitter_brightness = detail::parse_real("augment.brightness", *v);
    if (const auto* v = take("augment.contrast"))
      c.jitter_contrast = detail::parse_real("augment.contrast", *v);
    if (const auto* v = take("augment.saturation"))
      c.jitter_saturation = detail::parse_real("augment.saturation", *v);

    for (const auto& [k, v] : kv.pairs()) {
      bool known = false;
      for (const auto& s : seen)
        if (s == k) known = true;
      require<ConfigError>(known, "unknown config key: ", k);
    }
    c.validate();
    return c;
  }

  KvConfig to_kv() const {
    KvConfig kv;
    kv.set("variant", variant);
    kv.set("epochs", std::to_string(epochs));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("lr", detail::format_real(lr));
    kv.set("momentum", detail::format_real(momentum));
    kv.set("weight_decay", detail::format_real(weight_decay));
    kv.set("scale_mode", to_string(scale_mode));
    kv.set("seed", std::to_string(seed));
    kv.set("loss", to_string(loss));
    kv.set("backbone_depth", std::to_string(backbone_depth));
    kv.set("backbone_pretrained", backbone_pretrained);
    kv.set("codewords", std::to_string(codewords));
    kv.set("features", std::to_string(features));
    kv.set("gat_heads", std::to_string(gat_heads));
    kv.set("gat_merge", to_string(gat_merge));
    kv.set("rounds", std::to_string(rounds));
    kv.set("classifier_hidden", std::to_string(classifier_hidden));
    kv.set("eot_grad", eot_grad ? "true" : "false");
    kv.set("data.root", data_root);
    kv.set("data.test_root", data_test_root);
    kv.set("data.layout", to_string(data_layout));
    kv.set("data.strict", data_strict ? "true" : "false");
    kv.set("augment.flip_prob", detail::format_real(flip_prob));
    kv.set("augment.brightness", detail::format_real(jitter_brightness));
    kv.set("augment.contrast", detail::format_real(jitter_contrast));
    kv.set("augment.saturation", detail::format_real(jitter_saturation));
    return kv;
  }

  ModelConfig model_config(size_t classes) const {
    ModelConfig mc;
    mc.variant = parse_variant(variant);
    mc.backbone_depth = backbone_depth;
    mc.classes = classes;
    mc.codewords = codewords;
    mc.features = features;
    mc.heads = gat_heads;
    mc.rounds = rounds;
    mc.classifier_hidden = classifier_hidden;
    mc.merge = gat_merge;
    mc.eot_grad = eot_grad;
    return mc;
  }

 private:
  static size_t checked_size(const std::string& key, const std::string& v) {
    const long long n = detail::parse_int(key, v);
    require<ConfigError>(n >= 0, "config key ", key, ": must be non-negative");
    return static_cast<size_t>(n);
  }
};

}  // namespace eot

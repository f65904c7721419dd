#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "eot/config.hpp"

using eot::KvConfig;
using eot::TrainConfig;

TEST_CASE("key-value text parses with comments and blank lines", "[config]") {
  const std::string text =
      "# run settings\n"
      "\n"
      "variant = full   # trailing comment\n"
      "  lr=0.05\n"
      "data.root=/data/terrain\n";
  KvConfig kv = KvConfig::parse(text);
  REQUIRE(kv.get("variant") == "full");
  REQUIRE(kv.get("lr") == "0.05");
  REQUIRE(kv.get("data.root") == "/data/terrain");
  REQUIRE_FALSE(kv.has("epochs"));
  REQUIRE_THROWS_AS(kv.get("epochs"), eot::ConfigError);
}

TEST_CASE("malformed config lines are rejected", "[config]") {
  REQUIRE_THROWS_AS(KvConfig::parse("novalue\n"), eot::ConfigError);
  REQUIRE_THROWS_AS(KvConfig::parse("=3\n"), eot::ConfigError);
  REQUIRE_THROWS_AS(KvConfig::parse("a=1\na=2\n"), eot::ConfigError);  // duplicate
  REQUIRE_NOTHROW(KvConfig::parse("a=1\nb = x = y\n"));  // later '=' joins the value
  REQUIRE(KvConfig::parse("b = x = y\n").get("b") == "x = y");
}

TEST_CASE("serialization round-trips to a fixed point", "[config]") {
  const std::string text = "b=2\na=1\nc=hello world\n";
  KvConfig kv = KvConfig::parse(text);
  const std::string once = kv.serialize();
  REQUIRE(once == text);  // insertion order preserved
  REQUIRE(KvConfig::parse(once).serialize() == once);
}

TEST_CASE("overrides replace or append keys", "[config]") {
  KvConfig kv = KvConfig::parse("a=1\n");
  kv.apply_override("a=5");
  REQUIRE(kv.get("a") == "5");
  kv.apply_override("b = 7");
  REQUIRE(kv.get("b") == "7");
  REQUIRE_THROWS_AS(kv.apply_override("missing-equals"), eot::ConfigError);
  REQUIRE_THROWS_AS(kv.apply_override("=5"), eot::ConfigError);
}

TEST_CASE("config files load from disk", "[config]") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "eot_config_test.cfg";
  {
    std::ofstream out(path);
    out << "epochs=3\nvariant=b2\n";
  }
  KvConfig kv = KvConfig::parse_file(path.string());
  REQUIRE(kv.get("epochs") == "3");
  fs::remove(path);
  REQUIRE_THROWS_AS(KvConfig::parse_file(path.string()), eot::IoError);
}

TEST_CASE("train config defaults follow the documented schema", "[config]") {
  TrainConfig cfg;
  REQUIRE(cfg.variant == "full");
  REQUIRE(cfg.epochs == 30);
  REQUIRE(cfg.batch_size == 128);
  REQUIRE(cfg.lr == 0.01);
  REQUIRE(cfg.momentum == 0.9);
  REQUIRE(cfg.weight_decay == 0.0001);
  REQUIRE(cfg.scale_mode == eot::ScaleMode::kSingle);
  REQUIRE(cfg.seed == 1);
  REQUIRE(cfg.loss == eot::Loss::kL2);
  REQUIRE(cfg.backbone_depth == 18);
  REQUIRE(cfg.backbone_pretrained.empty());
  REQUIRE(cfg.codewords == 8);
  REQUIRE(cfg.features == 64);
  REQUIRE(cfg.gat_heads == 4);
  REQUIRE(cfg.gat_merge == eot::GatMerge::kAverage);
  REQUIRE(cfg.rounds == 2);
  REQUIRE(cfg.classifier_hidden == 512);
  REQUIRE(cfg.eot_grad == false);
  REQUIRE(cfg.data_layout == eot::DatasetLayout::kGeneric);
  REQUIRE(cfg.data_strict == true);
  REQUIRE(cfg.flip_prob == 0.5);
  REQUIRE(cfg.jitter_brightness == 0.4);
  REQUIRE(cfg.jitter_contrast == 0.4);
  REQUIRE(cfg.jitter_saturation == 0.4);
}

TEST_CASE("train config round-trips through key-value form", "[config]") {
  TrainConfig cfg;
  cfg.variant = "b3";
  cfg.epochs = 7;
  cfg.lr = 0.125;
  cfg.scale_mode = eot::ScaleMode::kMulti;
  cfg.loss = eot::Loss::kCrossEntropy;
  cfg.gat_merge = eot::GatMerge::kConcatProject;
  cfg.data_root = "/data/x";
  cfg.data_layout = eot::DatasetLayout::kDtd;
  cfg.eot_grad = true;

  TrainConfig back = TrainConfig::from_kv(cfg.to_kv());
  REQUIRE(back.to_kv().serialize() == cfg.to_kv().serialize());
  REQUIRE(back.variant == "b3");
  REQUIRE(back.epochs == 7);
  REQUIRE(back.lr == 0.125);
  REQUIRE(back.scale_mode == eot::ScaleMode::kMulti);
  REQUIRE(back.loss == eot::Loss::kCrossEntropy);
  REQUIRE(back.gat_merge == eot::GatMerge::kConcatProject);
  REQUIRE(back.data_layout == eot::DatasetLayout::kDtd);
  REQUIRE(back.eot_grad == true);
}

TEST_CASE("fractional values survive serialization exactly", "[config]") {
  TrainConfig cfg;
  cfg.lr = 0.1;  // not representable in binary; shortest-round-trip must hold
  cfg.weight_decay = 5e-4;
  cfg.momentum = 0.899999999999;
  TrainConfig back = TrainConfig::from_kv(cfg.to_kv());
  REQUIRE(back.lr == cfg.lr);
  REQUIRE(back.weight_decay == cfg.weight_decay);
  REQUIRE(back.momentum == cfg.momentum);
  // serialize -> parse -> serialize is byte-stable
  REQUIRE(back.to_kv().serialize() == cfg.to_kv().serialize());
}

TEST_CASE("unknown keys are rejected", "[config]") {
  KvConfig kv = KvConfig::parse("variant=full\nlearning_rate=0.1\n");
  REQUIRE_THROWS_AS(TrainConfig::from_kv(kv), eot::ConfigError);
  REQUIRE_THROWS_WITH(TrainConfig::from_kv(kv),
                      Catch::Matchers::ContainsSubstring("learning_rate"));
}

TEST_CASE("badly typed values are rejected with the key named", "[config]") {
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("epochs=ten\n")), eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("lr=fast\n")), eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("eot_grad=yes\n")), eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("epochs=-2\n")), eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("scale_mode=triple\n")), eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("data.layout=imagenet\n")),
                    eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("loss=hinge\n")), eot::ConfigError);
  REQUIRE_THROWS_AS(TrainConfig::from_kv(KvConfig::parse("variant=b9\n")), eot::ConfigError);
  REQUIRE_THROWS_WITH(TrainConfig::from_kv(KvConfig::parse("epochs=ten\n")),
                      Catch::Matchers::ContainsSubstring("epochs"));
}

TEST_CASE("semantic validation catches out-of-range settings", "[config]") {
  TrainConfig cfg;
  cfg.epochs = 0;
  REQUIRE_THROWS_AS(cfg.validate(), eot::ConfigError);
  cfg = TrainConfig();
  cfg.lr = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), eot::ConfigError);
  cfg = TrainConfig();
  cfg.momentum = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), eot::ConfigError);
  cfg = TrainConfig();
  cfg.flip_prob = 1.5;
  REQUIRE_THROWS_AS(cfg.validate(), eot::ConfigError);
  cfg = TrainConfig();
  cfg.weight_decay = -1e-4;
  REQUIRE_THROWS_AS(cfg.validate(), eot::ConfigError);
}

TEST_CASE("train config maps onto the model configuration", "[config]") {
  TrainConfig cfg;
  cfg.variant = "b4";
  cfg.codewords = 12;
  cfg.features = 48;
  cfg.gat_heads = 6;
  cfg.rounds = 3;
  cfg.classifier_hidden = 100;
  cfg.eot_grad = true;
  eot::ModelConfig mc = cfg.model_config(11);
  REQUIRE(mc.variant == eot::Variant::kB4);
  REQUIRE(mc.classes == 11);
  REQUIRE(mc.codewords == 12);
  REQUIRE(mc.features == 48);
  REQUIRE(mc.heads == 6);
  REQUIRE(mc.rounds == 3);
  REQUIRE(mc.classifier_hidden == 100);
  REQUIRE(mc.eot_grad == true);
}

TEST_CASE("scale mode and layout names round-trip", "[config]") {
  REQUIRE(eot::parse_scale_mode("single") == eot::ScaleMode::kSingle);
  REQUIRE(eot::parse_scale_mode("multi") == eot::ScaleMode::kMulti);
  REQUIRE(eot::to_string(eot::ScaleMode::kMulti) == "multi");
  for (const char* name : {"generic", "gtos_mobile", "dtd", "minc2500"})
    REQUIRE(eot::to_string(eot::parse_layout(name)) == name);
}

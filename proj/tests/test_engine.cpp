#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "eot/engine.hpp"

using eot::DatasetIndex;
using eot::Parameter;
using eot::Rng;
using eot::Sgd;
using eot::Tensor;
using eot::TrainConfig;
using eot::TrainState;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const char* leaf) : path(fs::temp_directory_path() / leaf) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// The smallest trainable setup: plain texture-encoding variant, narrow
// embedding, two synthetic classes.
TrainConfig tiny_config(const std::string& data_root) {
  TrainConfig cfg;
  cfg.variant = "deep_ten";
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.lr = 0.01;
  cfg.codewords = 2;
  cfg.features = 8;
  cfg.classifier_hidden = 16;
  cfg.seed = 3;
  cfg.data_root = data_root;
  return cfg;
}

}  // namespace

TEST_CASE("sgd follows the momentum recursion exactly", "[engine]") {
  Parameter<float> p("w", eot::Shape{2});
  p.value[0] = 1.0f;
  p.value[1] = -2.0f;
  const double lr = 0.1, mu = 0.9, wd = 0.01;
  Sgd<float> sgd({&p}, lr, mu, wd);

  double v[2] = {0.0, 0.0};
  double x[2] = {1.0, -2.0};
  const double g1[2] = {0.5, -0.25}, g2[2] = {-1.0, 2.0};

  p.grad[0] = static_cast<float>(g1[0]);
  p.grad[1] = static_cast<float>(g1[1]);
  sgd.step();
  for (size_t j = 0; j < 2; ++j) {
    v[j] = mu * v[j] + (g1[j] + wd * x[j]);
    x[j] -= lr * v[j];
    REQUIRE(p.value[j] == Catch::Approx(x[j]).epsilon(1e-5));
  }

  p.grad[0] = static_cast<float>(g2[0]);
  p.grad[1] = static_cast<float>(g2[1]);
  sgd.step();
  for (size_t j = 0; j < 2; ++j) {
    v[j] = mu * v[j] + (g2[j] + wd * x[j]);
    x[j] -= lr * v[j];
    REQUIRE(p.value[j] == Catch::Approx(x[j]).epsilon(1e-5));
  }

  SECTION("zero momentum and decay reduce to plain gradient descent") {
    Parameter<float> q("q", eot::Shape{1});
    q.value[0] = 4.0f;
    q.grad[0] = 2.0f;
    Sgd<float> plain({&q}, 0.5, 0.0, 0.0);
    plain.step();
    REQUIRE(q.value[0] == Catch::Approx(3.0f));
    plain.step();
    REQUIRE(q.value[0] == Catch::Approx(2.0f));
  }
}

TEST_CASE("metrics rows and header are formatted stably", "[engine]") {
  REQUIRE(std::string(eot::kMetricsHeader) == "epoch,train_loss,train_acc,test_acc");
  REQUIRE(eot::format_metrics_row(3, 0.5, 0.25, 1.0) == "3,0.500000,0.2500,1.0000");
  REQUIRE(eot::format_metrics_row(12, 1.0 / 3.0, 2.0 / 3.0, 0.125) ==
          "12,0.333333,0.6667,0.1250");
}

TEST_CASE("evaluation reports per-class counts and restores the mode", "[engine]") {
  TempDir dir("eot_engine_eval");
  DatasetIndex idx = eot::generate_synthetic(2, 2, 17, dir.file("data"));
  TrainConfig cfg = tiny_config(dir.file("data"));

  eot::TerrainModel<float> model = eot::build_model(cfg, 2);
  model.set_training(true);
  eot::EvalReport report = eot::evaluate_model(model, idx, 3, true);
  REQUIRE(model.training());  // mode is restored afterwards

  REQUIRE(report.accuracy >= 0.0);
  REQUIRE(report.accuracy <= 1.0);
  REQUIRE(report.class_names == idx.class_names);
  REQUIRE(report.per_class_total == std::vector<size_t>{2, 2});
  const size_t correct = report.per_class_correct[0] + report.per_class_correct[1];
  REQUIRE(report.accuracy == Catch::Approx(correct / 4.0));

  const std::string text = report.format();
  REQUIRE(text.find("overall top-1:") != std::string::npos);
  REQUIRE(text.find("class_00") != std::string::npos);
  REQUIRE(text.find("class_01") != std::string::npos);

  eot::TerrainModel<float> wrong = eot::build_model(cfg, 3);
  REQUIRE_THROWS_AS(eot::evaluate_model(wrong, idx, 3, true), eot::ValidationError);
}

TEST_CASE("checkpoints round trip parameters, buffers, momentum, and state", "[engine]") {
  TempDir dir("eot_engine_ckpt");
  TrainConfig cfg = tiny_config(dir.file("unused"));
  const std::string config_text = cfg.to_kv().serialize();

  eot::TerrainModel<float> model = eot::build_model(cfg, 2);
  Sgd<float> sgd(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
  Rng rng(99);
  for (Parameter<float>* p : model.parameters()) rng.fill_uniform(p->grad, -0.1, 0.1);
  sgd.step();
  for (Parameter<float>* p : model.parameters()) rng.fill_uniform(p->grad, -0.1, 0.1);
  sgd.step();

  TrainState state;
  state.epoch = 3;
  state.best_test_acc = 0.5;
  state.best_epoch = 2;
  state.history = {eot::format_metrics_row(1, 1.0, 0.25, 0.25),
                   eot::format_metrics_row(2, 0.9, 0.5, 0.5),
                   eot::format_metrics_row(3, 0.8, 0.5, 0.25)};
  state.class_names = {"class_00", "class_01"};
  eot::save_checkpoint(dir.file("ckpt.bin"), model, sgd, state, config_text);

  eot::LoadedCheckpoint loaded = eot::load_checkpoint(dir.file("ckpt.bin"));
  REQUIRE(loaded.state.epoch == 3);
  REQUIRE(loaded.state.best_test_acc == Catch::Approx(0.5));
  REQUIRE(loaded.state.best_epoch == 2);
  REQUIRE(loaded.state.history == state.history);
  REQUIRE(loaded.state.class_names == state.class_names);
  REQUIRE(loaded.config.to_kv().serialize() == config_text);

  SECTION("restore copies every tensor into a differently seeded twin") {
    TrainConfig other = cfg;
    other.seed = 1234;
    eot::TerrainModel<float> twin = eot::build_model(other, 2);
    Sgd<float> twin_sgd(twin.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
    eot::restore_training_state(loaded, twin, &twin_sgd);

    auto original = model.parameters();
    auto restored = twin.parameters();
    REQUIRE(original.size() == restored.size());
    for (size_t i = 0; i < original.size(); ++i) {
      REQUIRE(restored[i]->name == original[i]->name);
      for (size_t j = 0; j < original[i]->value.size(); ++j)
        REQUIRE(restored[i]->value[j] == original[i]->value[j]);
    }
    auto buffers = model.buffers();
    auto twin_buffers = twin.buffers();
    for (size_t i = 0; i < buffers.size(); ++i)
      for (size_t j = 0; j < buffers[i].tensor->size(); ++j)
        REQUIRE((*twin_buffers[i].tensor)[j] == (*buffers[i].tensor)[j]);
    for (size_t i = 0; i < sgd.velocity().size(); ++i)
      for (size_t j = 0; j < sgd.velocity()[i].size(); ++j)
        REQUIRE(twin_sgd.velocity()[i][j] == sgd.velocity()[i][j]);
  }

  SECTION("a plain tensor container is not a checkpoint") {
    eot::TensorStore store;
    store.tensors.emplace_back("x", Tensor<float>({2}));
    store.save(dir.file("plain.bin"));
    REQUIRE_THROWS_AS(eot::load_checkpoint(dir.file("plain.bin")), eot::LoadError);
  }

  SECTION("a missing parameter tensor is rejected") {
    eot::LoadedCheckpoint tampered = eot::load_checkpoint(dir.file("ckpt.bin"));
    const std::string victim = model.parameters()[1]->name;
    auto& tensors = tampered.store.tensors;
    tensors.erase(std::find_if(tensors.begin(), tensors.end(),
                               [&](const auto& t) { return t.first == victim; }));
    eot::TerrainModel<float> twin = eot::build_model(cfg, 2);
    REQUIRE_THROWS_AS(eot::restore_training_state(tampered, twin, nullptr), eot::LoadError);
  }

  SECTION("a shape mismatch is rejected") {
    TrainConfig wide = cfg;
    wide.features = 16;
    eot::TerrainModel<float> twin = eot::build_model(wide, 2);
    REQUIRE_THROWS_AS(eot::restore_training_state(loaded, twin, nullptr), eot::ShapeError);
  }
}

TEST_CASE("training writes artifacts and resume matches the fresh run", "[engine]") {
  TempDir dir("eot_engine_train");
  eot::generate_synthetic(2, 2, 21, dir.file("data"));
  TrainConfig cfg = tiny_config(dir.file("data"));

  const std::string dir_a = dir.file("run_a");
  eot::TrainResult fresh = eot::train(cfg, dir_a, "", true);

  REQUIRE(fresh.state.epoch == 2);
  REQUIRE(fresh.state.history.size() == 2);
  REQUIRE(fresh.checkpoint_dir == dir_a);
  REQUIRE(fresh.final_eval.accuracy >= 0.0);
  REQUIRE(fresh.final_eval.accuracy <= 1.0);
  REQUIRE(fresh.state.best_test_acc >= 0.0);
  REQUIRE(fresh.state.best_epoch >= 1);

  REQUIRE(slurp(dir_a + "/config.cfg") == cfg.to_kv().serialize());
  REQUIRE(fs::is_regular_file(dir_a + "/checkpoint_last.bin"));
  REQUIRE(fs::is_regular_file(dir_a + "/checkpoint_best.bin"));
  const std::string metrics = slurp(dir_a + "/metrics.csv");
  REQUIRE(metrics == std::string(eot::kMetricsHeader) + "\n" + fresh.state.history[0] + "\n" +
                         fresh.state.history[1] + "\n");
  REQUIRE(slurp(dir_a + "/best").find("epoch=") == 0);

  // the last checkpoint reports the final epoch and replays the history
  eot::LoadedCheckpoint last = eot::load_checkpoint(dir_a + "/checkpoint_last.bin");
  REQUIRE(last.state.epoch == 2);
  REQUIRE(last.state.history == fresh.state.history);

  SECTION("resuming an interrupted run reproduces the metrics byte for byte") {
    // Simulate the interruption: run the identical recipe for one epoch. The
    // first epoch of a two-epoch run only sees cfg.epochs through the config
    // snapshot, so patching that snapshot yields the artifacts an interrupted
    // two-epoch run would have left behind.
    TrainConfig one = cfg;
    one.epochs = 1;
    const std::string dir_b = dir.file("run_b");
    eot::train(one, dir_b, "", true);

    eot::TensorStore store = eot::TensorStore::load(dir_b + "/checkpoint_last.bin");
    for (auto& [key, value] : store.meta)
      if (key == "config") value = cfg.to_kv().serialize();
    store.save(dir_b + "/interrupted.bin");

    eot::TrainResult resumed = eot::train(cfg, dir_b, dir_b + "/interrupted.bin", true);
    REQUIRE(resumed.state.epoch == 2);
    REQUIRE(slurp(dir_b + "/metrics.csv") == metrics);
    REQUIRE(slurp(dir_b + "/config.cfg") == slurp(dir_a + "/config.cfg"));
  }

  SECTION("resume rejects a config that differs from the checkpoint") {
    TrainConfig changed = cfg;
    changed.lr = 0.02;
    REQUIRE_THROWS_AS(eot::train(changed, dir.file("run_c"), dir_a + "/checkpoint_last.bin", true),
                      eot::ValidationError);
  }
}

TEST_CASE("a non-finite loss aborts naming the first bad gradient", "[engine]") {
  TempDir dir("eot_engine_nan");
  eot::generate_synthetic(2, 1, 23, dir.file("data"));
  TrainConfig cfg = tiny_config(dir.file("data"));
  cfg.epochs = 1;

  // Poison the output layer's bias and package it as a checkpoint. The NaN
  // must enter past the last ReLU (which maps NaN to 0 and would silence it):
  // from the logits it reaches the loss forward and every layer's gradient
  // backward, so the abort names the first parameter in registration order.
  eot::TerrainModel<float> model = eot::build_model(cfg, 2);
  Sgd<float> sgd(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
  model.parameters().back()->value[0] = std::numeric_limits<float>::quiet_NaN();
  eot::save_checkpoint(dir.file("poisoned.bin"), model, sgd, TrainState{},
                       cfg.to_kv().serialize());

  try {
    eot::train(cfg, dir.file("out"), dir.file("poisoned.bin"), true);
    FAIL("expected the non-finite loss to abort training");
  } catch (const eot::EngineError& e) {
    const std::string message = e.what();
    INFO(message);
    REQUIRE(message.find("non-finite") != std::string::npos);
    REQUIRE(message.find("backbone.") != std::string::npos);
  }
}

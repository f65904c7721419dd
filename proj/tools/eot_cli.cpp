// Command-line front end: train / eval / infer / ablate / gradcheck / synth.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eot/eot.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output = "out";
  long long seed = -1;  // <0 = keep config value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key=value lines)");
  cmd->add_option("--override", args.overrides, "config override KEY=VALUE (repeatable)");
  cmd->add_option("--output", args.output, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed");
}

// If EOT_TERRAIN_CACHE is set, relative dataset paths resolve under it.
std::string resolve_data_path(const std::string& p) {
  if (p.empty()) return p;
  const char* cache = std::getenv("EOT_TERRAIN_CACHE");
  if (cache && *cache && fs::path(p).is_relative()) return (fs::path(cache) / p).string();
  return p;
}

eot::TrainConfig make_config(const CommonArgs& args) {
  eot::KvConfig kv;
  if (!args.config_path.empty()) kv = eot::KvConfig::parse_file(args.config_path);
  for (const std::string& o : args.overrides) kv.apply_override(o);
  if (args.seed >= 0) kv.set("seed", std::to_string(args.seed));
  eot::TrainConfig cfg = eot::TrainConfig::from_kv(kv);
  cfg.data_root = resolve_data_path(cfg.data_root);
  cfg.data_test_root = resolve_data_path(cfg.data_test_root);
  return cfg;
}

// Rebuild a trained model from a checkpoint, for eval/infer.
eot::TerrainModel<float> model_from_checkpoint(const eot::LoadedCheckpoint& ckpt,
                                               size_t classes) {
  eot::TerrainModel<float> model(ckpt.config.model_config(classes));
  eot::restore_training_state(ckpt, model, nullptr);
  model.set_training(false);
  return model;
}

int run_train(const CommonArgs& args, const std::string& resume) {
  eot::TrainConfig cfg = make_config(args);
  eot::TrainResult result = eot::train(cfg, args.output, resume);
  std::cout << "trained " << cfg.variant << " for " << result.state.epoch
            << " epochs; best test accuracy " << eot::EvalReport::format_acc(
                   result.state.best_test_acc)
            << " (epoch " << result.state.best_epoch << ")\n";
  std::cout << "metrics: " << (fs::path(args.output) / "metrics.csv").string() << "\n";
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& checkpoint_path) {
  eot::LoadedCheckpoint ckpt = eot::load_checkpoint(checkpoint_path);
  eot::TrainConfig cfg = ckpt.config;
  if (!args.overrides.empty() || !args.config_path.empty()) {
    eot::KvConfig kv = cfg.to_kv();
    if (!args.config_path.empty()) kv = eot::KvConfig::parse_file(args.config_path);
    for (const std::string& o : args.overrides) kv.apply_override(o);
    cfg = eot::TrainConfig::from_kv(kv);
  }
  cfg.data_root = resolve_data_path(cfg.data_root);
  cfg.data_test_root = resolve_data_path(cfg.data_test_root);
  const std::string test_root =
      cfg.data_layout == eot::DatasetLayout::kGeneric && !cfg.data_test_root.empty()
          ? cfg.data_test_root
          : cfg.data_root;
  eot::DatasetIndex idx = eot::scan_dataset(test_root, cfg.data_layout, eot::Split::kTest);
  eot::TerrainModel<float> model = model_from_checkpoint(ckpt, idx.classes());
  eot::EvalReport report = eot::evaluate_model(model, idx, cfg.batch_size, cfg.data_strict);
  std::cout << report.format();
  return 0;
}

int run_infer(const std::string& checkpoint_path, const std::string& image_path) {
  eot::LoadedCheckpoint ckpt = eot::load_checkpoint(checkpoint_path);
  const size_t classes = ckpt.state.class_names.size();
  eot::require<eot::LoadError>(classes >= 2, "checkpoint has no class names; cannot infer");
  eot::TerrainModel<float> model = model_from_checkpoint(ckpt, classes);

  eot::Tensor<float> img =
      eot::center_crop(eot::resize_bilinear(eot::decode_image(image_path), eot::kResizeShort,
                                            eot::kResizeShort),
                       eot::kCropSize);
  eot::normalize_imagenet(img);
  eot::Tensor<float> batch({1, 3, eot::kCropSize, eot::kCropSize});
  std::copy(img.begin(), img.end(), batch.data());
  eot::ClassScores<float> scores = eot::make_scores(model.forward(batch));

  std::vector<size_t> order(classes);
  for (size_t i = 0; i < classes; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scores.probabilities[a] > scores.probabilities[b];
  });
  const size_t top = std::min<size_t>(5, classes);
  for (size_t i = 0; i < top; ++i)
    std::printf("%-24s %.4f\n", ckpt.state.class_names[order[i]].c_str(),
                static_cast<double>(scores.probabilities[order[i]]));
  return 0;
}

int run_ablate(const CommonArgs& args, const std::string& variants_csv) {
  std::vector<std::string> variants;
  std::stringstream ss(variants_csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) variants.push_back(item);
  eot::require<eot::ConfigError>(!variants.empty(), "ablate: empty variant list");
  for (const std::string& v : variants) eot::parse_variant(v);

  struct Row {
    std::string variant, train_loss, train_acc, test_acc;
  };
  std::vector<Row> rows;
  for (const std::string& v : variants) {
    CommonArgs sub = args;
    sub.overrides.push_back("variant=" + v);
    eot::TrainConfig cfg = make_config(sub);
    const std::string out_dir = (fs::path(args.output) / ("variant_" + v)).string();
    std::fprintf(stderr, "== variant %s ==\n", v.c_str());
    eot::TrainResult result = eot::train(cfg, out_dir);
    // last metrics row: epoch,train_loss,train_acc,test_acc
    std::stringstream row(result.state.history.back());
    Row r;
    r.variant = v;
    std::string epoch;
    std::getline(row, epoch, ',');
    std::getline(row, r.train_loss, ',');
    std::getline(row, r.train_acc, ',');
    std::getline(row, r.test_acc, ',');
    rows.push_back(r);
  }

  std::string csv = "variant,train_loss,train_acc,test_acc\n";
  std::string table = "variant    train_loss  train_acc  test_acc\n";
  for (const Row& r : rows) {
    csv += r.variant + "," + r.train_loss + "," + r.train_acc + "," + r.test_acc + "\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %10s %10s %9s\n", r.variant.c_str(),
                  r.train_loss.c_str(), r.train_acc.c_str(), r.test_acc.c_str());
    table += line;
  }
  fs::create_directories(args.output);
  std::ofstream(fs::path(args.output) / "ablation.csv") << csv;
  std::ofstream(fs::path(args.output) / "ablation.txt") << table;
  std::cout << table;
  return 0;
}

int run_gradcheck(double epsilon) {
  bool ok = true;
  for (const std::string& name : eot::check_component_names()) {
    const eot::GradCheckReport report =
        eot::gradient_check(eot::parse_component(name), epsilon);
    const bool pass = report.max_rel_error < 1e-4;
    ok = ok && pass;
    std::printf("%-12s max_rel_error %.3e over %zu values (worst: %s)  %s\n", name.c_str(),
                report.max_rel_error, report.checked, report.worst_target.c_str(),
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

int run_synth(const std::string& output, size_t classes, size_t per_class,
              unsigned long long seed) {
  const std::string root = resolve_data_path(output);
  eot::DatasetIndex idx = eot::generate_synthetic(classes, per_class, seed, root);
  std::cout << "wrote " << idx.size() << " images (" << idx.classes() << " classes) under "
            << root << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"extent-of-texture ground terrain recognition toolkit"};
  app.require_subcommand(1);
  std::string device = "cpu";
  app.add_option("--device", device, "compute device (only cpu is available)");

  CommonArgs train_args;
  std::string resume;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model variant");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  CommonArgs eval_args;
  std::string eval_checkpoint;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();

  std::string infer_checkpoint, infer_image;
  CLI::App* infer_cmd = app.add_subcommand("infer", "classify a single image");
  infer_cmd->add_option("--checkpoint", infer_checkpoint, "checkpoint file")->required();
  infer_cmd->add_option("--image", infer_image, "image to classify")->required();

  CommonArgs ablate_args;
  std::string variants = "deep_ten,b1,b2,b3,b4,full";
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and compare variants");
  add_common(ablate_cmd, ablate_args);
  ablate_cmd->add_option("--variants", variants, "comma-separated variant list");

  double gc_epsilon = 1e-3;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck_cmd->add_option("--epsilon", gc_epsilon, "finite-difference step");

  std::string synth_output = "synthetic";
  size_t synth_classes = 4, synth_per_class = 32;
  unsigned long long synth_seed = 7;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate the synthetic texture dataset");
  synth_cmd->add_option("--output", synth_output, "output directory");
  synth_cmd->add_option("--classes", synth_classes, "number of classes");
  synth_cmd->add_option("--per-class", synth_per_class, "images per class");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    eot::require<eot::ConfigError>(device == "cpu", "unknown device: ", device);
    if (train_cmd->parsed()) return run_train(train_args, resume);
    if (eval_cmd->parsed()) return run_eval(eval_args, eval_checkpoint);
    if (infer_cmd->parsed()) return run_infer(infer_checkpoint, infer_image);
    if (ablate_cmd->parsed()) return run_ablate(ablate_args, variants);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gc_epsilon);
    if (synth_cmd->parsed())
      return run_synth(synth_output, synth_classes, synth_per_class, synth_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

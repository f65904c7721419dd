#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "eot/config.hpp"
#include "eot/data.hpp"
#include "eot/model.hpp"
#include "eot/serialize.hpp"

namespace eot {

// SGD with momentum; weight decay is folded into the gradient before the
// momentum update.
template <typename T>
class Sgd {
 public:
  Sgd(std::vector<Parameter<T>*> params, double lr, double momentum, double weight_decay)
      : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    for (Parameter<T>* p : params_) {
      velocity_.emplace_back(p->value.shape());
      velocity_.back().zero();
    }
  }

  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      Tensor<T>& v = velocity_[i];
      const T lr = static_cast<T>(lr_), m = static_cast<T>(momentum_);
      const T wd = static_cast<T>(weight_decay_);
      for (size_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j] + wd * p.value[j];
        v[j] = m * v[j] + g;
        p.value[j] -= lr * v[j];
      }
    }
  }

  const std::vector<Parameter<T>*>& params() const { return params_; }
  std::vector<Tensor<T>>& velocity() { return velocity_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<T>> velocity_;
  double lr_, momentum_, weight_decay_;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<size_t> per_class_correct, per_class_total;
  std::vector<std::string> class_names;

  std::string format() const {
    std::string out = "overall top-1: " + format_acc(accuracy) + "\n";
    for (size_t c = 0; c < class_names.size(); ++c) {
      const double a = per_class_total[c]
                           ? static_cast<double>(per_class_correct[c]) / per_class_total[c]
                           : 0.0;
      char line[160];
      std::snprintf(line, sizeof(line), "  %-24s %6.4f  (%zu/%zu)\n", class_names[c].c_str(), a,
                    per_class_correct[c], per_class_total[c]);
      out += line;
    }
    return out;
  }

  static std::string format_acc(double a) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.4f", a);
    return buf;
  }
};

inline size_t argmax_row(const float* p, size_t n) {
  size_t best = 0;
  for (size_t j = 1; j < n; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

// Deterministic full pass over the index in order, eval-mode preprocessing.
inline EvalReport evaluate_model(TerrainModel<float>& model, const DatasetIndex& index,
                                 size_t batch_size, bool strict = true) {
  require<ValidationError>(model.config().classes == index.classes(),
                           "evaluate: model has ", model.config().classes,
                           " classes but dataset has ", index.classes());
  const bool was_training = model.training();
  model.set_training(false);
  EvalReport report;
  report.class_names = index.class_names;
  report.per_class_correct.assign(index.classes(), 0);
  report.per_class_total.assign(index.classes(), 0);
  const AugmentationPolicy policy = AugmentationPolicy::eval_policy();
  size_t correct = 0, total = 0;
  for (size_t start = 0; start < index.size(); start += batch_size) {
    std::vector<size_t> ids;
    for (size_t i = start; i < std::min(index.size(), start + batch_size); ++i) ids.push_back(i);
    std::vector<int> labels;
    Tensor<float> batch = load_batch(index, ids, policy, strict, labels);
    Tensor<float> logits = model.forward(batch);
    for (size_t n = 0; n < labels.size(); ++n) {
      const size_t pred = argmax_row(logits.data() + n * logits.dim(1), logits.dim(1));
      const size_t truth = static_cast<size_t>(labels[n]);
      report.per_class_total[truth]++;
      total++;
      if (pred == truth) {
        report.per_class_correct[truth]++;
        correct++;
      }
    }
  }
  report.accuracy = total ? static_cast<double>(correct) / total : 0.0;
  model.set_training(was_training);
  return report;
}

// One formatted metrics row; stored verbatim so checkpoint resume reproduces
// the CSV byte for byte.
inline std::string format_metrics_row(size_t epoch, double train_loss, double train_acc,
                                      double test_acc) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.4f,%.4f", epoch, train_loss, train_acc, test_acc);
  return buf;
}

inline constexpr const char* kMetricsHeader = "epoch,train_loss,train_acc,test_acc";

struct TrainState {
  size_t epoch = 0;  // epochs completed
  double best_test_acc = -1.0;
  size_t best_epoch = 0;
  std::vector<std::string> history;   // formatted metrics rows
  std::vector<std::string> class_names;
};

namespace detail {

inline constexpr std::uint64_t kInitStream = 0x1317;
inline constexpr std::uint64_t kShuffleStream = 0x5f17;
inline constexpr std::uint64_t kAugmentStream = 0xda7a;

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require<IoError>(out.good(), "cannot write ", path.string());
  out << text;
}

inline void write_metrics(const std::filesystem::path& path,
                          const std::vector<std::string>& rows) {
  std::string text = std::string(kMetricsHeader) + "\n";
  for (const std::string& r : rows) text += r + "\n";
  write_text_file(path, text);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, TerrainModel<float>& model,
                            Sgd<float>& sgd, const TrainState& state,
                            const std::string& config_text) {
  TensorStore store;
  store.meta.emplace_back("format", "eot-checkpoint");
  store.meta.emplace_back("epoch", std::to_string(state.epoch));
  store.meta.emplace_back("best_test_acc", detail::format_real(state.best_test_acc));
  store.meta.emplace_back("best_epoch", std::to_string(state.best_epoch));
  store.meta.emplace_back("config", config_text);
  std::string history;
  for (const std::string& row : state.history) {
    history += row;
    history += '\n';
  }
  store.meta.emplace_back("history", history);
  std::string names;
  for (const std::string& n : state.class_names) {
    names += n;
    names += '\n';
  }
  store.meta.emplace_back("class_names", names);
  for (Parameter<float>* p : model.parameters()) store.tensors.emplace_back(p->name, p->value);
  for (const NamedBuffer<float>& b : model.buffers())
    store.tensors.emplace_back(b.name, *b.tensor);
  const auto& params = sgd.params();
  for (size_t i = 0; i < params.size(); ++i)
    store.tensors.emplace_back("momentum." + params[i]->name, sgd.velocity()[i]);
  store.save(path);
}

struct LoadedCheckpoint {
  TensorStore store;
  TrainConfig config;
  TrainState state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  LoadedCheckpoint out;
  out.store = TensorStore::load(path);
  const std::string* format = out.store.find_meta("format");
  require<LoadError>(format && *format == "eot-checkpoint", path,
                     " is not a checkpoint container");
  const std::string* config_text = out.store.find_meta("config");
  require<LoadError>(config_text, path, ": missing config snapshot");
  out.config = TrainConfig::from_kv(KvConfig::parse(*config_text));
  const std::string* epoch = out.store.find_meta("epoch");
  require<LoadError>(epoch, path, ": missing epoch counter");
  out.state.epoch = static_cast<size_t>(detail::parse_int("epoch", *epoch));
  const std::string* best = out.store.find_meta("best_test_acc");
  require<LoadError>(best, path, ": missing best accuracy");
  out.state.best_test_acc = detail::parse_real("best_test_acc", *best);
  const std::string* best_epoch = out.store.find_meta("best_epoch");
  require<LoadError>(best_epoch, path, ": missing best epoch");
  out.state.best_epoch = static_cast<size_t>(detail::parse_int("best_epoch", *best_epoch));
  if (const std::string* history = out.store.find_meta("history")) {
    std::istringstream in(*history);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) out.state.history.push_back(line);
  }
  if (const std::string* names = out.store.find_meta("class_names")) {
    std::istringstream in(*names);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) out.state.class_names.push_back(line);
  }
  return out;
}

// Restores parameters, batch-norm buffers, and momentum into an already
// constructed model/optimizer pair.
inline void restore_training_state(const LoadedCheckpoint& ckpt, TerrainModel<float>& model,
                                   Sgd<float>* sgd) {
  for (Parameter<float>* p : model.parameters()) {
    const Tensor<float>* t = ckpt.store.find(p->name);
    require<LoadError>(t, "checkpoint missing parameter: ", p->name);
    check_shape(*t, p->value.shape(), p->name);
    p->value = *t;
  }
  for (NamedBuffer<float> b : model.buffers()) {
    const Tensor<float>* t = ckpt.store.find(b.name);
    require<LoadError>(t, "checkpoint missing buffer: ", b.name);
    check_shape(*t, b.tensor->shape(), b.name);
    *b.tensor = *t;
  }
  if (sgd) {
    const auto& params = sgd->params();
    for (size_t i = 0; i < params.size(); ++i) {
      const Tensor<float>* t = ckpt.store.find("momentum." + params[i]->name);
      require<LoadError>(t, "checkpoint missing momentum for ", params[i]->name);
      sgd->velocity()[i] = *t;
    }
  }
}

inline TerrainModel<float> build_model(const TrainConfig& cfg, size_t classes) {
  TerrainModel<float> model(cfg.model_config(classes));
  Rng rng(fold_seed(cfg.seed, detail::kInitStream));
  model.init(rng);
  if (!cfg.backbone_pretrained.empty())
    load_pretrained_into(cfg.backbone_pretrained, model.backbone());
  return model;
}

struct TrainResult {
  TrainState state;
  EvalReport final_eval;
  std::string checkpoint_dir;
};

// The full recipe: epoch loop over shuffled batches, SGD step per batch,
// test-split evaluation and checkpointing per epoch. Everything is derived
// from cfg.seed, so a fixed seed reproduces the metrics file exactly;
// resuming from the last checkpoint continues the same trajectory.
inline TrainResult train(const TrainConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path = "", bool quiet = false) {
  cfg.validate();
  require<ConfigError>(!cfg.data_root.empty(), "data.root is required for training");
  namespace fsys = std::filesystem;
  fsys::create_directories(out_dir);

  DatasetIndex train_idx = scan_dataset(cfg.data_root, cfg.data_layout, Split::kTrain);
  const std::string test_root =
      cfg.data_layout == DatasetLayout::kGeneric && !cfg.data_test_root.empty()
          ? cfg.data_test_root
          : cfg.data_root;
  DatasetIndex test_idx = scan_dataset(test_root, cfg.data_layout, Split::kTest);
  require<ValidationError>(train_idx.classes() == test_idx.classes(),
                           "train/test class counts differ: ", train_idx.classes(), " vs ",
                           test_idx.classes());

  TerrainModel<float> model = build_model(cfg, train_idx.classes());
  Sgd<float> sgd(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay);
  const std::string config_text = cfg.to_kv().serialize();

  TrainState state;
  state.class_names = train_idx.class_names;
  if (!resume_path.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(resume_path);
    require<ValidationError>(ckpt.config.to_kv().serialize() == config_text,
                             "resume config differs from checkpoint config");
    restore_training_state(ckpt, model, &sgd);
    const std::vector<std::string> names = state.class_names;
    state = ckpt.state;
    state.class_names = names;
  }

  detail::write_text_file(fsys::path(out_dir) / "config.cfg", config_text);
  model.set_training(true);

  for (size_t epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(train_idx.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(fold_seed(cfg.seed, detail::kShuffleStream, epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    AugmentationPolicy policy =
        AugmentationPolicy::train_policy(cfg, fold_seed(cfg.seed, detail::kAugmentStream, epoch));

    double loss_sum = 0.0;
    size_t seen = 0, correct = 0, step = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<size_t> ids(order.begin() + start,
                              order.begin() + std::min(order.size(), start + cfg.batch_size));
      std::vector<int> labels;
      Tensor<float> batch = load_batch(train_idx, ids, policy, cfg.data_strict, labels);
      Tensor<float> logits = model.forward(batch);
      ClassScores<float> scores = make_scores(std::move(logits));
      const double loss = compute_loss(scores, labels, cfg.loss);
      model.zero_grad();
      model.backward(loss_backward(scores, labels, cfg.loss));
      ++step;
      if (!std::isfinite(loss)) {
        std::string culprit = "(none)";
        for (Parameter<float>* p : model.parameters())
          if (!p->grad.all_finite()) {
            culprit = p->name;
            break;
          }
        throw EngineError(detail::cat("non-finite loss at epoch ", epoch, " step ", step,
                                      "; first non-finite gradient: ", culprit));
      }
      sgd.step();
      loss_sum += loss * static_cast<double>(labels.size());
      for (size_t n = 0; n < labels.size(); ++n)
        if (argmax_row(scores.logits.data() + n * scores.logits.dim(1), scores.logits.dim(1)) ==
            static_cast<size_t>(labels[n]))
          ++correct;
      seen += labels.size();
    }

    EvalReport eval = evaluate_model(model, test_idx, cfg.batch_size, cfg.data_strict);
    const double train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    const double train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
    state.history.push_back(format_metrics_row(epoch, train_loss, train_acc, eval.accuracy));
    state.epoch = epoch;
    if (eval.accuracy > state.best_test_acc) {
      state.best_test_acc = eval.accuracy;
      state.best_epoch = epoch;
      save_checkpoint((fsys::path(out_dir) / "checkpoint_best.bin").string(), model, sgd, state,
                      config_text);
      detail::write_text_file(fsys::path(out_dir) / "best",
                              "epoch=" + std::to_string(epoch) + "\ntest_acc=" +
                                  EvalReport::format_acc(eval.accuracy) + "\n");
    }
    save_checkpoint((fsys::path(out_dir) / "checkpoint_last.bin").string(), model, sgd, state,
                    config_text);
    detail::write_metrics(fsys::path(out_dir) / "metrics.csv", state.history);
    if (!quiet)
      std::fprintf(stderr, "epoch %zu/%zu  %s\n", epoch, cfg.epochs,
                   state.history.back().c_str());
  }

  TrainResult result;
  result.state = state;
  result.final_eval = evaluate_model(model, test_idx, cfg.batch_size, cfg.data_strict);
  result.checkpoint_dir = out_dir;
  return result;
}

}  // namespace eot

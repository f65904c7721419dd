#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const char* leaf) : path(fs::temp_directory_path() / leaf) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct CliRun {
  int exit_code = -1;
  std::string out, err;
};

// Runs the installed binary through the shell so stdout/stderr and the exit
// code can be asserted like a user would see them.
CliRun run_cli(const std::string& args, const fs::path& cwd, const std::string& env = "") {
  static int counter = 0;
  const fs::path out_file = cwd / (".stdout_" + std::to_string(counter));
  const fs::path err_file = cwd / (".stderr_" + std::to_string(counter));
  ++counter;
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + (env.empty() ? "" : " ") + "'" +
                          EOT_CLI_PATH + "' " + args + " > '" + out_file.string() + "' 2> '" +
                          err_file.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  run.out = slurp(out_file);
  run.err = slurp(err_file);
  return run;
}

void write_config(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

constexpr const char* kTinyConfig =
    "variant = deep_ten\n"
    "epochs = 1\n"
    "batch_size = 2\n"
    "lr = 0.01\n"
    "codewords = 2\n"
    "features = 8\n"
    "classifier_hidden = 16\n"
    "seed = 3\n"
    "data.root = data\n";

}  // namespace

TEST_CASE("help and usage errors use documented exit codes", "[cli]") {
  TempDir dir("eot_cli_usage");

  CliRun help = run_cli("--help", dir.path);
  REQUIRE(help.exit_code == 0);
  for (const char* sub : {"train", "eval", "infer", "ablate", "gradcheck", "synth"})
    REQUIRE(help.out.find(sub) != std::string::npos);

  REQUIRE(run_cli("", dir.path).exit_code == 2);           // a subcommand is required
  REQUIRE(run_cli("frobnicate", dir.path).exit_code == 2); // unknown subcommand
  REQUIRE(run_cli("train --bogus 1", dir.path).exit_code == 2);

  CliRun device = run_cli("--device gpu synth --classes 2 --per-class 1", dir.path);
  REQUIRE(device.exit_code == 1);
  REQUIRE(device.err.find("unknown device") != std::string::npos);

  CliRun no_data = run_cli("train --override variant=deep_ten", dir.path);
  REQUIRE(no_data.exit_code == 1);
  REQUIRE(no_data.err.find("data.root") != std::string::npos);
}

TEST_CASE("synth writes a labeled dataset where asked", "[cli]") {
  TempDir dir("eot_cli_synth");
  CliRun run = run_cli("synth --output data --classes 2 --per-class 2 --seed 5", dir.path);
  REQUIRE(run.exit_code == 0);
  REQUIRE(run.out.find("wrote 4 images (2 classes)") != std::string::npos);
  REQUIRE(fs::is_regular_file(dir.path / "data" / "manifest.tsv"));
  for (const char* rel : {"class_00/img_0000.png", "class_00/img_0001.png",
                          "class_01/img_0000.png", "class_01/img_0001.png"})
    REQUIRE(fs::is_regular_file(dir.path / "data" / rel));

  SECTION("relative outputs resolve under the cache directory") {
    TempDir cache("eot_cli_cache");
    CliRun cached = run_cli("synth --output cached_data --classes 2 --per-class 1 --seed 5",
                            dir.path, "EOT_TERRAIN_CACHE='" + cache.path.string() + "'");
    REQUIRE(cached.exit_code == 0);
    REQUIRE(fs::is_regular_file(cache.path / "cached_data" / "manifest.tsv"));
    REQUIRE_FALSE(fs::exists(dir.path / "cached_data"));
  }
}

TEST_CASE("gradcheck verifies every component", "[cli]") {
  TempDir dir("eot_cli_gradcheck");
  CliRun run = run_cli("gradcheck", dir.path);
  REQUIRE(run.exit_code == 0);
  for (const char* component : {"encoding", "gat", "inter_domain", "head", "full_stack"})
    REQUIRE(run.out.find(component) != std::string::npos);
  REQUIRE(run.out.find("max_rel_error") != std::string::npos);
  REQUIRE(run.out.find("FAIL") == std::string::npos);
}

TEST_CASE("train, eval, and infer chain end to end", "[cli]") {
  TempDir dir("eot_cli_train");
  // the dataset lives under the cache root; the run itself works elsewhere
  REQUIRE(run_cli("synth --output data --classes 2 --per-class 2 --seed 9", dir.path).exit_code ==
          0);
  fs::create_directories(dir.path / "work");
  write_config(dir.path / "work" / "run.cfg", kTinyConfig);
  const std::string env = "EOT_TERRAIN_CACHE='" + dir.path.string() + "'";

  CliRun train = run_cli("train --config run.cfg --output run", dir.path / "work", env);
  INFO(train.err);
  REQUIRE(train.exit_code == 0);
  REQUIRE(train.out.find("trained deep_ten for 1 epochs") != std::string::npos);
  REQUIRE(fs::is_regular_file(dir.path / "work" / "run" / "metrics.csv"));
  REQUIRE(fs::is_regular_file(dir.path / "work" / "run" / "checkpoint_last.bin"));
  REQUIRE(fs::is_regular_file(dir.path / "work" / "run" / "checkpoint_best.bin"));
  REQUIRE(fs::is_regular_file(dir.path / "work" / "run" / "config.cfg"));

  const std::string metrics = slurp(dir.path / "work" / "run" / "metrics.csv");
  REQUIRE(metrics.rfind("epoch,train_loss,train_acc,test_acc\n1,", 0) == 0);

  SECTION("eval prints the per-class report from the checkpoint") {
    CliRun eval = run_cli("eval --checkpoint run/checkpoint_last.bin", dir.path / "work", env);
    INFO(eval.err);
    REQUIRE(eval.exit_code == 0);
    REQUIRE(eval.out.find("overall top-1:") != std::string::npos);
    REQUIRE(eval.out.find("class_00") != std::string::npos);
    REQUIRE(eval.out.find("class_01") != std::string::npos);
  }

  SECTION("infer ranks the class probabilities for one image") {
    CliRun infer = run_cli(
        "infer --checkpoint run/checkpoint_last.bin --image ../data/class_00/img_0000.png",
        dir.path / "work", env);
    INFO(infer.err);
    REQUIRE(infer.exit_code == 0);
    REQUIRE(infer.out.find("class_00") != std::string::npos);
    REQUIRE(infer.out.find("class_01") != std::string::npos);
  }

  SECTION("a missing checkpoint is a runtime error") {
    REQUIRE(run_cli("eval --checkpoint nowhere.bin", dir.path / "work", env).exit_code == 1);
  }

  SECTION("resume continues from the saved epoch") {
    // same config but two epochs: epoch 1 is already in the checkpoint
    write_config(dir.path / "work" / "more.cfg",
                 std::string(kTinyConfig).replace(std::string(kTinyConfig).find("epochs = 1"),
                                                  10, "epochs = 2"));
    CliRun resumed = run_cli(
        "train --config more.cfg --output run2 --resume run/checkpoint_last.bin",
        dir.path / "work", env);
    // the embedded config says epochs=1, the new one says epochs=2
    REQUIRE(resumed.exit_code == 1);
    REQUIRE(resumed.err.find("resume config differs") != std::string::npos);
  }
}

TEST_CASE("ablate trains each variant and tabulates the comparison", "[cli]") {
  TempDir dir("eot_cli_ablate");
  REQUIRE(run_cli("synth --output data --classes 2 --per-class 2 --seed 9", dir.path).exit_code ==
          0);
  write_config(dir.path / "run.cfg", kTinyConfig);

  CliRun bad = run_cli("ablate --config run.cfg --variants deep_ten,bogus", dir.path);
  REQUIRE(bad.exit_code == 1);

  CliRun run = run_cli("ablate --config run.cfg --output cmp --variants deep_ten,b1", dir.path);
  INFO(run.err);
  REQUIRE(run.exit_code == 0);

  const std::string csv = slurp(dir.path / "cmp" / "ablation.csv");
  REQUIRE(csv.rfind("variant,train_loss,train_acc,test_acc\n", 0) == 0);
  REQUIRE(csv.find("\ndeep_ten,") != std::string::npos);
  REQUIRE(csv.find("\nb1,") != std::string::npos);
  REQUIRE(fs::is_regular_file(dir.path / "cmp" / "ablation.txt"));
  REQUIRE(fs::is_regular_file(dir.path / "cmp" / "variant_deep_ten" / "checkpoint_last.bin"));
  REQUIRE(fs::is_regular_file(dir.path / "cmp" / "variant_b1" / "checkpoint_last.bin"));
  REQUIRE(run.out.find("variant") != std::string::npos);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "semiprune/cli.hpp"

using namespace semiprune;
namespace fs = std::filesystem;

namespace {

struct Capture {
  std::stringstream out, err;
  std::streambuf* old_out;
  std::streambuf* old_err;
  Capture() : old_out(std::cout.rdbuf(out.rdbuf())), old_err(std::cerr.rdbuf(err.rdbuf())) {}
  ~Capture() {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
  }
};

int cli(std::initializer_list<std::string> args, std::string* out = nullptr,
        std::string* err = nullptr) {
  std::vector<std::string> argv{"semiprune"};
  argv.insert(argv.end(), args.begin(), args.end());
  Capture cap;
  const int code = run_cli(argv);
  if (out) *out = cap.out.str();
  if (err) *err = cap.err.str();
  return code;
}

const fs::path& work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "semiprune_cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

void write_config(const fs::path& path) {
  Config c;
  c.arch.heads = 2;
  c.arch.filters = 4;
  c.arch.chunks = 4;
  c.prune.target_rate = 0.8;
  c.prune.sigma = {1.0, 60.0, "exponential"};
  c.prune.gamma = {0.1, 6.0, "exponential"};
  c.train.epochs = 25;
  c.train.batch_size = 64;
  c.train.lr_init = 0.02;
  c.train.seed = 5;
  save_config(path.string(), c);
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  std::string err;
  REQUIRE(cli({"frobnicate"}, nullptr, &err) == 2);
  REQUIRE(cli({"train", "--bogus-flag"}, nullptr, &err) == 2);
  REQUIRE(err.rfind("error:", 0) == 0);
  REQUIRE(cli({}) == 2);
}

TEST_CASE("help exits cleanly") { REQUIRE(cli({"--help"}) == 0); }

TEST_CASE("full cli pipeline on a tiny dataset") {
  const fs::path dir = work_dir();
  const std::string data = (dir / "data").string();
  const std::string run = (dir / "run").string();

  REQUIRE(cli({"synth", "--classes", "4", "--joints", "6", "--frames", "12", "--samples", "9",
               "--noise", "0.05", "--seed", "3", "--out", data}) == 0);
  REQUIRE(fs::exists(fs::path(data) / "manifest.json"));

  write_config(dir / "config.json");
  std::string out;
  REQUIRE(cli({"train", "--config", (dir / "config.json").string(), "--data", data, "--out", run},
              &out) == 0);
  REQUIRE(out.find("Pruning rate | Accuracy (%) | SpeedUp | Observation") != std::string::npos);
  REQUIRE(fs::exists(fs::path(run) / "checkpoint.json"));
  REQUIRE(fs::exists(fs::path(run) / "report.json"));

  // history: one json object per epoch with the documented keys
  std::ifstream hist(fs::path(run) / "history.jsonl");
  std::string line;
  int lines = 0;
  double final_acc = -1.0;
  while (std::getline(hist, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "ce", "budget", "rank", "lr", "mask_mass", "accuracy"})
      REQUIRE(j.contains(key));
    final_acc = j["accuracy"].get<double>();
    ++lines;
  }
  REQUIRE(lines == 25);

  // eval prints the same accuracy as the last history entry
  const std::string ckpt = (fs::path(run) / "checkpoint.json").string();
  REQUIRE(cli({"eval", "--checkpoint", ckpt, "--data", data}, &out) == 0);
  const double eval_acc = std::stod(out.substr(out.find("accuracy") + 9));
  REQUIRE(eval_acc == Catch::Approx(final_acc).margin(1e-12));

  // compact verifies equivalence and writes the plan
  const std::string plan = (dir / "plan.json").string();
  REQUIRE(cli({"compact", "--checkpoint", ckpt, "--out", plan}, &out) == 0);
  REQUIRE(fs::exists(plan));
  REQUIRE(out.find("plan verified") != std::string::npos);

  // bench emits the documented JSON keys
  REQUIRE(cli({"bench", "--checkpoint", ckpt, "--plan", plan, "--repeats", "5"}, &out) == 0);
  auto bj = nlohmann::json::parse(out);
  for (const char* key : {"dense_ms", "compact_ms", "speedup", "flops_dense", "flops_compact"})
    REQUIRE(bj.contains(key));

  // mask images
  const std::string imgdir = (dir / "imgs").string();
  REQUIRE(cli({"maskimg", "--checkpoint", ckpt, "--out", imgdir, "--blocks"}) == 0);
  for (const char* name : {"attention.pgm", "conv.pgm", "dense.pgm"})
    REQUIRE(fs::exists(fs::path(imgdir) / name));
  std::ifstream pgm(fs::path(imgdir) / "attention.pgm");
  std::string magic;
  pgm >> magic;
  REQUIRE(magic == "P2");
  int w = 0, h = 0;
  pgm >> w >> h;
  REQUIRE(w == 6 * 2);
  REQUIRE(h == 6);

  // resume continues from the checkpoint
  const std::string run2 = (dir / "run2").string();
  REQUIRE(cli({"train", "--resume", ckpt, "--data", data, "--out", run2, "--epochs", "30"}) == 0);
  std::ifstream hist2(fs::path(run2) / "history.jsonl");
  lines = 0;
  while (std::getline(hist2, line)) ++lines;
  REQUIRE(lines == 5);
}

TEST_CASE("gradcheck subcommand passes on a fixed seed") {
  std::string out;
  REQUIRE(cli({"gradcheck", "--seed", "17"}, &out) == 0);
  REQUIRE(out.find("gradcheck passed") != std::string::npos);
}

TEST_CASE("runtime failures exit with code 1 and a diagnostic prefix") {
  std::string err;
  REQUIRE(cli({"eval", "--checkpoint", "/no/such/checkpoint.json", "--data", "/no/such/dir"},
              nullptr, &err) == 1);
  REQUIRE(err.rfind("error:", 0) == 0);
  REQUIRE(err.find('\n') == err.size() - 1);  // single diagnostic line

  const fs::path dir = work_dir();
  std::ofstream bad(dir / "bad_config.json");
  bad << "{\"arch\": {}}";
  bad.close();
  REQUIRE(cli({"train", "--config", (dir / "bad_config.json").string(), "--data", "/nope",
               "--out", (dir / "x").string()},
              nullptr, &err) == 1);
  REQUIRE(err.rfind("error:", 0) == 0);
}

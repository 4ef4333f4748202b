#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "semiprune/checkpoint.hpp"
#include "semiprune/config.hpp"
#include "semiprune/data.hpp"

using namespace semiprune;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("semiprune_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}
}  // namespace

TEST_CASE("load_sequence reads a small constant file") {
  auto dir = temp_dir("seq");
  spit(dir / "a.csv",
       "frame,joint,x,y,z\n"
       "0,0,1.5,2,3\n0,1,4,5,6\n1,0,1.5,2,3\n1,1,4,5,6\n");
  SkeletonSequence s = load_sequence((dir / "a.csv").string());
  REQUIRE(s.frame_count == 2);
  REQUIRE(s.joint_count == 2);
  REQUIRE(s.at(0, 0, 0) == 1.5);
  REQUIRE(s.at(1, 1, 2) == 6.0);
}

TEST_CASE("load_sequence reports the offending line") {
  auto dir = temp_dir("seqerr");
  spit(dir / "nan.csv", "frame,joint,x,y,z\n0,0,1,2,3\n0,1,nan,5,6\n");
  try {
    load_sequence((dir / "nan.csv").string());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(e.line_number == 3);
    REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
  }

  spit(dir / "short.csv", "frame,joint,x,y,z\n0,0,1,2\n");
  REQUIRE_THROWS_AS(load_sequence((dir / "short.csv").string()), DataError);

  spit(dir / "missing.csv", "frame,joint,x,y,z\n0,0,1,2,3\n1,0,1,2,3\n1,1,1,2,3\n");
  REQUIRE_THROWS_AS(load_sequence((dir / "missing.csv").string()), DataError);

  spit(dir / "header.csv", "frame;joint;x;y;z\n");
  REQUIRE_THROWS_AS(load_sequence((dir / "header.csv").string()), DataError);
}

TEST_CASE("sequence files round-trip byte identically") {
  auto dir = temp_dir("roundtrip");
  synth_dataset(2, 3, 5, 3, 0.05, 42, dir.string());
  const fs::path sample = dir / "seq_00_000.csv";
  SkeletonSequence s = load_sequence(sample.string());
  save_sequence((dir / "copy.csv").string(), s);
  REQUIRE(slurp(dir / "copy.csv") == slurp(sample));
}

TEST_CASE("synth dataset is deterministic and noiseless classes collapse") {
  auto d1 = temp_dir("synth1");
  auto d2 = temp_dir("synth2");
  synth_dataset(3, 4, 6, 4, 0.1, 7, d1.string());
  synth_dataset(3, 4, 6, 4, 0.1, 7, d2.string());
  for (const auto& entry : fs::directory_iterator(d1)) {
    const auto name = entry.path().filename();
    REQUIRE(slurp(entry.path()) == slurp(d2 / name));
  }

  auto d3 = temp_dir("synth0");
  synth_dataset(2, 3, 5, 3, 0.0, 9, d3.string());
  REQUIRE(slurp(d3 / "seq_01_000.csv") == slurp(d3 / "seq_01_002.csv"));
}

TEST_CASE("synth dataset balances the split and loads as a dataset") {
  auto dir = temp_dir("synthload");
  DatasetManifest m = synth_dataset(3, 5, 8, 6, 0.02, 11, dir.string());
  int train = 0, test = 0;
  for (const auto& e : m.entries) (e.split == "train" ? train : test)++;
  REQUIRE(train == 12);
  REQUIRE(test == 6);

  Dataset ds = load_dataset((dir / "manifest.json").string(), 4);
  REQUIRE(ds.train_graphs.size() == 12);
  REQUIRE(ds.test_graphs.size() == 6);
  REQUIRE(ds.train_graphs[0].signal.rows == 12);
  REQUIRE(ds.train_graphs[0].signal.cols == 5);
  REQUIRE(ds.adjacency(0, 1) == 1.0);  // chain bone
}

TEST_CASE("manifest validation") {
  auto dir = temp_dir("manifest");
  DatasetManifest m;
  m.name = "t";
  m.n_joints = 2;
  m.classes = {"a"};
  m.entries.push_back({"ghost.csv", "a", "train"});
  save_manifest((dir / "manifest.json").string(), m);
  REQUIRE_THROWS_AS(load_manifest((dir / "manifest.json").string()), DataError);

  m.entries[0].label = "zzz";
  REQUIRE_THROWS_AS(save_manifest((dir / "m2.json").string(), m), DataError);
}

TEST_CASE("config round-trip is a fixed point") {
  Config c;
  c.arch.heads = 4;
  c.prune.target_rate = 0.93;
  c.prune.beta = 0.0;
  c.train.epochs = 123;
  c.train.lr_init = 0.0123456789012345;
  const auto j1 = config_to_json(c);
  Config c2 = config_from_json(j1);
  const auto j2 = config_to_json(c2);
  REQUIRE(j1.dump() == j2.dump());
  Config c3 = config_from_json(j2);
  REQUIRE(config_to_json(c3).dump() == j2.dump());
}

TEST_CASE("config validation rejects bad values") {
  Config c;
  c.prune.target_rate = 1.0;
  REQUIRE_THROWS_AS(c.validate(), ParamError);
  c = Config{};
  c.prune.mode = "other";
  REQUIRE_THROWS_AS(c.validate(), ParamError);
  c = Config{};
  c.train.lr_init = 0.0;
  REQUIRE_THROWS_AS(c.validate(), ParamError);
  c = Config{};
  c.prune.threshold = 0.0;
  REQUIRE_THROWS_AS(c.validate(), ParamError);
}

TEST_CASE("checkpoint save and load are bit exact") {
  auto dir = temp_dir("ckpt");
  Rng rng(5);
  ModelInit init;
  init.sigma0 = 3.7;
  GcnModel model = make_model(2, 4, 6, 3, 2, Matrix::identity(4), init, rng);
  Checkpoint cp;
  cp.config = Config{};
  cp.epoch = 7;
  cp.global_step = 21;
  cp.rng_state = rng.state();
  cp.lr = {0.00812345678901234567, -1.25, 0.003};
  cp.model = model;
  cp.adam.resize(3);
  cp.adam[0].t = 4;
  cp.adam[0].m = Matrix(4, 8, 0.12345678901234567);
  cp.adam[0].v = Matrix(4, 8, 1e-17);

  const std::string path = (dir / "cp.json").string();
  save_checkpoint(path, cp);
  Checkpoint r = load_checkpoint(path);
  REQUIRE(r.epoch == 7);
  REQUIRE(r.global_step == 21);
  REQUIRE(r.rng_state == cp.rng_state);
  REQUIRE(r.lr.lr == cp.lr.lr);
  REQUIRE(r.lr.prev_loss == cp.lr.prev_loss);
  REQUIRE(max_abs_diff(r.model.attention.layer.latent, model.attention.layer.latent) == 0.0);
  REQUIRE(max_abs_diff(r.model.dense.layer.latent, model.dense.layer.latent) == 0.0);
  REQUIRE(r.model.conv.layer.sigma == 3.7);
  REQUIRE(r.adam[0].t == 4);
  REQUIRE(max_abs_diff(r.adam[0].m, cp.adam[0].m) == 0.0);
  REQUIRE(max_abs_diff(r.adam[0].v, cp.adam[0].v) == 0.0);
  REQUIRE(r.model.attention.layer.scheme.col_group == model.attention.layer.scheme.col_group);
}

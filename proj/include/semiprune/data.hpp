#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "semiprune/gcn.hpp"
#include "semiprune/rng.hpp"

namespace semiprune {

struct ManifestEntry {
  std::string file;
  std::string label;
  std::string split;  // "train" or "test"
};

struct DatasetManifest {
  std::string name;
  int n_joints = 0;
  std::vector<std::pair<int, int>> bones;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> entries;

  int class_index(const std::string& label) const {
    for (size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == label) return static_cast<int>(i);
    throw DataError("manifest: label '" + label + "' not in class list");
  }
};

namespace detail {

inline double parse_double(const std::string& s, long line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw DataError("malformed number '" + s + "'", line);
  return v;
}

inline long parse_int(const std::string& s, long line) {
  long v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw DataError("malformed integer '" + s + "'", line);
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

/// CSV schema: header `frame,joint,x,y,z`, zero-indexed frames and joints,
/// one row per (frame, joint), LF endings. Every frame must list every joint
/// exactly once and frames must form a contiguous 0..T-1 range.
inline SkeletonSequence load_sequence(const std::string& path, int expected_joints = -1) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sequence file '" + path + "'");
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw DataError("empty sequence file '" + path + "'");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "frame,joint,x,y,z")
    throw DataError("bad header '" + line + "', expected 'frame,joint,x,y,z'", lineno);

  std::map<std::pair<long, long>, std::array<double, 3>> cells;
  long max_frame = -1, max_joint = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = detail::split_csv(line);
    if (fields.size() != 5) throw DataError("expected 5 fields, got " + std::to_string(fields.size()), lineno);
    const long t = detail::parse_int(fields[0], lineno);
    const long j = detail::parse_int(fields[1], lineno);
    if (t < 0 || j < 0) throw DataError("negative frame or joint index", lineno);
    std::array<double, 3> p{};
    for (int d = 0; d < 3; ++d) {
      p[d] = detail::parse_double(fields[2 + d], lineno);
      if (!std::isfinite(p[d])) throw DataError("non-finite coordinate '" + fields[2 + d] + "'", lineno);
    }
    if (!cells.emplace(std::make_pair(t, j), p).second)
      throw DataError("duplicate (frame,joint) = (" + std::to_string(t) + "," + std::to_string(j) + ")", lineno);
    max_frame = std::max(max_frame, t);
    max_joint = std::max(max_joint, j);
  }
  if (max_frame < 0) throw DataError("sequence file '" + path + "' has no data rows");

  SkeletonSequence seq;
  seq.frame_count = static_cast<int>(max_frame + 1);
  seq.joint_count = static_cast<int>(max_joint + 1);
  if (expected_joints > 0 && seq.joint_count != expected_joints)
    throw DataError("sequence '" + path + "' has " + std::to_string(seq.joint_count) +
                    " joints, manifest says " + std::to_string(expected_joints));
  seq.coords.resize(static_cast<size_t>(seq.frame_count) * seq.joint_count * 3);
  for (int t = 0; t < seq.frame_count; ++t)
    for (int j = 0; j < seq.joint_count; ++j) {
      auto it = cells.find({t, j});
      if (it == cells.end())
        throw DataError("missing joint " + std::to_string(j) + " in frame " + std::to_string(t) +
                        " of '" + path + "'");
      for (int d = 0; d < 3; ++d) seq.at(t, j, d) = it->second[d];
    }
  return seq;
}

inline void save_sequence(const std::string& path, const SkeletonSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sequence file '" + path + "'");
  out << "frame,joint,x,y,z\n";
  for (int t = 0; t < seq.frame_count; ++t)
    for (int j = 0; j < seq.joint_count; ++j)
      out << t << ',' << j << ',' << detail::format_double(seq.at(t, j, 0)) << ','
          << detail::format_double(seq.at(t, j, 1)) << ',' << detail::format_double(seq.at(t, j, 2))
          << '\n';
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.n_joints = j.at("n_joints").get<int>();
    for (const auto& b : j.at("bones")) m.bones.emplace_back(b.at(0).get<int>(), b.at(1).get<int>());
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry ent;
      ent.file = e.at("file").get<std::string>();
      ent.label = e.at("label").get<std::string>();
      ent.split = e.at("split").get<std::string>();
      if (ent.split != "train" && ent.split != "test")
        throw DataError("manifest entry split '" + ent.split + "' must be train or test");
      m.class_index(ent.label);  // validates label
      m.entries.push_back(std::move(ent));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  for (const auto& e : m.entries)
    if (!std::filesystem::exists(dir / e.file))
      throw DataError("manifest references missing file '" + e.file + "'");
  return m;
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["n_joints"] = m.n_joints;
  j["bones"] = nlohmann::json::array();
  for (const auto& [a, b] : m.bones) j["bones"].push_back({a, b});
  j["classes"] = m.classes;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    m.class_index(e.label);
    j["entries"].push_back({{"file", e.file}, {"label", e.label}, {"split", e.split}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << j.dump(2) << '\n';
}

/// Bone list of the 15-joint skeleton used by the SBU-style datasets:
/// head-neck-torso spine, two three-segment arms off the neck, two
/// three-segment legs off the torso.
inline std::vector<std::pair<int, int>> sbu15_bones() {
  return {{0, 1}, {1, 2},  {1, 3},   {3, 4},   {4, 5},  {1, 6},   {6, 7},
          {7, 8}, {2, 9},  {9, 10},  {10, 11}, {2, 12}, {12, 13}, {13, 14}};
}

/// Dataset ready for training: chunked graphs split into train/test.
struct Dataset {
  DatasetManifest manifest;
  Matrix adjacency;
  std::vector<TrajectoryGraph> train_graphs, test_graphs;
  std::vector<int> train_labels, test_labels;
};

inline Dataset load_dataset(const std::string& manifest_path, int chunks) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  ds.adjacency = skeleton_adjacency(ds.manifest.n_joints, ds.manifest.bones);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  for (const auto& e : ds.manifest.entries) {
    SkeletonSequence seq = load_sequence((dir / e.file).string(), ds.manifest.n_joints);
    seq.label = ds.manifest.class_index(e.label);
    TrajectoryGraph g = temporal_chunking(seq, chunks, &ds.adjacency);
    if (e.split == "train") {
      ds.train_graphs.push_back(std::move(g));
      ds.train_labels.push_back(seq.label);
    } else {
      ds.test_graphs.push_back(std::move(g));
      ds.test_labels.push_back(seq.label);
    }
  }
  if (ds.train_graphs.empty()) throw DataError("dataset has no training entries");
  return ds;
}

/// Deterministic synthetic stand-in dataset: each class is a set of
/// class-specific sinusoidal joint trajectories plus Gaussian noise. Samples
/// rotate through a 2:1 train/test split within each class.
inline DatasetManifest synth_dataset(int classes, int joints, int frames, int samples_per_class,
                                     double noise, uint64_t seed, const std::string& out_dir) {
  if (classes < 2 || joints < 2) throw ParamError("synth_dataset: need >= 2 classes and >= 2 joints");
  std::filesystem::create_directories(out_dir);
  Rng rng(seed);

  // per (class, joint, dim) template parameters, drawn in a fixed order
  struct Tpl {
    double base, amp, freq, phase;
  };
  std::vector<Tpl> tpl(static_cast<size_t>(classes) * joints * 3);
  for (auto& t : tpl) {
    t.base = rng.uniform(-0.5, 0.5);
    t.amp = rng.uniform(0.4, 1.0);
    t.freq = rng.uniform(0.5, 2.0);
    t.phase = rng.uniform(0.0, 2.0 * M_PI);
  }

  DatasetManifest m;
  m.name = "synth";
  m.n_joints = joints;
  for (int j = 0; j + 1 < joints; ++j) m.bones.emplace_back(j, j + 1);
  for (int y = 0; y < classes; ++y) m.classes.push_back("class" + std::to_string(y));

  for (int y = 0; y < classes; ++y) {
    for (int s = 0; s < samples_per_class; ++s) {
      SkeletonSequence seq;
      seq.joint_count = joints;
      seq.frame_count = frames;
      seq.label = y;
      seq.coords.resize(static_cast<size_t>(frames) * joints * 3);
      for (int t = 0; t < frames; ++t)
        for (int j = 0; j < joints; ++j)
          for (int d = 0; d < 3; ++d) {
            const Tpl& p = tpl[(static_cast<size_t>(y) * joints + j) * 3 + d];
            const double v = p.base + p.amp * std::sin(2.0 * M_PI * p.freq * t / frames + p.phase);
            seq.at(t, j, d) = v + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
          }
      char name[64];
      std::snprintf(name, sizeof name, "seq_%02d_%03d.csv", y, s);
      save_sequence((std::filesystem::path(out_dir) / name).string(), seq);
      m.entries.push_back({name, m.classes[y], s % 3 == 2 ? "test" : "train"});
    }
  }
  save_manifest((std::filesystem::path(out_dir) / "manifest.json").string(), m);
  return m;
}

}  // namespace semiprune

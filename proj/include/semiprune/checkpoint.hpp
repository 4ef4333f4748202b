#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "semiprune/config.hpp"
#include "semiprune/trainer.hpp"

namespace semiprune {

/// Everything needed to continue a run bit-exactly: config snapshot, latent
/// tensors with their schemes, optimizer moments, the RNG stream state.
struct Checkpoint {
  int format_version = 1;
  Config config;
  int epoch = 0;
  long global_step = 0;
  std::string rng_state;
  LrState lr;
  GcnModel model;
  std::vector<AdamState> adam;
  double budget_start_mass = -1.0;
  long budget_engage_step = 0;
};

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != static_cast<size_t>(m.rows) * m.cols)
    throw DataError("checkpoint: tensor data length does not match its shape");
  return m;
}

inline nlohmann::ordered_json tensor_to_json(const ModelTensor& t) {
  nlohmann::ordered_json j;
  j["name"] = t.layer.name;
  j["prunable"] = t.prunable;
  j["sigma"] = t.layer.sigma;
  j["heads"] = t.layer.heads.str();
  j["scheme"] = {{"row_group", t.layer.scheme.row_group},
                 {"col_group", t.layer.scheme.col_group},
                 {"row_group_count", t.layer.scheme.row_group_count},
                 {"col_group_count", t.layer.scheme.col_group_count},
                 {"tie_within_block", t.layer.scheme.tie_within_block}};
  j["latent"] = matrix_to_json(t.layer.latent);
  return j;
}

inline ModelTensor tensor_from_json(const nlohmann::json& j) {
  ModelTensor t;
  t.layer.name = j.at("name").get<std::string>();
  t.prunable = j.at("prunable").get<bool>();
  t.layer.sigma = j.at("sigma").get<double>();
  t.layer.heads = HeadSet::parse(j.at("heads").get<std::string>());
  const auto& s = j.at("scheme");
  t.layer.scheme.row_group = s.at("row_group").get<std::vector<int>>();
  t.layer.scheme.col_group = s.at("col_group").get<std::vector<int>>();
  t.layer.scheme.row_group_count = s.at("row_group_count").get<int>();
  t.layer.scheme.col_group_count = s.at("col_group_count").get<int>();
  t.layer.scheme.tie_within_block = s.at("tie_within_block").get<bool>();
  t.layer.latent = matrix_from_json(j.at("latent"));
  t.layer.scheme.validate(t.layer.latent.rows, t.layer.latent.cols);
  return t;
}

inline nlohmann::ordered_json adam_to_json(const AdamState& a) {
  nlohmann::ordered_json j;
  j["t"] = a.t;
  if (a.t > 0) {
    j["m"] = matrix_to_json(a.m);
    j["v"] = matrix_to_json(a.v);
  }
  return j;
}

inline AdamState adam_from_json(const nlohmann::json& j) {
  AdamState a;
  a.t = j.at("t").get<long>();
  if (a.t > 0) {
    a.m = matrix_from_json(j.at("m"));
    a.v = matrix_from_json(j.at("v"));
  }
  return a;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  nlohmann::ordered_json j;
  j["format_version"] = cp.format_version;
  j["config"] = config_to_json(cp.config);
  j["epoch"] = cp.epoch;
  j["global_step"] = cp.global_step;
  j["rng_state"] = cp.rng_state;
  j["lr"] = {{"lr", cp.lr.lr}, {"prev_loss", cp.lr.prev_loss}, {"prev_speed", cp.lr.prev_speed}};
  j["budget_start_mass"] = cp.budget_start_mass;
  j["budget_engage_step"] = cp.budget_engage_step;
  j["arch"] = {{"heads", cp.model.heads},
               {"nodes", cp.model.nodes},
               {"sig_dim", cp.model.sig_dim},
               {"filters", cp.model.filters},
               {"classes", cp.model.classes}};
  j["tensors"] = nlohmann::json::array();
  for (const ModelTensor* t : cp.model.tensors()) j["tensors"].push_back(detail::tensor_to_json(*t));
  j["adam"] = nlohmann::json::array();
  for (const AdamState& a : cp.adam) j["adam"].push_back(detail::adam_to_json(a));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << j.dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': " + e.what());
  }
  Checkpoint cp;
  try {
    cp.format_version = j.at("format_version").get<int>();
    if (cp.format_version != 1)
      throw DataError("checkpoint format version " + std::to_string(cp.format_version) + " not supported");
    cp.config = config_from_json(j.at("config"));
    cp.epoch = j.at("epoch").get<int>();
    cp.global_step = j.at("global_step").get<long>();
    cp.rng_state = j.at("rng_state").get<std::string>();
    cp.lr.lr = j.at("lr").at("lr").get<double>();
    cp.lr.prev_loss = j.at("lr").at("prev_loss").get<double>();
    cp.lr.prev_speed = j.at("lr").at("prev_speed").get<double>();
    cp.budget_start_mass = j.at("budget_start_mass").get<double>();
    cp.budget_engage_step = j.at("budget_engage_step").get<long>();
    const auto& a = j.at("arch");
    cp.model.heads = a.at("heads").get<int>();
    cp.model.nodes = a.at("nodes").get<int>();
    cp.model.sig_dim = a.at("sig_dim").get<int>();
    cp.model.filters = a.at("filters").get<int>();
    cp.model.classes = a.at("classes").get<int>();
    const auto& ts = j.at("tensors");
    if (ts.size() != 3) throw DataError("checkpoint: expected 3 tensors");
    cp.model.attention = detail::tensor_from_json(ts[0]);
    cp.model.conv = detail::tensor_from_json(ts[1]);
    cp.model.dense = detail::tensor_from_json(ts[2]);
    for (const auto& aj : j.at("adam")) cp.adam.push_back(detail::adam_from_json(aj));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': " + e.what());
  }
  return cp;
}

/// Capture the full trainer state.
inline Checkpoint make_checkpoint(const Trainer& tr, const Config& config) {
  Checkpoint cp;
  cp.config = config;
  cp.epoch = tr.epoch();
  cp.global_step = tr.global_step();
  cp.rng_state = tr.rng_state();
  cp.lr = tr.lr_state();
  cp.model = tr.model();
  cp.adam = tr.adam_states();
  cp.budget_start_mass = tr.budget_start_mass();
  cp.budget_engage_step = tr.budget_engage_step();
  return cp;
}

/// Rebuild a trainer that continues exactly where the checkpoint stopped.
inline Trainer resume_trainer(const Checkpoint& cp, long train_size) {
  TrainConfig tc = TrainConfig::from_config(cp.config, cp.model.prunable_entries(), train_size);
  Trainer tr(cp.model, tc);
  tr.restore(cp.epoch, cp.global_step, cp.rng_state, cp.lr, cp.adam, cp.budget_start_mass,
             cp.budget_engage_step);
  return tr;
}

}  // namespace semiprune

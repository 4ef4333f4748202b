#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "semiprune/errors.hpp"
#include "semiprune/mask.hpp"
#include "semiprune/objectives.hpp"

namespace semiprune {

struct ScheduleConfig {
  double start = 1.0;
  double end = 1.0;
  std::string shape = "exponential";
};

/// Run configuration, mirrored one-to-one by the JSON config file.
struct Config {
  struct Arch {
    int heads = 8;
    int filters = 16;
    int chunks = 4;
  } arch;
  struct Prune {
    bool enabled = true;
    std::string mode = "semi";  // semi | structured | unstructured
    double target_rate = 0.9;
    double lambda = 1000.0;
    double beta = 0.1;
    ScheduleConfig sigma{1.0, 100.0, "exponential"};
    ScheduleConfig gamma{0.1, 10.0, "exponential"};
    double threshold = 0.5;
    double budget_window = 0.6;  // fraction of the anneal span for the budget descent
  } prune;
  struct Train {
    int epochs = 2700;
    int batch_size = 200;
    double lr_init = 0.01;
    long seed = 0;
    double init_scale = 0.5;
    int warmup = 0;  // epochs with lambda = beta = 0 before the budget engages
  } train;

  HeadSet head_set() const {
    if (prune.mode == "semi") return HeadSet::all();
    if (prune.mode == "structured") return HeadSet::block_only();
    if (prune.mode == "unstructured") return HeadSet::entry_only();
    throw ParamError("config: prune.mode '" + prune.mode + "' must be semi, structured or unstructured");
  }

  void validate() const {
    if (arch.heads < 1 || arch.filters < 1 || arch.chunks < 1)
      throw ParamError("config: arch values must be >= 1");
    if (prune.target_rate < 0.0 || prune.target_rate >= 1.0)
      throw ParamError("config: prune.target_rate must lie in [0,1)");
    if (prune.lambda < 0.0 || prune.beta < 0.0) throw ParamError("config: loss weights must be >= 0");
    if (prune.threshold <= 0.0 || prune.threshold >= 1.0)
      throw ParamError("config: prune.threshold must lie in (0,1)");
    if (prune.budget_window <= 0.0 || prune.budget_window > 1.0)
      throw ParamError("config: prune.budget_window must lie in (0,1]");
    if (train.epochs < 1 || train.batch_size < 1) throw ParamError("config: train values must be >= 1");
    if (train.warmup < 0 || train.warmup >= train.epochs)
      throw ParamError("config: train.warmup must lie in [0, epochs)");
    if (train.lr_init <= 0.0) throw ParamError("config: lr_init must be positive");
    head_set();
    AnnealSchedule::parse_shape(prune.sigma.shape);
    AnnealSchedule::parse_shape(prune.gamma.shape);
  }
};

namespace detail {
inline ScheduleConfig schedule_from_json(const nlohmann::json& j) {
  return {j.at("start").get<double>(), j.at("end").get<double>(), j.at("shape").get<std::string>()};
}
inline nlohmann::ordered_json schedule_to_json(const ScheduleConfig& s) {
  return {{"start", s.start}, {"end", s.end}, {"shape", s.shape}};
}
}  // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
  Config c;
  try {
    const auto& a = j.at("arch");
    c.arch.heads = a.at("heads").get<int>();
    c.arch.filters = a.at("filters").get<int>();
    c.arch.chunks = a.at("chunks").get<int>();
    const auto& p = j.at("prune");
    c.prune.enabled = p.value("enabled", true);
    c.prune.mode = p.value("mode", std::string("semi"));
    c.prune.target_rate = p.at("target_rate").get<double>();
    c.prune.lambda = p.at("lambda").get<double>();
    c.prune.beta = p.at("beta").get<double>();
    c.prune.sigma = detail::schedule_from_json(p.at("sigma"));
    c.prune.gamma = detail::schedule_from_json(p.at("gamma"));
    c.prune.threshold = p.at("threshold").get<double>();
    c.prune.budget_window = p.value("budget_window", 0.6);
    const auto& t = j.at("train");
    c.train.epochs = t.at("epochs").get<int>();
    c.train.batch_size = t.at("batch_size").get<int>();
    c.train.lr_init = t.at("lr_init").get<double>();
    c.train.seed = t.at("seed").get<long>();
    c.train.init_scale = t.value("init_scale", 0.5);
    c.train.warmup = t.value("warmup", 0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::ordered_json config_to_json(const Config& c) {
  nlohmann::ordered_json j;
  j["arch"] = {{"heads", c.arch.heads}, {"filters", c.arch.filters}, {"chunks", c.arch.chunks}};
  j["prune"] = {{"enabled", c.prune.enabled},
                {"mode", c.prune.mode},
                {"target_rate", c.prune.target_rate},
                {"lambda", c.prune.lambda},
                {"beta", c.prune.beta},
                {"sigma", detail::schedule_to_json(c.prune.sigma)},
                {"gamma", detail::schedule_to_json(c.prune.gamma)},
                {"threshold", c.prune.threshold},
                {"budget_window", c.prune.budget_window}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"lr_init", c.train.lr_init},
                {"seed", c.train.seed},
                {"init_scale", c.train.init_scale},
                {"warmup", c.train.warmup}};
  return j;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const std::string& path, const Config& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config '" + path + "'");
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace semiprune

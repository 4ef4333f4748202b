#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "semiprune/compaction.hpp"
#include "semiprune/objectives.hpp"
#include "semiprune/trainer.hpp"

namespace semiprune {

struct TensorReport {
  std::string name;
  long total = 0;
  long surviving = 0;
  int zero_rows = 0, zero_cols = 0;
  int zero_blocks = 0, total_blocks = 0;
  long loose_survivors = 0;
  double surrogate_rank_value = 0.0;
};

struct PruneReport {
  std::vector<TensorReport> tensors;
  double target_rate = 0.0;
  double achieved_rate = 0.0;
  double mask_mass = 0.0;     // sum of soft mask entries before thresholding
  double accuracy_soft = 0.0; // with soft masks
  double accuracy_hard = 0.0; // after hard thresholding
  double speedup = 0.0;       // 0 until a bench fills it in
  std::string observation;
};

/// Per-tensor structure stats of a finalized model plus the global rates.
/// Accuracies must be measured by the caller (they need the dataset).
inline PruneReport build_report(const GcnModel& original, const FinalizeResult& fin,
                                double target_rate, double gamma, const std::string& observation) {
  PruneReport rep;
  rep.target_rate = target_rate;
  rep.achieved_rate = achieved_rate(fin);
  rep.mask_mass = fin.soft_mass;
  rep.observation = observation;
  const auto ts = original.tensors();
  for (size_t i = 0; i < ts.size(); ++i) {
    if (!ts[i]->prunable) continue;
    const Matrix& mask = fin.masks[i];
    MaskStats st = analyze(mask, &ts[i]->layer.scheme);
    TensorReport tr;
    tr.name = ts[i]->layer.name;
    tr.total = static_cast<long>(mask.size());
    tr.surviving = st.survivors;
    tr.zero_rows = st.zero_rows;
    tr.zero_cols = st.zero_cols;
    tr.zero_blocks = st.zero_blocks;
    tr.total_blocks = st.total_blocks;
    tr.loose_survivors = st.loose_survivors;
    tr.surrogate_rank_value = surrogate_rank(mask, gamma).loss;
    rep.tensors.push_back(std::move(tr));
  }
  return rep;
}

inline nlohmann::ordered_json report_to_json(const PruneReport& r) {
  nlohmann::ordered_json j;
  j["target_rate"] = r.target_rate;
  j["achieved_rate"] = r.achieved_rate;
  j["mask_mass"] = r.mask_mass;
  j["accuracy_soft"] = r.accuracy_soft;
  j["accuracy_hard"] = r.accuracy_hard;
  j["speedup"] = r.speedup;
  j["observation"] = r.observation;
  j["tensors"] = nlohmann::json::array();
  for (const auto& t : r.tensors)
    j["tensors"].push_back({{"name", t.name},
                            {"total", t.total},
                            {"surviving", t.surviving},
                            {"zero_rows", t.zero_rows},
                            {"zero_cols", t.zero_cols},
                            {"zero_blocks", t.zero_blocks},
                            {"total_blocks", t.total_blocks},
                            {"loose_survivors", t.loose_survivors},
                            {"surrogate_rank", t.surrogate_rank_value}});
  return j;
}

/// Text table in the shape: Pruning rate | Accuracy (%) | SpeedUp | Observation.
inline std::string render_report_table(const std::vector<PruneReport>& rows) {
  std::string out = "Pruning rate | Accuracy (%) | SpeedUp | Observation\n";
  out += "-------------+--------------+---------+------------\n";
  char buf[256];
  for (const PruneReport& r : rows) {
    std::string speed = "none";
    if (r.speedup > 0.0) {
      std::snprintf(buf, sizeof buf, "%.0fx", r.speedup);
      speed = buf;
    }
    std::snprintf(buf, sizeof buf, "%11.0f%% | %12.2f | %7s | %s\n", r.achieved_rate * 100.0,
                  r.accuracy_hard * 100.0, speed.c_str(), r.observation.c_str());
    out += buf;
  }
  return out;
}

inline std::string epoch_record_to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["ce"] = r.ce;
  j["budget"] = r.budget;
  j["rank"] = r.rank;
  j["lr"] = r.lr;
  j["mask_mass"] = r.mask_mass;
  j["accuracy"] = r.accuracy;
  return j.dump();
}

}  // namespace semiprune

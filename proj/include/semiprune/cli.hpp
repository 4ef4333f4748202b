#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semiprune/checkpoint.hpp"
#include "semiprune/compaction.hpp"
#include "semiprune/config.hpp"
#include "semiprune/data.hpp"
#include "semiprune/gradsuite.hpp"
#include "semiprune/report.hpp"
#include "semiprune/trainer.hpp"

namespace semiprune {

namespace cli_detail {

inline std::string manifest_path_of(const std::string& data) {
  namespace fs = std::filesystem;
  if (fs::is_directory(data)) return (fs::path(data) / "manifest.json").string();
  return data;
}

inline GcnModel build_model(const Config& cfg, const Dataset& ds) {
  Rng rng(static_cast<uint64_t>(cfg.train.seed));
  ModelInit init;
  init.prune_attention = init.prune_conv = init.prune_dense = cfg.prune.enabled;
  init.heads_enabled = cfg.head_set();
  init.latent_scale = cfg.train.init_scale;
  init.sigma0 = cfg.prune.sigma.start;
  return make_model(cfg.arch.heads, ds.manifest.n_joints, 3 * cfg.arch.chunks, cfg.arch.filters,
                    static_cast<int>(ds.manifest.classes.size()), ds.adjacency, init, rng);
}

inline std::string observation_of(const Config& cfg) {
  if (!cfg.prune.enabled) return "Baseline GCN";
  std::string base = cfg.prune.mode == "semi"           ? "Semi-structured"
                     : cfg.prune.mode == "structured"   ? "Structured"
                                                        : "Unstructured";
  if (cfg.prune.beta > 0.0) base += " (+ rank optimization)";
  return base;
}

inline TrajectoryGraph random_graph(int sig_dim, int nodes, uint64_t seed) {
  Rng rng(seed);
  TrajectoryGraph g;
  g.nodes = nodes;
  g.signal = Matrix(sig_dim, nodes);
  for (double& v : g.signal.data) v = rng.uniform(-1.0, 1.0);
  g.adjacency = Matrix::identity(nodes);
  return g;
}

inline int cmd_synth(int classes, int joints, int frames, int samples, double noise, long seed,
                     const std::string& out) {
  synth_dataset(classes, joints, frames, samples, noise, static_cast<uint64_t>(seed), out);
  std::cout << "wrote synthetic dataset (" << classes << " classes, " << joints << " joints) to "
            << out << "\n";
  return 0;
}

inline int cmd_train(const std::string& config_path, const std::string& data,
                     const std::string& out, const std::string& resume_path, int epochs_override,
                     int log_every) {
  namespace fs = std::filesystem;
  Config cfg;
  Checkpoint cp;
  const bool resuming = !resume_path.empty();
  if (resuming) {
    cp = load_checkpoint(resume_path);
    cfg = cp.config;
  } else {
    if (config_path.empty()) throw UsageError("train: --config is required unless --resume is given");
    cfg = load_config(config_path);
  }
  if (epochs_override > 0) cfg.train.epochs = epochs_override;

  Dataset ds = load_dataset(manifest_path_of(data), cfg.arch.chunks);
  fs::create_directories(out);

  GcnModel model = resuming ? cp.model : build_model(cfg, ds);
  TrainConfig tc = TrainConfig::from_config(cfg, model.prunable_entries(),
                                            static_cast<long>(ds.train_graphs.size()));
  Trainer trainer(std::move(model), tc);
  if (resuming) trainer.restore(cp.epoch, cp.global_step, cp.rng_state, cp.lr, cp.adam);

  std::ofstream hist((fs::path(out) / "history.jsonl").string(), std::ios::binary);
  if (!hist) throw DataError("cannot write history in '" + out + "'");
  while (trainer.epoch() < tc.epochs) {
    EpochRecord rec = trainer.run_epoch(ds);
    hist << epoch_record_to_json_line(rec) << '\n';
    if (log_every > 0 && (rec.epoch % log_every == 0 || rec.epoch + 1 == tc.epochs))
      std::cerr << "epoch " << rec.epoch << " ce " << rec.ce << " mass " << rec.mask_mass
                << " acc " << rec.accuracy << "\n";
  }
  hist.flush();

  save_checkpoint((fs::path(out) / "checkpoint.json").string(), make_checkpoint(trainer, cfg));

  FinalizeResult fin = finalize_masks(trainer.model(), cfg.prune.threshold);
  const double gamma_end = cfg.prune.gamma.end;
  PruneReport rep = build_report(trainer.model(), fin, cfg.prune.target_rate, gamma_end,
                                 observation_of(cfg));
  rep.accuracy_soft = evaluate_accuracy(trainer.model(), ds.test_graphs, ds.test_labels);
  rep.accuracy_hard = evaluate_accuracy(fin.model, ds.test_graphs, ds.test_labels);

  std::ofstream rj((fs::path(out) / "report.json").string(), std::ios::binary);
  rj << report_to_json(rep).dump(2) << '\n';
  const std::string table = render_report_table({rep});
  std::ofstream rt((fs::path(out) / "report.txt").string(), std::ios::binary);
  rt << table;
  std::cout << table;
  return 0;
}

inline int cmd_eval(const std::string& checkpoint_path, const std::string& data,
                    const std::string& split) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  Dataset ds = load_dataset(manifest_path_of(data), cp.config.arch.chunks);
  const auto& graphs = split == "train" ? ds.train_graphs : ds.test_graphs;
  const auto& labels = split == "train" ? ds.train_labels : ds.test_labels;
  const double acc = evaluate_accuracy(cp.model, graphs, labels);
  std::cout << "accuracy " << acc << "\n";
  return 0;
}

inline int cmd_compact(const std::string& checkpoint_path, const std::string& out, double density,
                       int checks) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  FinalizeResult fin = finalize_masks(cp.model, cp.config.prune.threshold);
  CompactPlan plan = plan_compaction(fin.model, fin.masks, density);

  double worst = 0.0;
  for (int i = 0; i < checks; ++i) {
    TrajectoryGraph g = random_graph(cp.model.sig_dim, cp.model.nodes, 1000u + i);
    const Matrix dense = gcn_forward(fin.model, g).logits;
    const Matrix compact = compact_forward(plan, fin.model, g);
    worst = std::max(worst, max_abs_diff(dense, compact));
  }
  if (worst > 1e-9)
    throw StructureError("compact: equivalence check failed, max |delta logit| = " +
                         std::to_string(worst));

  std::ofstream pf(out, std::ios::binary);
  if (!pf) throw DataError("cannot write plan '" + out + "'");
  pf << plan_to_json(plan).dump() << '\n';
  std::cout << "plan verified on " << checks << " inputs (max |delta| " << worst << "), flops "
            << flops_dense(fin.model) << " -> " << flops_compact(plan) << "\n";
  return 0;
}

inline int cmd_bench(const std::string& checkpoint_path, const std::string& plan_path, int repeats,
                     const std::string& data, const std::string& out) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  FinalizeResult fin = finalize_masks(cp.model, cp.config.prune.threshold);
  std::ifstream pf(plan_path);
  if (!pf) throw DataError("cannot open plan '" + plan_path + "'");
  nlohmann::json pj;
  pf >> pj;
  CompactPlan plan = plan_from_json(pj);

  TrajectoryGraph g;
  if (!data.empty()) {
    Dataset ds = load_dataset(manifest_path_of(data), cp.config.arch.chunks);
    g = ds.test_graphs.empty() ? ds.train_graphs.front() : ds.test_graphs.front();
  } else {
    g = random_graph(cp.model.sig_dim, cp.model.nodes, 7);
  }

  BenchResult res = bench(plan, fin.model, g, repeats);
  if (res.resolution_warning)
    std::cerr << "warning: timer resolution too coarse, raised inner iterations to "
              << res.inner_iterations << "\n";
  const std::string js = bench_to_json(res).dump();
  std::cout << js << "\n";
  if (!out.empty()) {
    std::ofstream of(out, std::ios::binary);
    of << js << '\n';
  }
  return 0;
}

inline int cmd_gradcheck(long seed) {
  uint64_t s = seed >= 0 ? static_cast<uint64_t>(seed)
                         : static_cast<uint64_t>(
                               std::chrono::steady_clock::now().time_since_epoch().count());
  GradCheckReport rep = run_gradcheck_suite(s);
  for (const std::string& m : rep.messages) std::cerr << "FAIL " << m << "\n";
  std::cout << (rep.ok() ? "gradcheck passed: " : "gradcheck FAILED: ") << rep.checks - rep.failures
            << "/" << rep.checks << " checks (seed " << s << ")\n";
  return rep.ok() ? 0 : 1;
}

inline int cmd_maskimg(const std::string& checkpoint_path, const std::string& out, bool hard,
                       bool blocks) {
  namespace fs = std::filesystem;
  Checkpoint cp = load_checkpoint(checkpoint_path);
  fs::create_directories(out);
  int written = 0;
  for (const ModelTensor* t : cp.model.tensors()) {
    if (!t->prunable) continue;
    Matrix img = compose(t->layer).stack.psi3;
    if (hard)
      for (double& v : img.data) v = v >= cp.config.prune.threshold ? 1.0 : 0.0;
    const std::string path = (fs::path(out) / (t->layer.name + ".pgm")).string();
    export_mask_image(img, path, blocks ? &t->layer.scheme : nullptr);
    std::cout << "wrote " << path << "\n";
    ++written;
  }
  if (written == 0) std::cout << "checkpoint has no prunable tensors, nothing to export\n";
  return 0;
}

}  // namespace cli_detail

/// Command-line entry point; argv[0] is the program name. Returns the process
/// exit code: 0 success, 1 validation/runtime failure, 2 usage errors.
inline int run_cli(const std::vector<std::string>& argv) {
  CLI::App app{"semi-structured magnitude pruning of skeleton GCNs"};
  app.require_subcommand(1);

  // synth
  int s_classes = 8, s_joints = 15, s_frames = 24, s_samples = 18;
  double s_noise = 0.05;
  long s_seed = 1;
  std::string s_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic skeleton dataset");
  synth->add_option("--classes", s_classes, "number of classes")->check(CLI::Range(2, 1000));
  synth->add_option("--joints", s_joints, "joints per skeleton")->check(CLI::Range(2, 1000));
  synth->add_option("--frames", s_frames, "frames per sequence")->check(CLI::PositiveNumber);
  synth->add_option("--samples", s_samples, "samples per class")->check(CLI::PositiveNumber);
  synth->add_option("--noise", s_noise, "coordinate noise stddev");
  synth->add_option("--seed", s_seed, "generator seed");
  synth->add_option("--out", s_out, "output directory")->required();

  // train
  std::string t_config, t_data, t_out, t_resume;
  int t_epochs = -1, t_log_every = 0;
  auto* train = app.add_subcommand("train", "train (and prune) a model");
  train->add_option("--config", t_config, "JSON config path");
  train->add_option("--data", t_data, "dataset directory or manifest path")->required();
  train->add_option("--out", t_out, "output directory")->required();
  train->add_option("--resume", t_resume, "checkpoint to resume from");
  train->add_option("--epochs", t_epochs, "override total epochs");
  train->add_option("--log-every", t_log_every, "progress line every N epochs (stderr)");

  // eval
  std::string e_ckpt, e_data, e_split = "test";
  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a split");
  eval->add_option("--checkpoint", e_ckpt)->required();
  eval->add_option("--data", e_data)->required();
  eval->add_option("--split", e_split)->check(CLI::IsMember({"train", "test"}));

  // compact
  std::string c_ckpt, c_out;
  double c_density = 0.5;
  int c_checks = 20;
  auto* compact = app.add_subcommand("compact", "build and verify a compaction plan");
  compact->add_option("--checkpoint", c_ckpt)->required();
  compact->add_option("--out", c_out, "plan JSON path")->required();
  compact->add_option("--density", c_density, "core density threshold");
  compact->add_option("--checks", c_checks, "equivalence check inputs");

  // bench
  std::string b_ckpt, b_plan, b_data, b_out;
  int b_repeats = 20;
  auto* bench_cmd = app.add_subcommand("bench", "time masked dense vs compacted forward");
  bench_cmd->add_option("--checkpoint", b_ckpt)->required();
  bench_cmd->add_option("--plan", b_plan)->required();
  bench_cmd->add_option("--repeats", b_repeats)->check(CLI::Range(5, 10000));
  bench_cmd->add_option("--data", b_data, "use a dataset sample instead of a random signal");
  bench_cmd->add_option("--out", b_out, "also write the JSON result here");

  // gradcheck
  long g_seed = -1;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", g_seed, "suite seed (fresh random when omitted)");

  // maskimg
  std::string m_ckpt, m_out;
  bool m_hard = false, m_blocks = false;
  auto* maskimg = app.add_subcommand("maskimg", "export PGM images of the masks");
  maskimg->add_option("--checkpoint", m_ckpt)->required();
  maskimg->add_option("--out", m_out, "output directory")->required();
  maskimg->add_flag("--hard", m_hard, "threshold before export");
  maskimg->add_flag("--blocks", m_blocks, "overlay block boundaries at mid-gray");

  std::vector<const char*> cargv;
  cargv.reserve(argv.size());
  for (const std::string& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed())
      return cli_detail::cmd_synth(s_classes, s_joints, s_frames, s_samples, s_noise, s_seed, s_out);
    if (train->parsed())
      return cli_detail::cmd_train(t_config, t_data, t_out, t_resume, t_epochs, t_log_every);
    if (eval->parsed()) return cli_detail::cmd_eval(e_ckpt, e_data, e_split);
    if (compact->parsed()) return cli_detail::cmd_compact(c_ckpt, c_out, c_density, c_checks);
    if (bench_cmd->parsed()) return cli_detail::cmd_bench(b_ckpt, b_plan, b_repeats, b_data, b_out);
    if (gradcheck->parsed()) return cli_detail::cmd_gradcheck(g_seed);
    if (maskimg->parsed()) return cli_detail::cmd_maskimg(m_ckpt, m_out, m_hard, m_blocks);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace semiprune

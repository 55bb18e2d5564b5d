#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igdf/contrastive.hpp"
#include "igdf/envs.hpp"
#include "igdf/filter.hpp"
#include "igdf/mdp.hpp"
#include "igdf/offline_rl.hpp"

namespace igdf {

enum class Mode { igdf, naive_merge, target_only, dara_reward, reward_mod_variant };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

enum class EnvFamily { gridworld, gridworld_broken, pointmass };

std::string to_string(EnvFamily f);
EnvFamily family_from_string(const std::string& s);

struct DataConfig {
  int n_source = 50000;
  int n_target = 5000;
  double target_ratio = 1.0;  // Gamma: uniform subsample of the target set
  Quality quality = Quality::medium;
  int horizon = 40;
};

// Versioned, strict experiment configuration: unknown keys are errors.
struct ExperimentConfig {
  std::string name = "experiment";
  EnvFamily family = EnvFamily::gridworld;
  GridworldShiftSpec gridworld;
  PointMassShiftSpec pointmass;
  int broken_action = 3;
  DataConfig data;
  ContrastiveConfig contrastive;
  FilterConfig filter;
  IqlConfig iql;
  Mode mode = Mode::igdf;
  double sigma = 1.0;  // reward_mod_variant coefficient
  int n_seeds = 5;
  std::uint64_t seed = 0;
  int eval_episodes = 10;
  std::string out_dir = "out";

  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double return_mean = 0.0;
  double return_std = 0.0;
};

struct ExperimentSummary {
  std::vector<SeedResult> seeds;
  double mean = 0.0;     // across successful seeds
  double std_dev = 0.0;
};

// Copy of d_src with rewards shifted by sigma * phi(s,a) . psi(s') per
// transition; no filtering applied.
Dataset reward_mod_variant(const Encoder& enc, const Dataset& d_src, double sigma);

// One mode's full pipeline for one seed: generate data, train, evaluate.
SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                    std::vector<RlMetricsRow>* metrics = nullptr);

// All seeds plus summary.csv, per-seed metrics files, and manifest.json under
// cfg.out_dir. A failing seed is recorded and the others proceed.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

struct AblationRow {
  std::string value;
  std::uint64_t seed = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  bool ok = false;
};

// One run_experiment per swept value; parameter names use dotted paths into
// the config JSON (e.g. "filter.xi", "contrastive.d").
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::string& parameter,
                                      const std::vector<std::string>& values);

}  // namespace igdf

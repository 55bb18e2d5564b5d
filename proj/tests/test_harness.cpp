#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "igdf/harness.hpp"

using namespace igdf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(bool(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// Small enough to train in well under a second per seed.
ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.family = EnvFamily::gridworld;
  cfg.gridworld.width = 4;
  cfg.gridworld.height = 4;
  cfg.gridworld.goal_x = 3;
  cfg.gridworld.goal_y = 3;
  cfg.gridworld.slip_source = 0.3;
  cfg.gridworld.slip_target = 0.05;
  cfg.data.n_source = 600;
  cfg.data.n_target = 300;
  cfg.data.horizon = 20;
  cfg.contrastive.d = 4;
  cfg.contrastive.hidden = 16;
  cfg.contrastive.update_count = 30;
  cfg.contrastive.batch_size = 16;
  cfg.filter.xi = 0.5;
  cfg.filter.batch_size = 16;
  cfg.iql.hidden = 16;
  cfg.iql.td_steps = 25;
  cfg.iql.policy_steps = 10;
  cfg.iql.batch_size = 16;
  cfg.mode = Mode::naive_merge;
  cfg.n_seeds = 2;
  cfg.eval_episodes = 3;
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("mode and family names round-trip") {
  for (Mode m : {Mode::igdf, Mode::naive_merge, Mode::target_only, Mode::dara_reward,
                 Mode::reward_mod_variant})
    CHECK(mode_from_string(to_string(m)) == m);
  for (EnvFamily f : {EnvFamily::gridworld, EnvFamily::gridworld_broken, EnvFamily::pointmass})
    CHECK(family_from_string(to_string(f)) == f);
  CHECK_THROWS(mode_from_string("bogus"));
  CHECK_THROWS(family_from_string("bogus"));
}

TEST_CASE("a minimal config parses to the documented defaults") {
  const ExperimentConfig cfg = parse_experiment_config(R"({"version": 1})");
  CHECK(cfg.name == "experiment");
  CHECK(cfg.mode == Mode::igdf);
  CHECK(cfg.family == EnvFamily::gridworld);
  CHECK(cfg.n_seeds == 5);
  CHECK(cfg.data.n_source == 50000);
  CHECK(cfg.data.n_target == 5000);
  CHECK(cfg.data.target_ratio == 1.0);
  CHECK(cfg.filter.xi == 0.25);
  CHECK(cfg.filter.alpha == 1.0);
  CHECK(cfg.iql.tau == 0.7);
  CHECK(cfg.iql.batch_size == 256);
}

TEST_CASE("configs are strict: unknown keys, bad version, bad values all fail") {
  CHECK_THROWS(parse_experiment_config(R"({"version": 1, "typo_key": 3})"));
  CHECK_THROWS(parse_experiment_config(R"({"version": 1, "iql": {"taau": 0.7}})"));
  CHECK_THROWS(parse_experiment_config(R"({"version": 1, "env": {"familly": "gridworld"}})"));
  CHECK_THROWS(parse_experiment_config(R"({"version": 2})"));
  CHECK_THROWS(parse_experiment_config(R"({})"));
  CHECK_THROWS(parse_experiment_config("not json"));
  CHECK_THROWS(parse_experiment_config(R"({"version": 1, "mode": "bogus"})"));
  CHECK_THROWS(parse_experiment_config(R"({"version": 1, "data": {"target_ratio": 0.0}})"));
  CHECK_THROWS(parse_experiment_config(R"({"version": 1, "filter": {"xi": 1.5}})"));
}

TEST_CASE("serialized configs parse back to the same serialization") {
  ExperimentConfig cfg = tiny_config("roundtrip_out");
  cfg.mode = Mode::reward_mod_variant;
  cfg.sigma = 0.25;
  const std::string text = experiment_config_to_json(cfg);
  const ExperimentConfig back = parse_experiment_config(text);
  CHECK(experiment_config_to_json(back) == text);

  ExperimentConfig pm = cfg;
  pm.family = EnvFamily::pointmass;
  const std::string pm_text = experiment_config_to_json(pm);
  CHECK(experiment_config_to_json(parse_experiment_config(pm_text)) == pm_text);
}

TEST_CASE("reward modification shifts each reward by sigma times the logit") {
  Dataset d;
  d.kind = Kind::tabular;
  Rng rng(1);
  for (int i = 0; i < 40; ++i) {
    Transition t;
    t.s = rng.index(5);
    t.a = rng.index(2);
    t.s_next = rng.index(5);
    t.reward = rng.uniform(-1.0, 1.0);
    d.transitions.push_back(t);
  }
  ContrastiveConfig ccfg;
  ccfg.d = 4;
  ccfg.hidden = 8;
  ccfg.seed = 2;
  const Encoder enc = make_encoder(ccfg, d, 5, 2);

  const Dataset same = reward_mod_variant(enc, d, 0.0);
  for (std::size_t i = 0; i < d.transitions.size(); ++i)
    CHECK(same.transitions[i].reward == d.transitions[i].reward);

  const double sigma = 2.5;
  const Dataset shifted = reward_mod_variant(enc, d, sigma);
  const std::vector<double> logits = score_logits(enc, d.transitions);
  for (std::size_t i = 0; i < d.transitions.size(); ++i)
    CHECK(shifted.transitions[i].reward ==
          doctest::Approx(d.transitions[i].reward + sigma * logits[i]).epsilon(1e-12));
}

TEST_CASE("single seeds run end to end in every mode") {
  ExperimentConfig cfg = tiny_config("unused");
  for (Mode m : {Mode::igdf, Mode::naive_merge, Mode::target_only, Mode::dara_reward,
                 Mode::reward_mod_variant}) {
    cfg.mode = m;
    const SeedResult res = run_seed(cfg, 7);
    INFO("mode ", to_string(m), " error: ", res.error);
    CHECK(res.ok);
  }
}

TEST_CASE("experiment output has the expected structure and reruns identically") {
  const fs::path out = fs::temp_directory_path() / "igdf_test_experiment";
  fs::remove_all(out);
  ExperimentConfig cfg = tiny_config(out.string());
  const ExperimentSummary summary = run_experiment(cfg);

  REQUIRE(summary.seeds.size() == 2);
  for (const auto& s : summary.seeds) CHECK(s.ok);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "seed_0" / "metrics.csv"));
  CHECK(fs::exists(out / "seed_1" / "metrics.csv"));
  CHECK(!fs::exists(out / "seed_0" / "error.txt"));

  // Manifest is the exact serialized configuration.
  CHECK(slurp(out / "manifest.json") == experiment_config_to_json(cfg));

  // summary.csv: header + one row per seed + one aggregate row.
  const std::string sum_text = slurp(out / "summary.csv");
  CHECK(count_lines(sum_text) == 1 + 2 + 1);
  CHECK(sum_text.rfind("row,seed,return_mean,return_std,ok,error\n", 0) == 0);

  // metrics.csv: header + td rows + awr rows.
  const std::string metrics_text = slurp(out / "seed_0" / "metrics.csv");
  CHECK(count_lines(metrics_text) == 1 + cfg.iql.td_steps + cfg.iql.policy_steps);

  // A rerun into a fresh directory reproduces every artifact byte for byte.
  const fs::path out2 = fs::temp_directory_path() / "igdf_test_experiment_rerun";
  fs::remove_all(out2);
  ExperimentConfig cfg2 = cfg;
  cfg2.out_dir = out2.string();
  run_experiment(cfg2);
  CHECK(slurp(out2 / "summary.csv") == sum_text);
  CHECK(slurp(out2 / "seed_0" / "metrics.csv") == metrics_text);
  CHECK(slurp(out2 / "seed_1" / "metrics.csv") == slurp(out / "seed_1" / "metrics.csv"));
  fs::remove_all(out);
  fs::remove_all(out2);
}

TEST_CASE("a failing seed is recorded without stopping the others") {
  const fs::path out = fs::temp_directory_path() / "igdf_test_experiment_fail";
  fs::remove_all(out);
  ExperimentConfig cfg = tiny_config(out.string());
  // An out-of-range broken action makes data generation throw inside
  // run_seed for every seed.
  cfg.family = EnvFamily::gridworld_broken;
  cfg.broken_action = 9;
  cfg.n_seeds = 2;
  const ExperimentSummary summary = run_experiment(cfg);
  REQUIRE(summary.seeds.size() == 2);
  for (const auto& s : summary.seeds) {
    CHECK(!s.ok);
    CHECK(!s.error.empty());
  }
  CHECK(fs::exists(out / "seed_0" / "error.txt"));
  fs::remove_all(out);
}

TEST_CASE("ablations sweep a dotted parameter and write one row per seed") {
  const fs::path out = fs::temp_directory_path() / "igdf_test_ablation";
  fs::remove_all(out);
  ExperimentConfig cfg = tiny_config(out.string());
  cfg.n_seeds = 1;
  const std::vector<AblationRow> rows = run_ablation(cfg, "filter.xi", {"0.5", "1.0"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == "0.5");
  CHECK(rows[1].value == "1.0");
  for (const auto& r : rows) CHECK(r.ok);
  CHECK(fs::exists(out / "ablation_xi.csv"));
  CHECK(fs::exists(out / "xi_0.5" / "summary.csv"));
  CHECK(fs::exists(out / "xi_1.0" / "summary.csv"));
  CHECK_THROWS(run_ablation(cfg, "filter.bogus", {"1"}));
  CHECK_THROWS(run_ablation(cfg, "filter.xi", {}));
  fs::remove_all(out);
}

// Umbrella CLI: gen-data, train-encoder, oracle, filter-stats, train-rl,
// eval, run, ablate. Exit 0 on success; nonzero with a one-line error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "igdf/contrastive.hpp"
#include "igdf/envs.hpp"
#include "igdf/filter.hpp"
#include "igdf/harness.hpp"
#include "igdf/info_oracle.hpp"
#include "igdf/mdp.hpp"
#include "igdf/offline_rl.hpp"

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct EnvFlags {
  std::string env = "gridworld";
  std::string family = "slip";
  double slip_source = 0.1;
  double slip_target = 0.1;
  int width = 5;
  int height = 5;
  int broken_action = 3;
  double mass_source = 1.0;
  double mass_target = 1.0;
  double friction_source = 0.1;
  double friction_target = 0.1;
  int horizon = 40;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--env", env, "gridworld or pointmass")
        ->check(CLI::IsMember({"gridworld", "pointmass"}));
    cmd->add_option("--family", family, "shift family: slip, broken, or mass_shift");
    cmd->add_option("--slip-source", slip_source);
    cmd->add_option("--slip-target", slip_target);
    cmd->add_option("--width", width);
    cmd->add_option("--height", height);
    cmd->add_option("--broken-action", broken_action);
    cmd->add_option("--mass-source", mass_source);
    cmd->add_option("--mass-target", mass_target);
    cmd->add_option("--friction-source", friction_source);
    cmd->add_option("--friction-target", friction_target);
    cmd->add_option("--horizon", horizon);
  }

  igdf::GridworldShiftSpec gridworld_spec() const {
    igdf::GridworldShiftSpec g;
    g.width = width;
    g.height = height;
    g.goal_x = width - 1;
    g.goal_y = height - 1;
    g.slip_source = slip_source;
    g.slip_target = slip_target;
    return g;
  }

  igdf::PointMassShiftSpec pointmass_spec() const {
    igdf::PointMassShiftSpec p;
    p.mass_source = mass_source;
    p.mass_target = mass_target;
    p.friction_source = friction_source;
    p.friction_target = friction_target;
    p.horizon = horizon;
    return p;
  }
};

int cmd_gen_data(const EnvFlags& ef, const std::string& domain_s, const std::string& quality_s,
                 int n, std::uint64_t seed, const std::string& out) {
  const igdf::Domain domain = igdf::domain_from_string(domain_s);
  const igdf::Quality quality = igdf::quality_from_string(quality_s);
  igdf::Dataset d;
  if (ef.env == "gridworld") {
    const auto spec = ef.gridworld_spec();
    auto pair = ef.family == "broken" ? igdf::make_gridworld_broken_pair(spec, ef.broken_action)
                                      : igdf::make_gridworld_pair(spec);
    const igdf::TabularMDP& mdp = domain == igdf::Domain::source ? pair.first : pair.second;
    const igdf::TabularPolicy behavior = igdf::make_behavior_policy(mdp, quality, seed);
    d = igdf::sample_dataset(mdp, behavior, n, ef.horizon, seed, domain, "gridworld",
                             igdf::to_string(quality));
  } else {
    const auto spec = ef.pointmass_spec();
    auto pair = igdf::make_pointmass_pair(spec);
    const igdf::ContinuousEnv& env = domain == igdf::Domain::source ? pair.first : pair.second;
    const igdf::PdController pd = igdf::make_pd_controller(spec, quality);
    d = igdf::sample_continuous_dataset(env, pd, n, seed, domain, "pointmass",
                                        igdf::to_string(quality));
  }
  igdf::save_dataset_file(out, d);
  return 0;
}

int cmd_train_encoder(const std::string& src, const std::string& tar, int d, int k, int steps,
                      double lr, int batch, int hidden, std::uint64_t seed, const std::string& out,
                      const std::string& metrics_path) {
  const igdf::Dataset d_src = igdf::load_dataset_file(src);
  const igdf::Dataset d_tar = igdf::load_dataset_file(tar);
  igdf::ContrastiveConfig cfg;
  cfg.d = d;
  cfg.negatives_per_positive = k - 1;
  cfg.update_count = steps;
  cfg.learning_rate = lr;
  cfg.batch_size = batch;
  cfg.hidden = hidden;
  cfg.seed = seed;
  std::vector<igdf::ContrastiveMetricsRow> metrics;
  const igdf::Encoder enc = igdf::train_encoder(cfg, d_src, d_tar, &metrics);
  igdf::save_encoder_file(out, enc, seed);
  std::ofstream f(metrics_path.empty() ? out + ".metrics.csv" : metrics_path);
  if (!f) throw std::runtime_error("cannot open metrics file");
  f << "step,loss,i_nce_estimate\n";
  for (const auto& r : metrics) f << r.step << "," << fmt(r.loss) << "," << fmt(r.i_nce) << "\n";
  return 0;
}

int cmd_oracle(const std::string& src, const std::string& tar, const std::string& sampler_s,
               const std::string& out) {
  const igdf::Dataset d_src = igdf::load_dataset_file(src);
  const igdf::Dataset d_tar = igdf::load_dataset_file(tar);
  if (d_src.kind != igdf::Kind::tabular || d_tar.kind != igdf::Kind::tabular)
    throw std::runtime_error("oracle: exact reports need tabular datasets");
  int ns = 0, na = 0;
  for (const igdf::Dataset* d : {&d_src, &d_tar})
    for (const auto& t : d->transitions) {
      ns = std::max({ns, t.s + 1, t.s_next + 1});
      na = std::max(na, t.a + 1);
    }
  const igdf::EmpiricalMDP src_emp = igdf::estimate_empirical(d_src, ns, na);
  const igdf::EmpiricalMDP tar_emp = igdf::estimate_empirical(d_tar, ns, na);
  const igdf::Domain sampler_domain = igdf::domain_from_string(sampler_s);
  const igdf::Dataset& sampler = sampler_domain == igdf::Domain::source ? d_src : d_tar;
  const igdf::MiGapReport rep = igdf::mi_gap(src_emp, tar_emp, sampler, sampler_domain);

  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot open " + out);
  f << "sampler,i_tar,i_src,delta_i,kl_state,kl_dynamics,h_rho_src,h_rho_tar,n_violations\n";
  f << igdf::to_string(rep.data_domain) << "," << rep.i_tar.str() << "," << rep.i_src.str() << ","
    << rep.delta_i.str() << "," << rep.kl_state.str() << "," << rep.kl_dynamics.str() << ","
    << fmt(rep.h_rho_src) << "," << fmt(rep.h_rho_tar) << "," << rep.violations.size() << "\n";
  return 0;
}

int cmd_filter_stats(const std::string& ckpt, const std::string& src, double xi,
                     const std::string& out) {
  const igdf::Encoder enc = igdf::load_encoder_file(ckpt);
  const igdf::Dataset d_src = igdf::load_dataset_file(src);
  if (d_src.transitions.empty()) throw std::runtime_error("filter-stats: empty dataset");
  const igdf::FilteredBatch fb = igdf::rank_and_filter(enc, d_src.transitions, xi);
  const std::vector<double> scores = igdf::score_batch(enc, d_src.transitions);

  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot open " + out);
  f << "index,score,kept\n";
  for (std::size_t i = 0; i < scores.size(); ++i)
    f << i << "," << fmt(scores[i]) << "," << (fb.omega[i] ? 1 : 0) << "\n";
  f << "summary,threshold," << fmt(fb.threshold) << "\n";
  f << "summary,kept_count," << fb.kept.size() << "\n";
  // 20-bin histogram over the attainable score range [1/e, e].
  const double lo = std::exp(-1.0), hi = std::exp(1.0);
  std::vector<int> hist(20, 0);
  for (double s : scores) {
    int b = static_cast<int>((s - lo) / (hi - lo) * 20.0);
    hist[std::clamp(b, 0, 19)] += 1;
  }
  for (int b = 0; b < 20; ++b)
    f << "hist," << fmt(lo + (hi - lo) * b / 20.0) << "," << hist[b] << "\n";
  return 0;
}

int cmd_train_rl(const std::string& encoder, const std::string& src, const std::string& tar,
                 double xi, double alpha, double tau, double temp, double gamma, double mu,
                 int td_steps, int pi_steps, int batch, int hidden, bool interleaved,
                 std::uint64_t seed, const std::string& out) {
  igdf::Dataset d_src;
  if (!src.empty()) d_src = igdf::load_dataset_file(src);
  const igdf::Dataset d_tar = igdf::load_dataset_file(tar);

  igdf::IqlConfig cfg;
  cfg.tau = tau;
  cfg.awr_temperature = temp;
  cfg.discount = gamma;
  cfg.mu = mu;
  cfg.td_steps = td_steps;
  cfg.policy_steps = pi_steps;
  cfg.batch_size = batch;
  cfg.hidden = hidden;
  cfg.interleaved = interleaved;
  cfg.seed = seed;

  std::vector<igdf::RlMetricsRow> metrics;
  igdf::IqlNets nets;
  if (!encoder.empty() && !d_src.transitions.empty()) {
    const igdf::Encoder enc = igdf::load_encoder_file(encoder);
    igdf::FilterConfig fcfg;
    fcfg.xi = xi;
    fcfg.alpha = alpha;
    fcfg.batch_size = batch;
    nets = igdf::train_igdf_iql(cfg, fcfg, &enc, d_src, d_tar, &metrics);
  } else {
    nets = igdf::train_naive_iql(cfg, d_src, d_tar, &metrics);
  }

  std::filesystem::create_directories(out);
  igdf::save_iql_nets_file(out + "/", nets, seed);
  std::ofstream f(out + "/metrics.csv");
  if (!f) throw std::runtime_error("cannot open metrics.csv");
  f << "step,phase,v_loss,q_loss,pi_loss,eval_return_mean,eval_return_std\n";
  for (const auto& r : metrics) {
    f << r.step << "," << r.phase << "," << fmt(r.v_loss) << "," << fmt(r.q_loss) << ","
      << fmt(r.pi_loss) << ",";
    if (r.has_eval) f << fmt(r.eval_return_mean) << "," << fmt(r.eval_return_std);
    else f << ",";
    f << "\n";
  }
  return 0;
}

int cmd_eval(const EnvFlags& ef, const std::string& policy_dir, int episodes, std::uint64_t seed,
             bool greedy) {
  const igdf::IqlNets nets = igdf::load_iql_nets_file(policy_dir + "/");
  igdf::EvalResult res;
  if (ef.env == "gridworld") {
    const auto spec = ef.gridworld_spec();
    auto pair = ef.family == "broken" ? igdf::make_gridworld_broken_pair(spec, ef.broken_action)
                                      : igdf::make_gridworld_pair(spec);
    res = igdf::evaluate_policy(pair.second, nets, episodes, ef.horizon, seed, greedy);
  } else {
    auto pair = igdf::make_pointmass_pair(ef.pointmass_spec());
    res = igdf::evaluate_policy(pair.second, nets, episodes, seed);
  }
  std::cout << "return_mean,return_std\n" << fmt(res.mean) << "," << fmt(res.std_dev) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Info-gap data filtering for cross-domain offline RL"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Sample an offline dataset from a shift family");
  EnvFlags gen_env;
  gen_env.add_to(gen);
  std::string gen_domain = "source", gen_quality = "medium", gen_out;
  int gen_n = 10000;
  std::uint64_t gen_seed = 0;
  gen->add_option("--domain", gen_domain)->check(CLI::IsMember({"source", "target"}));
  gen->add_option("--quality", gen_quality);
  gen->add_option("--n", gen_n)->required();
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();

  // train-encoder
  auto* tenc = app.add_subcommand("train-encoder", "Train the contrastive score encoder");
  std::string te_src, te_tar, te_out, te_metrics;
  int te_d = 16, te_k = 128, te_steps = 7000, te_batch = 128, te_hidden = 256;
  double te_lr = 3e-4;
  std::uint64_t te_seed = 0;
  tenc->add_option("--src", te_src)->required();
  tenc->add_option("--tar", te_tar)->required();
  tenc->add_option("--d", te_d);
  tenc->add_option("--k", te_k, "candidate count: K-1 negatives per positive");
  tenc->add_option("--steps", te_steps);
  tenc->add_option("--lr", te_lr);
  tenc->add_option("--batch", te_batch);
  tenc->add_option("--hidden", te_hidden);
  tenc->add_option("--seed", te_seed);
  tenc->add_option("--out", te_out)->required();
  tenc->add_option("--metrics", te_metrics);

  // oracle
  auto* orc = app.add_subcommand("oracle", "Exact tabular information reports");
  std::string or_src, or_tar, or_sampler = "target", or_out;
  orc->add_option("--src", or_src)->required();
  orc->add_option("--tar", or_tar)->required();
  orc->add_option("--sampler", or_sampler)->check(CLI::IsMember({"source", "target"}));
  orc->add_option("--out", or_out)->required();

  // filter-stats
  auto* fst = app.add_subcommand("filter-stats", "Score and filter a source dataset");
  std::string fs_ckpt, fs_src, fs_out;
  double fs_xi = 0.25;
  fst->add_option("--ckpt", fs_ckpt)->required();
  fst->add_option("--src", fs_src)->required();
  fst->add_option("--xi", fs_xi);
  fst->add_option("--out", fs_out)->required();

  // train-rl
  auto* trl = app.add_subcommand("train-rl", "Train the filtered IQL agent");
  std::string rl_encoder, rl_src, rl_tar, rl_out;
  double rl_xi = 0.25, rl_alpha = 1.0, rl_tau = 0.7, rl_temp = 3.0, rl_gamma = 0.99, rl_mu = 0.005;
  int rl_td = 5000, rl_pi = 2000, rl_batch = 256, rl_hidden = 256;
  bool rl_interleaved = false;
  std::uint64_t rl_seed = 0;
  trl->add_option("--encoder", rl_encoder);
  trl->add_option("--src", rl_src);
  trl->add_option("--tar", rl_tar)->required();
  trl->add_option("--xi", rl_xi);
  trl->add_option("--alpha", rl_alpha);
  trl->add_option("--tau", rl_tau);
  trl->add_option("--temp", rl_temp);
  trl->add_option("--gamma", rl_gamma);
  trl->add_option("--mu", rl_mu);
  trl->add_option("--td-steps", rl_td);
  trl->add_option("--pi-steps", rl_pi);
  trl->add_option("--batch", rl_batch);
  trl->add_option("--hidden", rl_hidden);
  trl->add_flag("--interleaved", rl_interleaved);
  trl->add_option("--seed", rl_seed);
  trl->add_option("--out", rl_out)->required();

  // eval
  auto* evl = app.add_subcommand("eval", "Roll out a trained policy");
  EnvFlags eval_env;
  eval_env.add_to(evl);
  std::string ev_policy;
  int ev_episodes = 10;
  std::uint64_t ev_seed = 0;
  bool ev_greedy = false;
  evl->add_option("--policy-dir", ev_policy)->required();
  evl->add_option("--episodes", ev_episodes);
  evl->add_option("--seed", ev_seed);
  evl->add_flag("--greedy", ev_greedy);

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment from a config");
  std::string run_config;
  run->add_option("--config", run_config)->required();

  // ablate
  auto* abl = app.add_subcommand("ablate", "Sweep one config parameter");
  std::string ab_config, ab_param;
  std::vector<std::string> ab_values;
  abl->add_option("--config", ab_config)->required();
  abl->add_option("--param", ab_param, "dotted config path, e.g. filter.xi")->required();
  abl->add_option("--values", ab_values, "swept values")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_env, gen_domain, gen_quality, gen_n, gen_seed, gen_out);
    if (tenc->parsed())
      return cmd_train_encoder(te_src, te_tar, te_d, te_k, te_steps, te_lr, te_batch, te_hidden,
                               te_seed, te_out, te_metrics);
    if (orc->parsed()) return cmd_oracle(or_src, or_tar, or_sampler, or_out);
    if (fst->parsed()) return cmd_filter_stats(fs_ckpt, fs_src, fs_xi, fs_out);
    if (trl->parsed())
      return cmd_train_rl(rl_encoder, rl_src, rl_tar, rl_xi, rl_alpha, rl_tau, rl_temp, rl_gamma,
                          rl_mu, rl_td, rl_pi, rl_batch, rl_hidden, rl_interleaved, rl_seed,
                          rl_out);
    if (evl->parsed()) return cmd_eval(eval_env, ev_policy, ev_episodes, ev_seed, ev_greedy);
    if (run->parsed()) {
      const igdf::ExperimentConfig cfg = igdf::load_experiment_config(run_config);
      const igdf::ExperimentSummary s = igdf::run_experiment(cfg);
      std::cout << "return_mean,return_std\n" << fmt(s.mean) << "," << fmt(s.std_dev) << "\n";
      return 0;
    }
    if (abl->parsed()) {
      const igdf::ExperimentConfig cfg = igdf::load_experiment_config(ab_config);
      igdf::run_ablation(cfg, ab_param, ab_values);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

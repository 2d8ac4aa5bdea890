#pragma once

// Command-line front end. run() parses arguments, dispatches to a command
// and maps failures to exit codes:
//   0  success
//   1  runtime failure (I/O, divergence, planner failure)
//   2  usage or configuration error

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "mpail/config.hpp"
#include "mpail/svg.hpp"

namespace mpail::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace fs = std::filesystem;

template <class T>
std::vector<T> parse_list(const std::string& s, const std::string& what) {
  std::vector<T> out;
  for (auto& f : csv::split(s)) {
    const std::string t = csv::trim(f);
    if (t.empty()) continue;
    try {
      std::size_t pos = 0;
      long long v = std::stoll(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + t + "' as an integer");
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

inline RunConfig load_run_config(const GlobalOptions& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

inline std::string out_dir(const GlobalOptions& g, const std::string& fallback) {
  const std::string d = g.out.empty() ? fallback : g.out;
  fs::create_directories(d);
  return d;
}

// ---------------------------------------------------------------------------
// gen-demos
// ---------------------------------------------------------------------------

struct GenDemosArgs {
  std::string env = "nav";
  std::string mode = "direct";
  int n = 4;
  std::string file = "demos.csv";
};

inline int cmd_gen_demos(const GlobalOptions& g, const GenDemosArgs& a, std::ostream& out) {
  if (a.n < 1) throw UsageError("--n must be >= 1");
  if (a.mode != "direct" && a.mode != "circling") throw UsageError("--mode must be direct or circling");
  RunConfig c = g.config.empty() ? RunConfig::defaults_for(a.env) : load_config(g.config);
  c.env = a.env;
  if (g.seed) c.seed = *g.seed;
  auto env = c.make_env();
  std::unique_ptr<Expert> expert;
  if (a.env == "nav")
    expert = std::make_unique<NavExpert>(a.mode == "circling" ? NavExpertMode::Circling : NavExpertMode::Direct);
  else
    expert = std::make_unique<CartpoleExpert>(CartpoleEnv());
  const DemoSet d = generate_demos(*env, *expert, a.n, c.seed);
  const std::string path = (fs::path(out_dir(g, ".")) / a.file).string();
  write_demos(d, path);
  out << "wrote " << path << ": " << d.episodes.size() << " episodes, " << d.transition_count() << " transitions\n";
  std::vector<double> finals;
  for (const auto& e : d.episodes) {
    const State s = e.col(e.cols() - 1);
    finals.push_back(a.env == "nav" ? NavEnv::goal_distance(s) : std::abs(s[2]));
  }
  const auto [mn, mx] = std::minmax_element(finals.begin(), finals.end());
  const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / static_cast<double>(finals.size());
  out << (a.env == "nav" ? "final goal distance" : "final |pole angle|") << ": mean " << csv::format_double(mean)
      << " min " << csv::format_double(*mn) << " max " << csv::format_double(*mx) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string demos;
  std::optional<int> iterations;
  bool quiet = false;
};

inline DemoSet load_demos_checked(const std::string& path, const Environment& env) {
  if (path.empty()) throw UsageError("no demonstration file given (run.demos or --demos)");
  if (!fs::exists(path)) throw Error("demo file not found: " + path);
  DemoSet d = read_demos(path);
  if (d.state_dim != env.state_dim())
    throw UsageError("demo file " + path + " has state dimension " + std::to_string(d.state_dim) + ", expected " +
                     std::to_string(env.state_dim()));
  return d;
}

inline int cmd_train(const GlobalOptions& g, const TrainArgs& a, std::ostream& out) {
  RunConfig c = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!a.demos.empty()) c.demos = a.demos;
  if (a.iterations) c.train.iterations = *a.iterations;
  if (!g.out.empty()) c.out = g.out;
  c.validate();
  auto env = c.make_env();
  const DemoSet demos = load_demos_checked(c.demos, *env);
  for (const auto& w : c.mppi.warnings()) out << "warning: " << w << "\n";
  fs::create_directories(c.out);
  write_config_snapshot(c, (fs::path(c.out) / "config.ini").string());
  Trainer trainer(*env, demos, c.make_model(*env), c.planner(), c.training());
  trainer.run(c.train.iterations, c.out, [&](const TrainRecord& r) {
    if (a.quiet) return;
    out << "iter " << r.iter << " disc_loss " << csv::format_double(r.disc_loss) << " value_loss "
        << csv::format_double(r.value_loss) << " task_reward " << csv::format_double(r.mean_task_reward)
        << " temperature " << csv::format_double(r.temperature) << "\n";
    out.flush();
  });
  out << "run directory: " << c.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Checkpoint iteration for "last", "best" or a number. "best" is the
/// checkpoint whose own collection iteration logged the highest mean task
/// reward.
inline int resolve_checkpoint(const std::string& run, const std::string& which) {
  const auto ks = list_checkpoints(run);
  if (ks.empty()) throw Error("no checkpoints under " + run);
  if (which == "last") return ks.back();
  if (which == "best") {
    const auto log = csv::read((fs::path(run) / "train_log.csv").string());
    const auto iters = log.values("iter");
    const auto rew = log.values("mean_task_reward");
    int best = -1;
    double best_r = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < iters.size(); ++i) {
      const int k = static_cast<int>(iters[i]);
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) continue;
      if (rew[i] > best_r) {
        best_r = rew[i];
        best = k;
      }
    }
    if (best < 0) throw Error("no logged iteration matches a checkpoint under " + run);
    return best;
  }
  int k = 0;
  try {
    k = std::stoi(which);
  } catch (const std::exception&) {
    throw UsageError("--checkpoint must be last, best or an iteration number");
  }
  if (std::find(ks.begin(), ks.end(), k) == ks.end())
    throw Error("checkpoint " + which + " not found under " + run);
  return k;
}

struct LoadedRun {
  RunConfig config;
  std::unique_ptr<Environment> env;
  Checkpoint checkpoint;
};

inline LoadedRun load_run(const std::string& run, const std::string& which, const GlobalOptions& g) {
  if (run.empty()) throw UsageError("--run is required");
  const auto snap = fs::path(run) / "config.ini";
  if (!fs::exists(snap)) throw Error("run directory has no config.ini: " + run);
  LoadedRun r;
  r.config = load_config(snap.string());
  if (g.seed) r.config.seed = *g.seed;
  r.env = r.config.make_env();
  const int k = resolve_checkpoint(run, which);
  r.checkpoint = Checkpoint::load((fs::path(run) / std::to_string(k)).string(), r.config.training());
  return r;
}

struct DeployArgs {
  std::string run;
  std::string checkpoint = "last";
  int steps = 0;
  int capture_every = 10;
  int max_rollouts = 64;
};

/// Planned rollouts (colored by trajectory cost) under the executed path.
template <class S>
svg::Figure deployment_figure(const Environment& env, const Deployment<S>& d, int max_rollouts) {
  svg::Figure fig;
  const bool nav = env.name() == "nav";
  fig.title = nav ? "deployment: planned rollouts and executed path" : "deployment: pole angle";
  fig.xlabel = nav ? "x (m)" : "t (s)";
  fig.ylabel = nav ? "y (m)" : "theta (rad)";
  fig.equal_aspect = nav;
  const double dt = env.episode().dt;
  for (std::size_t b = 0; b < d.batches.size(); ++b) {
    const auto& batch = d.batches[b];
    const int t0 = d.captured_steps[b];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index k = 0; k < batch.traj_costs.size(); ++k)
      if (std::isfinite(batch.traj_costs[k])) {
        lo = std::min(lo, batch.traj_costs[k]);
        hi = std::max(hi, batch.traj_costs[k]);
      }
    const int n = std::min<int>(max_rollouts, batch.samples());
    for (int k = 0; k < n; ++k) {
      svg::Series s;
      s.width = 0.6;
      s.opacity = 0.5;
      const double c = batch.traj_costs[k];
      s.color = svg::color_map(hi > lo ? (c - lo) / (hi - lo) : 0.0);
      for (std::size_t t = 0; t < batch.states.size(); ++t) {
        if (nav) {
          s.x.push_back(static_cast<double>(batch.states[t](0, k)));
          s.y.push_back(static_cast<double>(batch.states[t](1, k)));
        } else {
          s.x.push_back((t0 + static_cast<double>(t)) * dt);
          s.y.push_back(static_cast<double>(batch.states[t](2, k)));
        }
      }
      fig.series.push_back(std::move(s));
    }
  }
  svg::Series path;
  path.label = "executed";
  path.color = "#000000";
  path.width = 2.0;
  const Eigen::MatrixXd st = d.episode.states();
  for (Eigen::Index t = 0; t < st.cols(); ++t) {
    path.x.push_back(nav ? st(0, t) : static_cast<double>(t) * dt);
    path.y.push_back(nav ? st(1, t) : st(2, t));
  }
  fig.series.push_back(std::move(path));
  if (nav) {
    svg::Series goal;
    goal.label = "goal";
    goal.line = false;
    goal.color = "#2ca02c";
    goal.width = 5.0;
    goal.x = {NavEnv::kGoalX};
    goal.y = {NavEnv::kGoalY};
    fig.series.push_back(std::move(goal));
  }
  return fig;
}

inline int cmd_deploy(const GlobalOptions& g, const DeployArgs& a, std::ostream& out) {
  auto r = load_run(a.run, a.checkpoint, g);
  const std::string dir = out_dir(g, a.run);
  const int steps = a.steps > 0 ? a.steps : r.env->episode().horizon_steps;
  Rng rng = derive_rng(r.config.seed, 0x0C000000ULL);
  const State s0 = r.env->initial_state(rng);
  const MppiConfig mc = r.config.mppi;
  svg::Figure fig;
  Episode ep;
  if (r.config.train.float_rollouts) {
    auto d = deploy<float>(*r.env, r.checkpoint, mc, s0, steps, rng, a.capture_every);
    fig = deployment_figure(*r.env, d, a.max_rollouts);
    ep = std::move(d.episode);
  } else {
    auto d = deploy<double>(*r.env, r.checkpoint, mc, s0, steps, rng, a.capture_every);
    fig = deployment_figure(*r.env, d, a.max_rollouts);
    ep = std::move(d.episode);
  }
  write_path_csv((fs::path(dir) / "path.csv").string(), *r.env, ep);
  fig.save((fs::path(dir) / "path.svg").string());
  out << "checkpoint " << r.checkpoint.iteration << ", " << ep.records.size() << " steps";
  if (ep.aborted) out << " (aborted: " << ep.error << ")";
  if (!ep.records.empty()) {
    const State& last = ep.records.back().s_next;
    out << ", final task reward " << csv::format_double(r.env->task_reward(last));
    if (r.env->name() == "nav") out << ", final goal distance " << csv::format_double(NavEnv::goal_distance(last));
  }
  out << "\nwrote " << (fs::path(dir) / "path.csv").string() << " and path.svg\n";
  return ep.aborted ? kExitRuntime : kExitOk;
}

struct OodArgs {
  std::string run;
  std::string checkpoint = "last";
  double box = 40.0;
  int agents = 200;
  int steps = 100;
  bool untrained = false;
};

inline int cmd_ood(const GlobalOptions& g, const OodArgs& a, std::ostream& out) {
  auto r = load_run(a.run, a.checkpoint, g);
  if (r.env->name() != "nav") throw UsageError("eval ood is defined for the nav environment");
  const DemoSet demos = load_demos_checked(r.config.demos, *r.env);
  const auto fit = GaussianFit::fit(demos.all_states());
  Checkpoint ck = a.untrained ? initial_checkpoint(*r.env, r.checkpoint.dynamics, r.config.training()) : r.checkpoint;
  OodConfig oc{a.box, a.agents, a.steps, r.config.seed, r.config.train.float_rollouts};
  const auto rows = run_ood_eval(*r.env, ck, r.config.mppi, fit, oc);
  const std::string dir = out_dir(g, a.run);
  const std::string name = a.untrained ? "ood_untrained" : "ood";
  write_ood_csv((fs::path(dir) / (name + ".csv")).string(), rows, r.env->state_dim());
  svg::Figure fig;
  fig.title = "final reward vs initial-state OOD energy";
  fig.xlabel = "OOD energy";
  fig.ylabel = "final task reward";
  std::vector<double> e, f;
  for (const auto& row : rows) {
    e.push_back(row.energy);
    f.push_back(row.final_reward);
  }
  svg::Series s;
  s.line = false;
  s.width = 2.5;
  s.x = e;
  s.y = f;
  fig.series.push_back(std::move(s));
  fig.save((fs::path(dir) / (name + ".svg")).string());
  out << "agents " << rows.size();
  if (!rows.empty())
    out << ", mean final reward " << csv::format_double(std::accumulate(f.begin(), f.end(), 0.0) / double(f.size()));
  if (rows.size() >= 2) out << ", spearman(energy, final reward) " << csv::format_double(spearman(e, f));
  out << "\nwrote " << (fs::path(dir) / (name + ".csv")).string() << "\n";
  return kExitOk;
}

struct AblateArgs {
  std::string demos;
  std::string horizons = "5,10,30";
  std::string modes = "both,cost,value";
  std::string seeds = "1,2,3";
  int iterations = 100;
};

inline int cmd_ablate(const GlobalOptions& g, const AblateArgs& a, std::ostream& out) {
  RunConfig c = load_run_config(g);
  if (!a.demos.empty()) c.demos = a.demos;
  auto env = c.make_env();
  const DemoSet demos = load_demos_checked(c.demos, *env);
  ExperimentGrid grid;
  for (int h : parse_list<int>(a.horizons, "--H"))
    for (const auto& m : csv::split(a.modes)) grid.cells.push_back(AblationCell::from_mode(h, csv::trim(m)));
  grid.seeds = parse_list<std::uint64_t>(a.seeds, "--seeds");
  grid.iterations = a.iterations;
  const std::string dir = out_dir(g, c.out);
  auto res = run_ablation(grid, *env, demos, c.make_model(*env), c.planner(), c.training(),
                          [&](const AblationRow& row) {
                            out << "H " << row.spec.horizon << " " << row.spec.mode() << " seed " << row.seed
                                << " iter " << row.iter << " task_reward " << csv::format_double(row.mean_task_reward)
                                << "\n";
                            out.flush();
                          });
  write_ablation_csv((fs::path(dir) / "ablation.csv").string(), res);
  const int window = std::min(10, grid.iterations);
  for (std::size_t i = 0; i < grid.cells.size(); ++i)
    out << "cell H=" << grid.cells[i].horizon << " " << grid.cells[i].mode() << ": final mean reward "
        << csv::format_double(res.final_reward(static_cast<int>(i), window)) << ", cost evals "
        << res.counters[i].cost_evals << ", value evals " << res.counters[i].value_evals << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string horizons = "5,10,30";
  std::string iterations = "1,2,5";
  int samples = 512;
  int envs = 4;
};

inline int cmd_bench(const GlobalOptions& g, const BenchArgs& a, std::ostream& out) {
  RunConfig c = load_run_config(g);
  auto env = c.make_env();
  const auto rows = throughput_bench(*env, c.make_model(*env), parse_list<int>(a.horizons, "--H"),
                                     parse_list<int>(a.iterations, "--J"), a.samples, a.envs, c.planner(),
                                     c.training());
  const std::string dir = out_dir(g, ".");
  write_bench_csv((fs::path(dir) / "bench.csv").string(), rows);
  for (const auto& r : rows)
    out << "H " << r.horizon << " J " << r.iterations << ": " << csv::format_double(r.per_step_ms) << " ms/step\n";
  out << "wrote " << (fs::path(dir) / "bench.csv").string() << "\n";
  return kExitOk;
}

struct CteArgs {
  std::string run;
  std::string checkpoint = "last";
  std::string ref;
};

/// Deploys from the first state of every reference episode and measures
/// the executed path against that episode's polyline.
inline int cmd_cte(const GlobalOptions& g, const CteArgs& a, std::ostream& out) {
  auto r = load_run(a.run, a.checkpoint, g);
  if (r.env->name() != "nav") throw UsageError("eval cte is defined for the nav environment");
  if (a.ref.empty()) throw UsageError("--ref is required");
  const DemoSet ref = load_demos_checked(a.ref, *r.env);
  const std::string dir = out_dir(g, a.run);
  csv::Writer w((fs::path(dir) / "cte.csv").string(), {"episode", "max_cte_m", "mean_cte_m"});
  double sum_max = 0.0, sum_mean = 0.0;
  for (std::size_t e = 0; e < ref.episodes.size(); ++e) {
    const auto& re = ref.episodes[e];
    Rng rng = derive_rng(r.config.seed, 0x0B000000ULL + e);
    const State s0 = re.col(0);
    const int steps = static_cast<int>(re.cols()) - 1;
    Episode ep = r.config.train.float_rollouts ? deploy<float>(*r.env, r.checkpoint, r.config.mppi, s0, steps, rng).episode
                                               : deploy<double>(*r.env, r.checkpoint, r.config.mppi, s0, steps, rng).episode;
    const Eigen::MatrixXd st = ep.records.empty() ? Eigen::MatrixXd(s0) : ep.states();
    const auto cte = cross_track_error(st.topRows(2), re.topRows(2));
    w.row({double(e), cte.max, cte.mean});
    sum_max += cte.max;
    sum_mean += cte.mean;
    out << "episode " << e << ": max CTE " << csv::format_double(cte.max) << " m, mean CTE "
        << csv::format_double(cte.mean) << " m\n";
  }
  const double n = static_cast<double>(ref.episodes.size());
  out << "average: max CTE " << csv::format_double(sum_max / n) << " m, mean CTE " << csv::format_double(sum_mean / n)
      << " m\nwrote " << (fs::path(dir) / "cte.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string csv;
  std::string x;
  std::string y;
  std::string kind = "line";
  std::string title;
  std::string name;
};

inline int cmd_plot(const GlobalOptions& g, const PlotArgs& a, std::ostream& out) {
  if (a.kind != "line" && a.kind != "scatter") throw UsageError("--kind must be line or scatter");
  if (!fs::exists(a.csv)) throw Error("csv file not found: " + a.csv);
  csv::Table t;
  if (fs::file_size(a.csv) > 0) t = csv::read(a.csv);
  std::vector<std::string> ys;
  for (auto& s : csv::split(a.y))
    if (!csv::trim(s).empty()) ys.push_back(csv::trim(s));
  if (ys.empty()) throw UsageError("--y needs at least one column");
  if (!t.header.empty()) {
    for (const auto& col : ys)
      if (t.column(col) < 0) throw UsageError("unknown column '" + col + "' in " + a.csv);
    if (t.column(a.x) < 0) throw UsageError("unknown column '" + a.x + "' in " + a.csv);
  }
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  svg::Figure fig;
  fig.title = a.title;
  fig.xlabel = a.x;
  fig.ylabel = ys.size() == 1 ? ys[0] : "";
  for (std::size_t i = 0; i < ys.size(); ++i) {
    svg::Series s;
    s.label = ys.size() > 1 ? ys[i] : "";
    s.color = palette[i % 6];
    s.line = a.kind == "line";
    s.width = s.line ? 1.5 : 2.5;
    if (!t.header.empty()) {
      s.x = t.values(a.x);
      s.y = t.values(ys[i]);
    }
    fig.series.push_back(std::move(s));
  }
  const std::string stem = a.name.empty() ? fs::path(a.csv).stem().string() : a.name;
  const std::string path = (fs::path(out_dir(g, ".")) / (stem + ".svg")).string();
  fig.save(path);
  out << "wrote " << path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Model predictive adversarial imitation learning toolkit", "mpail"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "run configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "master seed");
  app.add_option("--out", g.out, "output directory");

  GenDemosArgs gd;
  auto* c_gen = app.add_subcommand("gen-demos", "write scripted demonstrations");
  c_gen->add_option("--env", gd.env)->check(CLI::IsMember({"nav", "cartpole"}));
  c_gen->add_option("--mode", gd.mode)->check(CLI::IsMember({"direct", "circling"}));
  c_gen->add_option("--n", gd.n, "number of episodes");
  c_gen->add_option("--file", gd.file, "file name inside --out");

  TrainArgs ta;
  int iterations = 0;
  auto* c_train = app.add_subcommand("train", "train from demonstrations");
  c_train->add_option("--demos", ta.demos);
  auto* it_opt = c_train->add_option("--iterations", iterations);
  c_train->add_flag("--quiet", ta.quiet);

  auto* c_eval = app.add_subcommand("eval", "evaluation drivers");
  c_eval->require_subcommand(1);
  c_eval->fallthrough();

  DeployArgs da;
  auto* c_deploy = c_eval->add_subcommand("deploy", "deterministic deployment with rollout plot");
  c_deploy->add_option("--run", da.run)->required();
  c_deploy->add_option("--checkpoint", da.checkpoint);
  c_deploy->add_option("--steps", da.steps);
  c_deploy->add_option("--capture-every", da.capture_every);
  c_deploy->add_option("--max-rollouts", da.max_rollouts);

  OodArgs oa;
  auto* c_ood = c_eval->add_subcommand("ood", "out-of-distribution recovery");
  c_ood->add_option("--run", oa.run)->required();
  c_ood->add_option("--checkpoint", oa.checkpoint);
  c_ood->add_option("--box", oa.box);
  c_ood->add_option("--agents", oa.agents);
  c_ood->add_option("--steps", oa.steps);
  c_ood->add_flag("--untrained", oa.untrained);

  AblateArgs aa;
  auto* c_ablate = c_eval->add_subcommand("ablate", "cost/value ablation across horizons");
  c_ablate->add_option("--demos", aa.demos);
  c_ablate->add_option("--H", aa.horizons);
  c_ablate->add_option("--modes", aa.modes);
  c_ablate->add_option("--seeds", aa.seeds);
  c_ablate->add_option("--iterations", aa.iterations);

  BenchArgs ba;
  auto* c_bench = c_eval->add_subcommand("bench", "planner throughput");
  c_bench->add_option("--H", ba.horizons);
  c_bench->add_option("--J", ba.iterations);
  c_bench->add_option("--N", ba.samples);
  c_bench->add_option("--envs", ba.envs);

  CteArgs ca;
  auto* c_cte = c_eval->add_subcommand("cte", "cross-track error against reference demonstrations");
  c_cte->add_option("--run", ca.run)->required();
  c_cte->add_option("--checkpoint", ca.checkpoint);
  c_cte->add_option("--ref", ca.ref)->required();

  PlotArgs pa;
  auto* c_plot = app.add_subcommand("plot", "SVG line or scatter plot of CSV columns");
  c_plot->add_option("--csv", pa.csv)->required();
  c_plot->add_option("--x", pa.x)->required();
  c_plot->add_option("--y", pa.y)->required();
  c_plot->add_option("--kind", pa.kind);
  c_plot->add_option("--title", pa.title);
  c_plot->add_option("--name", pa.name, "output file stem inside --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (seed_opt->count()) g.seed = seed;
  if (it_opt->count()) ta.iterations = iterations;

  const std::vector<std::tuple<CLI::App*, const char*, std::function<int()>>> commands{
      {c_gen, "gen-demos", [&] { return cmd_gen_demos(g, gd, out); }},
      {c_train, "train", [&] { return cmd_train(g, ta, out); }},
      {c_deploy, "eval deploy", [&] { return cmd_deploy(g, da, out); }},
      {c_ood, "eval ood", [&] { return cmd_ood(g, oa, out); }},
      {c_ablate, "eval ablate", [&] { return cmd_ablate(g, aa, out); }},
      {c_bench, "eval bench", [&] { return cmd_bench(g, ba, out); }},
      {c_cte, "eval cte", [&] { return cmd_cte(g, ca, out); }},
      {c_plot, "plot", [&] { return cmd_plot(g, pa, out); }},
  };
  for (const auto& [sub, name, fn] : commands) {
    if (!sub->parsed()) continue;
    try {
      return fn();
    } catch (const ConfigError& e) {
      err << name << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const UsageError& e) {
      err << name << ": " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::exception& e) {
      err << name << ": " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

}  // namespace mpail::cli

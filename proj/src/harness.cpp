#include "mergeflow/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mergeflow/env.hpp"

namespace mergeflow {

Algo algo_from_string(const std::string& s) {
  if (s == "nocontrol") return Algo::NoControl;
  if (s == "marollout") return Algo::MARollout;
  if (s == "simppo") return Algo::SimultaneousPpo;
  throw std::invalid_argument("unknown algorithm: " + s);
}

const char* to_string(Algo a) {
  switch (a) {
    case Algo::NoControl: return "nocontrol";
    case Algo::MARollout: return "marollout";
    case Algo::SimultaneousPpo: return "simppo";
  }
  return "?";
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw std::invalid_argument("ExperimentSpec: need >= 1 seed");
}

double improvement_pct(double tt_no_control, double tt_algorithm) {
  return (tt_no_control - tt_algorithm) / tt_no_control * 100.0;
}

ResultRow run_no_control(const ScenarioConfig& scenario, std::uint64_t seed,
                         CsvTable* episode_log, std::ostream* state_dump) {
  Simulation sim = make_simulation(scenario, seed);
  DecPomdpConfig env_cfg = scenario.env;
  env_cfg.horizon = scenario.horizon;
  if (episode_log) episode_log->header = {"t", "reward", "controlled", "zone_count"};
  double total = 0.0;
  for (int t = 0; t < scenario.horizon; ++t) {
    sim.step();
    const double r = shared_reward(sim, env_cfg);
    total += r;
    if (episode_log) {
      int av_in_zone = 0;
      for (const auto& lane : sim.lanes())
        for (const Vehicle& v : lane)
          if (v.kind == VehicleKind::Av &&
              v.position >= sim.network().zone_start() &&
              v.position < sim.network().exit_position())
            ++av_in_zone;
      episode_log->rows.push_back({std::to_string(t + 1), format_double(r),
                                   std::to_string(av_in_zone),
                                   std::to_string(sim.zone_vehicle_count())});
    }
    if (state_dump) sim.dump_state(*state_dump);
  }
  ResultRow row;
  row.scenario = scenario.name;
  row.algorithm = to_string(Algo::NoControl);
  row.seed = seed;
  row.reward = total;
  row.avg_tt = sim.travel_time_stats().avg_tt;
  return row;
}

std::vector<ResultRow> evaluate_rows(const ScenarioConfig& scenario,
                                     const PolicyPool& pool, Algo algo,
                                     const std::vector<std::uint64_t>& seeds) {
  std::vector<ResultRow> rows;
  for (std::uint64_t seed : seeds) {
    ResultRow nc = run_no_control(scenario, seed);
    rows.push_back(nc);
    EvalResult ev =
        evaluate_pool(scenario, pool, {seed}, scenario.train.eval_greedy);
    ResultRow row;
    row.scenario = scenario.name;
    row.algorithm = to_string(algo);
    row.seed = seed;
    row.reward = ev.rewards[0];
    row.avg_tt = ev.avg_tts[0];
    row.improvement_pct = improvement_pct(nc.avg_tt, row.avg_tt);
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_marollout(const ScenarioConfig& scenario,
                               const std::vector<std::uint64_t>& seeds,
                               int sweeps_override, const std::string& out_dir) {
  TrainResult tr = train(scenario, sweeps_override, out_dir);
  ExperimentResult result;
  result.curve = std::move(tr.curve);
  result.updates = std::move(tr.updates);
  result.rows = evaluate_rows(scenario, tr.pool, Algo::MARollout, seeds);
  result.pool = std::move(tr.pool);
  return result;
}

namespace {

// All slots collect jointly under the frozen sweep-k configuration, then each
// updates from its own trajectories.
void simultaneous_sweep(PolicyPool& pool, const ScenarioConfig& scenario,
                        const PpoConfig& cfg, int episodes,
                        std::vector<UpdateRecord>& updates) {
  const int k = pool.iteration;
  std::map<int, std::vector<Trajectory>> batches;
  for (int e = 0; e < episodes; ++e) {
    EpisodeOptions opt;
    opt.env_seed = episode_env_seed(scenario.seed, k, 0, e);
    opt.action_seed = episode_action_seed(scenario.seed, k, 0, e);
    opt.record_slot = kRecordAll;
    EpisodeRollout ep = collect_episode(scenario, pool, opt);
    for (auto& [slot, trajs] : ep.trajectories)
      for (Trajectory& t : trajs) {
        compute_advantages(t, cfg.gamma, cfg.gae_lambda);
        batches[slot].push_back(std::move(t));
      }
  }
  for (int slot = 0; slot < pool.size(); ++slot) {
    UpdateStats us;
    auto it = batches.find(slot);
    if (it != batches.end() && !it->second.empty()) {
      Rng shuffle(update_shuffle_seed(scenario.seed, k, slot));
      us = ppo_update(pool.slots[slot], it->second, cfg, shuffle);
    }
    updates.push_back({k, slot, std::move(us)});
  }
  pool.iteration += 1;
}

}  // namespace

ExperimentResult run_simultaneous_ppo(const ScenarioConfig& scenario,
                                      const std::vector<std::uint64_t>& seeds,
                                      int sweeps_override,
                                      const std::string& out_dir) {
  scenario.validate();
  PpoConfig cfg = scenario.train.ppo;
  cfg.gamma = scenario.env.gamma;
  const int sweeps =
      sweeps_override >= 0 ? sweeps_override : scenario.train.sweeps;
  ExperimentResult result;
  result.pool = make_pool(scenario);
  std::vector<std::uint64_t> eval_seeds;
  for (int j = 0; j < scenario.train.eval_episodes; ++j)
    eval_seeds.push_back(eval_env_seed(scenario.seed, j));
  auto snapshot = [&](int agent) {
    EvalResult ev = evaluate_pool(scenario, result.pool, eval_seeds,
                                  scenario.train.eval_greedy);
    result.curve.push_back(
        {result.pool.iteration, agent, ev.median_reward, ev.median_avg_tt});
  };
  snapshot(-1);
  if (!out_dir.empty())
    save_pool(out_dir + "/checkpoints/sweep_000", result.pool);
  for (int k = 0; k < sweeps; ++k) {
    simultaneous_sweep(result.pool, scenario, cfg,
                       scenario.train.episodes_per_update, result.updates);
    snapshot(result.pool.size() - 1);
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "sweep_%03d", result.pool.iteration);
      save_pool(out_dir + "/checkpoints/" + name, result.pool);
    }
  }
  result.rows =
      evaluate_rows(scenario, result.pool, Algo::SimultaneousPpo, seeds);
  return result;
}

std::vector<SweepRow> sensitivity_sweep(
    const ScenarioConfig& base, const std::vector<double>& inflow_grid,
    const std::vector<double>& penetration_grid,
    const std::vector<std::uint64_t>& seeds,
    const std::vector<std::pair<double, std::string>>& pool_dirs) {
  if (inflow_grid.empty() || penetration_grid.empty())
    throw std::invalid_argument("sensitivity_sweep: empty grid");
  std::vector<SweepRow> out;
  for (double inflow : inflow_grid) {
    ScenarioConfig cfg = base;
    cfg.random_inflow.enabled = false;
    cfg.inflow.schedule = {{0.0, inflow}};
    cfg.inflow.fixed_av_count = 0;
    for (double pen : penetration_grid) {
      cfg.inflow.penetration = pen / 100.0;
      cfg.name = base.name;
      for (std::uint64_t seed : seeds) {
        ResultRow nc = run_no_control(cfg, seed);
        SweepRow nc_row;
        nc_row.inflow = inflow;
        nc_row.penetration_pct = pen;
        nc_row.result = nc;
        out.push_back(nc_row);

        SweepRow alg_row;
        alg_row.inflow = inflow;
        alg_row.penetration_pct = pen;
        alg_row.result.scenario = cfg.name;
        alg_row.result.algorithm = to_string(Algo::MARollout);
        alg_row.result.seed = seed;
        if (pen == 0.0) {
          // No AVs to control: identical to the baseline by construction.
          alg_row.result.reward = nc.reward;
          alg_row.result.avg_tt = nc.avg_tt;
          alg_row.result.improvement_pct = 0.0;
        } else {
          auto it = std::find_if(pool_dirs.begin(), pool_dirs.end(),
                                 [&](const auto& p) { return p.first == pen; });
          if (it == pool_dirs.end()) {
            alg_row.skipped = true;
          } else {
            PolicyPool pool = load_pool(it->second);
            EvalResult ev =
                evaluate_pool(cfg, pool, {seed}, cfg.train.eval_greedy);
            alg_row.result.reward = ev.rewards[0];
            alg_row.result.avg_tt = ev.avg_tts[0];
            alg_row.result.improvement_pct =
                improvement_pct(nc.avg_tt, ev.avg_tts[0]);
          }
        }
        out.push_back(alg_row);
      }
    }
  }
  return out;
}

CsvTable rows_to_csv(const std::vector<ResultRow>& rows) {
  CsvTable t;
  t.header = {"scenario", "algorithm", "seed", "reward", "avg_tt",
              "improvement_pct"};
  for (const ResultRow& r : rows) {
    t.rows.push_back({r.scenario, r.algorithm, std::to_string(r.seed),
                      format_double(r.reward), format_double(r.avg_tt),
                      r.improvement_pct ? format_double(*r.improvement_pct)
                                        : std::string("--")});
  }
  return t;
}

std::vector<ResultRow> rows_from_csv(const CsvTable& t) {
  std::vector<ResultRow> rows;
  const int c_sc = t.column("scenario"), c_al = t.column("algorithm"),
            c_se = t.column("seed"), c_re = t.column("reward"),
            c_tt = t.column("avg_tt"), c_im = t.column("improvement_pct");
  if (c_sc < 0 || c_al < 0 || c_se < 0 || c_re < 0 || c_tt < 0 || c_im < 0)
    throw std::runtime_error("rows_from_csv: unexpected schema");
  for (const auto& row : t.rows) {
    ResultRow r;
    r.scenario = row[c_sc];
    r.algorithm = row[c_al];
    r.seed = std::stoull(row[c_se]);
    r.reward = std::stod(row[c_re]);
    r.avg_tt = std::stod(row[c_tt]);
    if (row[c_im] != "--") r.improvement_pct = std::stod(row[c_im]);
    rows.push_back(r);
  }
  return rows;
}

CsvTable sweep_rows_to_csv(const std::vector<SweepRow>& rows) {
  CsvTable t;
  t.header = {"scenario", "inflow",  "penetration_pct", "algorithm",
              "seed",     "reward",  "avg_tt",          "improvement_pct",
              "status"};
  for (const SweepRow& s : rows) {
    t.rows.push_back(
        {s.result.scenario, format_double(s.inflow, 1),
         format_double(s.penetration_pct, 1), s.result.algorithm,
         std::to_string(s.result.seed),
         s.skipped ? "--" : format_double(s.result.reward),
         s.skipped ? "--" : format_double(s.result.avg_tt),
         s.result.improvement_pct ? format_double(*s.result.improvement_pct)
                                  : std::string("--"),
         s.skipped ? "skipped" : "ok"});
  }
  return t;
}

CsvTable curve_to_csv(const std::vector<SweepPoint>& curve) {
  CsvTable t;
  t.header = {"sweep", "agent", "eval_reward", "eval_avg_tt"};
  for (const SweepPoint& p : curve)
    t.rows.push_back({std::to_string(p.sweep), std::to_string(p.agent),
                      format_double(p.eval_reward),
                      format_double(p.eval_avg_tt)});
  return t;
}

CsvTable updates_to_csv(const std::vector<UpdateRecord>& updates) {
  CsvTable t;
  t.header = {"iteration",  "agent",   "epoch",         "policy_loss",
              "value_loss", "entropy", "clip_fraction", "mean_ratio",
              "mean_episode_reward"};
  for (const UpdateRecord& u : updates) {
    for (std::size_t e = 0; e < u.stats.epochs.size(); ++e) {
      const EpochStats& es = u.stats.epochs[e];
      t.rows.push_back({std::to_string(u.sweep), std::to_string(u.slot),
                        std::to_string(e + 1), format_double(es.policy_loss),
                        format_double(es.value_loss), format_double(es.entropy),
                        format_double(es.clip_fraction),
                        format_double(es.mean_ratio),
                        format_double(u.stats.mean_episode_reward)});
    }
  }
  return t;
}

std::vector<SummaryLine> summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("summarize: no rows");
  // Group by (scenario, algorithm), preserving first-seen order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<ResultRow>> groups;
  for (const ResultRow& r : rows) {
    auto key = std::make_pair(r.scenario, r.algorithm);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r);
  }
  // Matched-seed NoControl travel times per scenario.
  std::map<std::pair<std::string, std::uint64_t>, double> nc_tt;
  for (const ResultRow& r : rows)
    if (r.algorithm == to_string(Algo::NoControl))
      nc_tt[{r.scenario, r.seed}] = r.avg_tt;

  std::vector<SummaryLine> lines;
  for (const auto& key : order) {
    const auto& group = groups[key];
    SummaryLine line;
    line.scenario = key.first;
    line.algorithm = key.second;
    std::vector<double> rewards, tts;
    for (const ResultRow& r : group) {
      rewards.push_back(r.reward);
      tts.push_back(r.avg_tt);
    }
    line.reward = median(rewards);
    line.avg_tt = median(tts);
    if (key.second != to_string(Algo::NoControl)) {
      std::vector<double> imps;
      for (const ResultRow& r : group) {
        auto it = nc_tt.find({r.scenario, r.seed});
        if (it != nc_tt.end())
          imps.push_back(improvement_pct(it->second, r.avg_tt));
        else if (r.improvement_pct)
          imps.push_back(*r.improvement_pct);
      }
      if (!imps.empty()) line.perf = format_double(median(imps), 2);
    }
    lines.push_back(line);
  }
  return lines;
}

CsvTable summary_to_csv(const std::vector<SummaryLine>& lines) {
  CsvTable t;
  t.header = {"scenario", "algorithm", "reward", "avg_tt", "perf_pct"};
  for (const SummaryLine& l : lines)
    t.rows.push_back({l.scenario, l.algorithm, format_double(l.reward),
                      format_double(l.avg_tt), l.perf});
  return t;
}

std::string summary_to_text(const std::vector<SummaryLine>& lines) {
  std::ostringstream os;
  os << "Scenario         Algorithm    Reward        Avg.TT (s)   Perf (%)\n";
  os << "-----------------------------------------------------------------\n";
  for (const SummaryLine& l : lines) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-16s %-12s %-13.2f %-12.2f %s\n",
                  l.scenario.c_str(), l.algorithm.c_str(), l.reward, l.avg_tt,
                  l.perf.c_str());
    os << buf;
  }
  return os.str();
}

namespace {
std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need matched vectors, n >= 2");
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= rx.size();
  my /= ry.size();
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

}  // namespace mergeflow

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mergeflow/harness.hpp"

namespace fs = std::filesystem;
using namespace mergeflow;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::vector<std::string>& raw,
                                       std::uint64_t fallback) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& s : raw) seeds.push_back(std::stoull(s));
  if (seeds.empty()) seeds.push_back(fallback);
  return seeds;
}

void write_rows(const std::string& out, const std::vector<ResultRow>& rows) {
  write_csv(out + "/results.csv", rows_to_csv(rows));
  write_csv(out + "/summary.csv", summary_to_csv(summarize(rows)));
  std::ofstream txt(out + "/summary.txt");
  txt << summary_to_text(summarize(rows));
}

int cmd_simulate(const std::string& scenario_file, std::uint64_t seed,
                 const std::string& out, bool dump) {
  ScenarioConfig cfg = ScenarioConfig::load_file(scenario_file);
  fs::create_directories(out);
  CsvTable episode_log;
  std::ofstream dump_os;
  if (dump) {
    dump_os.open(out + "/state_dump.csv");
    dump_os << "t,id,kind,lane,position,speed\n";
  }
  ResultRow row = run_no_control(cfg, seed, &episode_log,
                                 dump ? &dump_os : nullptr);
  write_csv(out + "/episode_log.csv", episode_log);
  write_rows(out, {row});
  write_manifest(out, "simulate", cfg.to_json(),
                 {{"scenario", scenario_file},
                  {"seed", std::to_string(seed)},
                  {"dump", dump ? "true" : "false"}});
  std::cout << "avg_tt=" << format_double(row.avg_tt)
            << " reward=" << format_double(row.reward) << '\n';
  return 0;
}

int cmd_train(const std::string& scenario_file, const std::string& out,
              int sweeps, const std::string& mode, const std::string& algo_s,
              const std::vector<std::string>& seeds_raw) {
  ScenarioConfig cfg = ScenarioConfig::load_file(scenario_file);
  if (!mode.empty()) {
    cfg.train.pool_mode = pool_mode_from_string(mode);
    if (cfg.train.pool_mode == PoolMode::SharedPolicy) cfg.train.pool_slots = 1;
  }
  const Algo algo = algo_s.empty() ? Algo::MARollout : algo_from_string(algo_s);
  if (algo == Algo::NoControl)
    throw std::invalid_argument("train: --algo nocontrol makes no sense");
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_raw, 101);
  fs::create_directories(out);

  ExperimentResult result =
      algo == Algo::MARollout
          ? run_marollout(cfg, seeds, sweeps, out)
          : run_simultaneous_ppo(cfg, seeds, sweeps, out);
  write_csv(out + "/learning_curve.csv", curve_to_csv(result.curve));
  write_csv(out + "/training_stats.csv", updates_to_csv(result.updates));
  write_rows(out, result.rows);
  write_manifest(out, "train", cfg.to_json(),
                 {{"scenario", scenario_file},
                  {"sweeps", std::to_string(sweeps)},
                  {"mode", to_string(cfg.train.pool_mode)},
                  {"algo", to_string(algo)}});
  std::cout << summary_to_text(summarize(result.rows));
  return 0;
}

int cmd_evaluate(const std::string& scenario_file, const std::string& pool_dir,
                 const std::string& out, const std::string& algo_s,
                 const std::vector<std::string>& seeds_raw) {
  ScenarioConfig cfg = ScenarioConfig::load_file(scenario_file);
  const Algo algo = algo_s.empty() ? Algo::MARollout : algo_from_string(algo_s);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_raw, 101);
  fs::create_directories(out);
  std::vector<ResultRow> rows;
  if (algo == Algo::NoControl) {
    for (std::uint64_t s : seeds) rows.push_back(run_no_control(cfg, s));
  } else {
    PolicyPool pool = load_pool(pool_dir);
    rows = evaluate_rows(cfg, pool, algo, seeds);
  }
  write_rows(out, rows);
  write_manifest(out, "evaluate", cfg.to_json(),
                 {{"scenario", scenario_file},
                  {"pool", pool_dir},
                  {"algo", to_string(algo)}});
  std::cout << summary_to_text(summarize(rows));
  return 0;
}

int cmd_sweep(const std::string& scenario_file, const std::string& out,
              std::vector<double> inflows, std::vector<double> penetrations,
              const std::vector<std::string>& seeds_raw,
              const std::vector<std::string>& pools_raw) {
  ScenarioConfig cfg = ScenarioConfig::load_file(scenario_file);
  if (inflows.empty())
    for (double f = 500; f <= 4000; f += 500) inflows.push_back(f);
  if (penetrations.empty()) penetrations = {0, 5, 10, 20, 40};
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_raw, 101);
  std::vector<std::pair<double, std::string>> pools;
  for (const std::string& spec : pools_raw) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--pools expects <penetration>=<dir>");
    pools.emplace_back(std::stod(spec.substr(0, eq)), spec.substr(eq + 1));
  }
  fs::create_directories(out);
  std::vector<SweepRow> rows =
      sensitivity_sweep(cfg, inflows, penetrations, seeds, pools);
  write_csv(out + "/sweep.csv", sweep_rows_to_csv(rows));
  write_manifest(out, "sweep", cfg.to_json(), {{"scenario", scenario_file}});
  std::cout << "wrote " << rows.size() << " sweep rows\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& row_files,
               const std::string& curve_file, const std::string& out) {
  std::vector<ResultRow> rows;
  for (const std::string& f : row_files) {
    std::vector<ResultRow> part = rows_from_csv(read_csv(f));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  fs::create_directories(out);
  const auto lines = summarize(rows);
  write_csv(out + "/summary.csv", summary_to_csv(lines));
  std::ofstream txt(out + "/summary.txt");
  txt << summary_to_text(lines);
  // Reward-curve CSV per algorithm; baseline has no training curve.
  CsvTable curve;
  if (!curve_file.empty()) curve = read_csv(curve_file);
  for (const SummaryLine& l : lines) {
    if (l.algorithm == to_string(Algo::NoControl)) {
      CsvTable empty;
      empty.header = {"sweep", "agent", "eval_reward", "eval_avg_tt"};
      write_csv(out + "/curve_" + l.algorithm + ".csv", empty);
    } else if (!curve_file.empty()) {
      write_csv(out + "/curve_" + l.algorithm + ".csv", curve);
    }
  }
  std::cout << summary_to_text(lines);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Highway merge-bottleneck decongestion via multi-agent rollout"};
  app.require_subcommand(1);

  std::string scenario_file, out = "out", mode, algo, pool_dir, curve_file;
  std::uint64_t seed = 1;
  int sweeps = -1;
  bool no_dump = false;
  std::vector<std::string> seeds_raw, pools_raw, row_files;
  std::vector<double> inflows, penetrations;

  auto* sim = app.add_subcommand("simulate", "No-control run with state dump");
  sim->add_option("--scenario", scenario_file)->required();
  sim->add_option("--seed", seed);
  sim->add_option("--out", out);
  sim->add_flag("--no-dump", no_dump, "Skip the per-step state dump");

  auto* tr = app.add_subcommand("train", "Train a policy pool (A2PI)");
  tr->add_option("--scenario", scenario_file)->required();
  tr->add_option("--out", out);
  tr->add_option("--sweeps", sweeps);
  tr->add_option("--mode", mode, "fixed|shared");
  tr->add_option("--algo", algo, "marollout|simppo");
  tr->add_option("--seeds", seeds_raw)->delimiter(',');

  auto* ev = app.add_subcommand("evaluate", "Evaluate a frozen pool");
  ev->add_option("--scenario", scenario_file)->required();
  ev->add_option("--pool", pool_dir);
  ev->add_option("--out", out);
  ev->add_option("--algo", algo, "nocontrol|marollout|simppo");
  ev->add_option("--seeds", seeds_raw)->delimiter(',');

  auto* sw = app.add_subcommand("sweep", "Inflow x penetration sensitivity grid");
  sw->add_option("--scenario", scenario_file)->required();
  sw->add_option("--out", out);
  sw->add_option("--inflows", inflows)->delimiter(',');
  sw->add_option("--penetrations", penetrations)->delimiter(',');
  sw->add_option("--seeds", seeds_raw)->delimiter(',');
  sw->add_option("--pools", pools_raw, "<penetration>=<checkpoint dir>")
      ->delimiter(',');

  auto* rp = app.add_subcommand("report", "Summarize result rows");
  rp->add_option("--rows", row_files)->delimiter(',')->required();
  rp->add_option("--curves", curve_file);
  rp->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(scenario_file, seed, out, !no_dump);
    if (tr->parsed())
      return cmd_train(scenario_file, out, sweeps, mode, algo, seeds_raw);
    if (ev->parsed())
      return cmd_evaluate(scenario_file, pool_dir, out, algo, seeds_raw);
    if (sw->parsed())
      return cmd_sweep(scenario_file, out, inflows, penetrations, seeds_raw,
                       pools_raw);
    if (rp->parsed()) return cmd_report(row_files, curve_file, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

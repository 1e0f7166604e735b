#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mergeflow/csvio.hpp"
#include "mergeflow/rollout.hpp"

namespace mergeflow {

enum class Algo { NoControl, MARollout, SimultaneousPpo };

Algo algo_from_string(const std::string& s);
const char* to_string(Algo a);

struct ExperimentSpec {
  std::string scenario_file;
  Algo algo = Algo::NoControl;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;
  std::vector<double> inflow_grid;       // veh/h
  std::vector<double> penetration_grid;  // percent
  int sweeps_override = -1;

  void validate() const;
};

struct ResultRow {
  std::string scenario;
  std::string algorithm;
  std::uint64_t seed = 0;
  double reward = 0.0;
  double avg_tt = 0.0;
  std::optional<double> improvement_pct;  // vs matched-seed NoControl
};

double improvement_pct(double tt_no_control, double tt_algorithm);

// Pure-IDM baseline episode (AVs drive as HDVs with their own v_max).
// Optionally appends per-step records to `episode_log` and vehicle snapshots
// to `state_dump`.
ResultRow run_no_control(const ScenarioConfig& scenario, std::uint64_t seed,
                         CsvTable* episode_log = nullptr,
                         std::ostream* state_dump = nullptr);

struct ExperimentResult {
  std::vector<ResultRow> rows;  // NoControl and algorithm rows, matched seeds
  std::vector<SweepPoint> curve;
  std::vector<UpdateRecord> updates;
  PolicyPool pool;
};

// Trains with A2PI on the scenario seed, then evaluates the frozen pool on
// the given seeds against matched NoControl runs.
ExperimentResult run_marollout(const ScenarioConfig& scenario,
                               const std::vector<std::uint64_t>& seeds,
                               int sweeps_override = -1,
                               const std::string& out_dir = "");

// Ablation: every slot updates each sweep from jointly collected data.
ExperimentResult run_simultaneous_ppo(const ScenarioConfig& scenario,
                                      const std::vector<std::uint64_t>& seeds,
                                      int sweeps_override = -1,
                                      const std::string& out_dir = "");

// Evaluates an already-trained pool against matched NoControl runs.
std::vector<ResultRow> evaluate_rows(const ScenarioConfig& scenario,
                                     const PolicyPool& pool, Algo algo,
                                     const std::vector<std::uint64_t>& seeds);

struct SweepRow {
  double inflow = 0.0;
  double penetration_pct = 0.0;
  ResultRow result;
  bool skipped = false;
};

// Inflow x penetration grid. `pool_dirs` maps penetration percent to a
// checkpoint directory with a trained SharedPolicy pool; grid points with no
// pool are emitted as skipped. Penetration 0 reuses the NoControl result.
std::vector<SweepRow> sensitivity_sweep(
    const ScenarioConfig& base, const std::vector<double>& inflow_grid,
    const std::vector<double>& penetration_grid,
    const std::vector<std::uint64_t>& seeds,
    const std::vector<std::pair<double, std::string>>& pool_dirs);

CsvTable rows_to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> rows_from_csv(const CsvTable& table);
CsvTable sweep_rows_to_csv(const std::vector<SweepRow>& rows);
CsvTable curve_to_csv(const std::vector<SweepPoint>& curve);
CsvTable updates_to_csv(const std::vector<UpdateRecord>& updates);

// Table-shaped summary: per (scenario, algorithm) medians over seeds, with a
// Perf column relative to the NoControl rows ("--" for the baseline).
struct SummaryLine {
  std::string scenario;
  std::string algorithm;
  double reward = 0.0;
  double avg_tt = 0.0;
  std::string perf = "--";
};

std::vector<SummaryLine> summarize(const std::vector<ResultRow>& rows);
CsvTable summary_to_csv(const std::vector<SummaryLine>& lines);
std::string summary_to_text(const std::vector<SummaryLine>& lines);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mergeflow

#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hiershape/abstraction.hpp"
#include "hiershape/driver.hpp"
#include "hiershape/envs.hpp"
#include "hiershape/learners.hpp"
#include "hiershape/theory.hpp"

namespace hiershape {

/// Invalid or inconsistent run configuration (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Directory holding maps/ and automata/; HIERSHAPE_DATA env var overrides the build default.
std::string default_data_dir();

struct LevelSpec {
  std::string kind = "rooms";
  double failure_prob = 0.1;
  double gamma = 0.9;
  std::size_t timeout = 50;
  /// Spurious directed edges between room labels.
  std::vector<std::pair<std::string, std::string>> extra_edges;
};

struct RunConfig {
  std::string env_name;
  double failure_prob = 0.04;
  double gamma = 0.98;
  std::size_t timeout = 100;
  std::optional<double> scenario_prob;

  /// Abstraction levels above the ground, lowest first.
  std::vector<LevelSpec> levels;
  LearnerSpec learner;
  /// Step budget per level, ground first.
  std::vector<std::size_t> budget;
  std::size_t eval_every = 1000;
  std::size_t eval_episodes = 10;
  PolicySource eval_source = PolicySource::passive;
  ShapingVariant shaping = ShapingVariant::biased;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::size_t checkpoint_every = 0;
  std::string data_dir = default_data_dir();
};

RunConfig parse_config(const std::string& json_text, const std::string& data_dir = default_data_dir());
RunConfig load_config(const std::string& path);
/// Inverse of parse_config (for run directories and reproducibility records).
std::string config_to_json(const RunConfig& config);

/// Configuration findings that do not prevent a run.
std::vector<std::string> lint(const RunConfig& config);

struct Environment {
  std::string name;
  Hierarchy hierarchy;
  /// Per level, ground first.
  std::vector<StartDistribution> starts;
  std::vector<std::size_t> timeouts;
  std::vector<std::string> warnings;
  /// Ground grid and its room labels (for reporting).
  std::optional<GridWorld> grid;
  std::optional<RoomGraph> rooms;
};

Environment build_environment(const RunConfig& config);

/// Exact truncated-episode statistics of the value-iteration policy from the ground start.
struct OptimalReference {
  Policy policy = Policy::uniform(0, 1);
  TruncatedEpisodeStats stats;
};
OptimalReference optimal_reference(const Environment& env, const SolverOptions& solver = {});

// Metrics ------------------------------------------------------------------

/// Append-only CSV: `# key=value` metadata, a header line, then one flushed record per line.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const std::map<std::string, std::string>& metadata);
  void write(const EvalRecord& record);

 private:
  std::ofstream out_;
};

struct MetricsFile {
  std::map<std::string, std::string> metadata;
  std::vector<EvalRecord> records;
};

/// Skips a trailing partial line, so files cut by a kill still parse.
MetricsFile read_metrics(std::istream& in);
MetricsFile read_metrics_file(const std::string& path);

struct RunSummary {
  std::vector<EvalRecord> records;
  HierarchyResult result;
  std::size_t abstract_steps = 0;
};

/// One training run. Writes metrics, config and final checkpoints when output_dir is set.
RunSummary run_experiment(const RunConfig& config);

struct AggregateRow {
  std::size_t step = 0;
  double mean_len = 0.0;
  double std_len = 0.0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double goal_rate = 0.0;
  std::size_t runs = 0;
};

/// Mean and population std across runs, per step present in every run.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<EvalRecord>>& runs);
void write_aggregate(std::ostream& out, const std::vector<AggregateRow>& rows,
                     const std::map<std::string, std::string>& metadata);
std::vector<AggregateRow> read_aggregate(std::istream& in);

struct SuiteResult {
  std::vector<AggregateRow> table;
  std::vector<std::string> failures;
  std::size_t completed = 0;
};

/// Runs `n_runs` copies of `config` with seeds derive_seed(master, i).
SuiteResult run_suite(const RunConfig& config, std::size_t n_runs, std::uint64_t master_seed);

// Theory sweep -------------------------------------------------------------

struct TheoryRecord {
  std::string instance;
  std::uint64_t seed = 0;
  Theorem1Report theorem;
  bool lemma2_holds = true;
  bool options_agree = true;
  bool nu_witness = true;
  double max_option_gap = 0.0;

  bool ok() const { return theorem.holds && lemma2_holds && options_agree && nu_witness; }
};

std::string to_json_line(const TheoryRecord& record);

/// Checks every state's greedy option on the instance.
TheoryRecord check_instance(const std::string& name, std::uint64_t seed, const AbstractionLayer& layer,
                            double corrupt_w = 0.0);

/// `count` random instances with sizes drawn from the seed.
std::vector<TheoryRecord> theory_sweep(std::uint64_t master_seed, std::size_t count,
                                       double corrupt_w = 0.0);

/// Ground/rooms layer of a named grid environment ("4rooms", "8rooms").
AbstractionLayer named_layer(const std::string& env_name, const std::string& data_dir = default_data_dir());

}  // namespace hiershape

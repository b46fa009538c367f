#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "hiershape/harness.hpp"
#include "hiershape/io.hpp"

namespace hs = hiershape;

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kTheory = 3 };

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

hs::RunConfig load(const std::string& path, const std::string& data_dir) {
  std::ifstream f(path);
  if (!f) throw hs::ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return hs::parse_config(ss.str(), data_dir);
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              std::optional<std::uint64_t> seed, const std::string& out) {
  hs::RunConfig c = load(config_path, data_dir);
  if (seed) c.seed = *seed;
  if (!out.empty()) c.output_dir = out;
  print_warnings(hs::lint(c));
  const hs::RunSummary s = hs::run_experiment(c);
  print_warnings(s.result.warnings);
  if (!s.records.empty()) {
    const hs::EvalRecord& r = s.records.back();
    std::cout << "final step=" << r.step << " mean_len=" << r.mean_len
              << " goal_rate=" << r.goal_rate << " mean_return=" << r.mean_return << '\n';
  }
  std::cout << "ground steps=" << s.result.levels.front().steps
            << " abstract_steps=" << s.abstract_steps << '\n';
  return kOk;
}

int cmd_suite(const std::string& config_path, const std::string& data_dir, std::size_t runs,
              std::uint64_t master, const std::string& out) {
  hs::RunConfig c = load(config_path, data_dir);
  if (!out.empty()) c.output_dir = out;
  print_warnings(hs::lint(c));
  const hs::SuiteResult s = hs::run_suite(c, runs, master);
  for (const auto& f : s.failures) std::cerr << "failed: " << f << '\n';
  if (c.output_dir.empty()) {
    hs::write_aggregate(std::cout, s.table, {{"runs", std::to_string(s.completed)}});
  } else {
    std::cout << "completed " << s.completed << '/' << runs << " runs; aggregate in "
              << c.output_dir << "/aggregate.csv\n";
  }
  return s.failures.empty() ? kOk : kRuntime;
}

int cmd_eval(const std::string& config_path, const std::string& data_dir, const std::string& policy_path,
             std::size_t episodes, std::uint64_t seed) {
  const hs::RunConfig c = load(config_path, data_dir);
  const hs::Environment env = hs::build_environment(c);
  hs::Policy policy = hs::Policy::uniform(0, 1);
  try {
    policy = hs::load_policy(policy_path);
  } catch (const hs::ParseError& e) {
    throw hs::ConfigError(e.what());
  }
  const hs::TabularMDP& ground = *env.hierarchy.level(0);
  if (policy.n_states() != ground.n_states() || policy.n_actions() != ground.n_actions()) {
    throw hs::ConfigError("policy shape does not match environment " + c.env_name);
  }
  hs::Rng rng(seed);
  const hs::EvalStats st = hs::evaluate_policy(ground, policy, env.starts[0], env.timeouts[0], episodes, rng);
  const hs::OptimalReference ref = hs::optimal_reference(env);
  std::cout << "mean_len=" << st.mean_len << " std_len=" << st.std_len
            << " mean_return=" << st.mean_return << " goal_rate=" << st.goal_rate << '\n'
            << "optimal_expected_len=" << ref.stats.expected_length
            << " optimal_goal_probability=" << ref.stats.goal_probability << '\n';
  return kOk;
}

int cmd_theory(std::size_t count, std::uint64_t seed, double corrupt_w, const std::vector<std::string>& envs,
               const std::string& data_dir, const std::string& out) {
  std::vector<hs::TheoryRecord> records = hs::theory_sweep(seed, count, corrupt_w);
  for (const auto& name : envs) {
    records.push_back(hs::check_instance(name, 0, hs::named_layer(name, data_dir), corrupt_w));
  }
  std::ofstream file;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw std::runtime_error("cannot write " + out);
  }
  std::ostream& sink = out.empty() ? std::cout : file;
  std::size_t failed = 0;
  for (const auto& r : records) {
    sink << hs::to_json_line(r) << '\n';
    if (!r.ok()) ++failed;
  }
  std::cerr << records.size() - failed << '/' << records.size() << " instances satisfy every check\n";
  return failed == 0 ? kOk : kTheory;
}

int cmd_validate(const std::string& config_path, const std::string& data_dir) {
  const hs::RunConfig c = load(config_path, data_dir);
  const hs::Environment env = hs::build_environment(c);
  const hs::ValidationReport report = env.hierarchy.validate();
  print_warnings(env.warnings);
  print_warnings(hs::lint(c));
  print_warnings(report.warnings);
  for (const auto& v : report.violations) std::cerr << "assumption: " << v << '\n';
  for (const auto& s : report.structural) std::cerr << "error: " << s << '\n';
  if (!report.structural.empty()) return kConfig;
  for (std::size_t k = 0; k < env.hierarchy.n_levels(); ++k) {
    const auto& m = *env.hierarchy.level(k);
    std::cout << "level " << k << ": " << m.n_states() << " states, " << m.n_actions()
              << " actions, gamma " << m.discount() << ", timeout " << env.timeouts[k] << '\n';
  }
  std::cout << "ok\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical potential-based shaping for goal MDPs"};
  app.require_subcommand(1);
  std::string data_dir = hs::default_data_dir();
  app.add_option("--data", data_dir, "Directory with maps/ and automata/");

  std::string config, out, policy;
  std::optional<std::uint64_t> seed;
  std::uint64_t master = 0;
  std::size_t runs = 10, episodes = 100, count = 50;
  double corrupt_w = 0.0;
  std::vector<std::string> envs;

  auto* train = app.add_subcommand("train", "Train one run");
  train->add_option("config", config, "Run configuration (JSON)")->required();
  train->add_option("--seed", seed, "Override the configured seed");
  train->add_option("--out", out, "Output directory");

  auto* suite = app.add_subcommand("suite", "Train several seeds and aggregate");
  suite->add_option("config", config, "Run configuration (JSON)")->required();
  suite->add_option("--runs", runs, "Number of runs")->check(CLI::PositiveNumber);
  suite->add_option("--master-seed", master, "Seed from which run seeds are derived");
  suite->add_option("--out", out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a saved ground policy");
  eval->add_option("config", config, "Run configuration (JSON)")->required();
  eval->add_option("policy", policy, "Policy checkpoint")->required();
  eval->add_option("--episodes", episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", master, "Evaluation seed");

  auto* theory = app.add_subcommand("theory-check", "Check the loss bound on random and named instances");
  theory->add_option("--count", count, "Random instances");
  theory->add_option("--seed", master, "Master seed");
  theory->add_option("--corrupt-w", corrupt_w, "Offset added to every W entry");
  theory->add_option("--env", envs, "Named environments to include");
  theory->add_option("--out", out, "JSON-lines output file (default stdout)");

  auto* validate = app.add_subcommand("validate", "Check a configuration and its environment");
  validate->add_option("config", config, "Run configuration (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(config, data_dir, seed, out);
    if (*suite) return cmd_suite(config, data_dir, runs, master, out);
    if (*eval) return cmd_eval(config, data_dir, policy, episodes, master);
    if (*theory) return cmd_theory(count, master, corrupt_w, envs, data_dir, out);
    if (*validate) return cmd_validate(config, data_dir);
  } catch (const hs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "hiershape/driver.hpp"
#include "hiershape/harness.hpp"
#include "hiershape/io.hpp"

using namespace hiershape;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hiershape_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kSmallConfig = R"({
  "env": {"name": "4rooms", "failure_prob": 0.04, "gamma": 0.98, "timeout": 50},
  "hierarchy": {"levels": [{"kind": "rooms", "failure_prob": 0.1, "gamma": 0.9, "timeout": 50}]},
  "learner": {"name": "q_learning", "alpha": {"start": 0.1, "end": 0.02}, "epsilon": {"start": 1.0, "end": 0.1}},
  "budget": {"steps": [3000, 500]},
  "eval": {"every": 1000, "episodes": 5},
  "shaping": {"variant": "biased"},
  "seed": 4
})";

}  // namespace

TEST_CASE("policy evaluation statistics") {
  Rng rng(1);
  const auto st = evaluate_policy(fixtures::chain3(), Policy::deterministic({0, 0, 0}, 1),
                                  StartDistribution::fixed(0), 10, 20, rng);
  CHECK(st.mean_len == 2.0);
  CHECK(st.std_len == 0.0);
  CHECK(st.goal_rate == 1.0);
  CHECK(st.mean_return == doctest::Approx(0.9));
  CHECK_THROWS(evaluate_policy(fixtures::chain3(), Policy::deterministic({0, 0, 0}, 1),
                               StartDistribution::fixed(0), 10, 0, rng));
}

TEST_CASE("run_level contract") {
  const TabularMDP m = fixtures::corridor(6, 0.9, 0.1);
  const PotentialShaper zero = PotentialShaper::zero(6, 0.9);
  LearnerSpec spec;
  LevelOptions opt;
  opt.budget = 2000;
  opt.timeout = 30;
  opt.start = StartDistribution::fixed(0);
  opt.eval_every = 500;
  std::vector<EvalRecord> records;
  std::vector<std::size_t> checkpoints;
  opt.checkpoint_every = 1000;
  opt.checkpoint = [&](std::size_t step, const Learner&, const Learner&) { checkpoints.push_back(step); };
  const LevelResult r = run_level(m, zero, spec, opt, 1, [&](const EvalRecord& e) { records.push_back(e); });
  CHECK(r.steps == 2000);
  REQUIRE(records.size() == 4);
  CHECK(records.back().step == 2000);
  CHECK(checkpoints == std::vector<std::size_t>{1000, 2000});
  // With a null potential both learners see identical targets.
  CHECK(r.active_q.data() == r.passive_q.data());
  const auto v = policy_evaluation(m, r.policy);
  for (State s = 0; s < 6; ++s) CHECK(r.values[s] == doctest::Approx(v[s]));

  opt.budget = 0;
  CHECK_THROWS(run_level(m, zero, spec, opt, 1));
  opt.budget = 10;
  opt.start = StartDistribution::fixed(5);
  CHECK_THROWS(run_level(m, zero, spec, opt, 1));
}

TEST_CASE("monte carlo value fallback approximates exact evaluation") {
  const TabularMDP m = fixtures::corridor(4, 0.9, 0.1);
  LevelOptions opt;
  opt.budget = 5000;
  opt.timeout = 30;
  opt.monte_carlo_value = true;
  opt.monte_carlo_episodes = 2000;
  const LevelResult r = run_level(m, PotentialShaper::zero(4, 0.9), LearnerSpec{}, opt, 2);
  const auto exact = policy_evaluation(m, r.policy);
  for (State s = 0; s < 3; ++s) CHECK(std::abs(r.values[s] - exact[s]) < 0.03);
}

TEST_CASE("hierarchy runs are reproducible") {
  const RandomInstance inst = random_instance(5, {});
  const Hierarchy h({inst.ground, inst.abstract}, {inst.mapping});
  std::vector<LevelOptions> opts(2);
  opts[0].budget = 3000;
  opts[0].start = StartDistribution::fixed(inst.start);
  opts[1].budget = 1000;
  opts[1].start = StartDistribution::uniform_non_goal(*inst.abstract);
  const auto a = run_hierarchy(h, LearnerSpec{}, opts, ShapingVariant::biased, 9);
  const auto b = run_hierarchy(h, LearnerSpec{}, opts, ShapingVariant::biased, 9);
  CHECK(a.levels[0].passive_q.data() == b.levels[0].passive_q.data());
  CHECK(a.levels[1].values == b.levels[1].values);
  const auto c = run_hierarchy(h, LearnerSpec{}, opts, ShapingVariant::biased, 10);
  CHECK(a.levels[0].passive_q.data() != c.levels[0].passive_q.data());
  // The top level trains without shaping, so its twins agree.
  CHECK(a.levels[1].active_q.data() == a.levels[1].passive_q.data());
}

TEST_CASE("shaping variant names") {
  CHECK(parse_shaping_variant("return_invariant") == ShapingVariant::return_invariant);
  CHECK(std::string(to_string(ShapingVariant::biased)) == "biased");
  CHECK_THROWS(parse_shaping_variant("ri"));
}

TEST_CASE("config parsing") {
  const RunConfig c = parse_config(kSmallConfig);
  CHECK(c.env_name == "4rooms");
  CHECK(c.levels.size() == 1);
  CHECK(c.budget == std::vector<std::size_t>{3000, 500});
  CHECK(c.seed == 4);
  CHECK(c.learner.q.epsilon_end == doctest::Approx(0.1));

  const RunConfig back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));

  auto bad = [](const std::string& from, const std::string& to) {
    std::string text = kSmallConfig;
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), to);
    CHECK_THROWS_AS(parse_config(text), ConfigError);
  };
  bad("\"4rooms\"", "\"nowhere\"");
  bad("\"gamma\": 0.98", "\"gamma\": 1.5");
  bad("[3000, 500]", "[3000]");
  bad("\"q_learning\"", "\"sarsa\"");
  bad("\"biased\"", "\"sideways\"");
  bad("\"failure_prob\": 0.04", "\"failure_prob\": -1");
  bad("\"timeout\": 50}", "\"timeout\": 0}");
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("metrics files survive a truncated last line") {
  std::stringstream in(
      "# env=4rooms\n# abstract_steps=10\n"
      "step,mean_len,std_len,mean_return,source,goal_rate\n"
      "1000,12.5,1,0.8,passive,1\n"
      "2000,11.5,0.5,0.81,active,1\n"
      "3000,11");
  const MetricsFile f = read_metrics(in);
  CHECK(f.metadata.at("env") == "4rooms");
  CHECK(f.metadata.at("abstract_steps") == "10");
  REQUIRE(f.records.size() == 2);
  CHECK(f.records[1].source == PolicySource::active);
  CHECK(f.records[0].mean_len == 12.5);

  std::stringstream bad_header("a,b\n1,2\n");
  CHECK_THROWS_AS(read_metrics(bad_header), ParseError);
}

TEST_CASE("metrics writer output parses back") {
  const fs::path dir = scratch("metrics");
  fs::create_directories(dir);
  const std::string path = (dir / "m.csv").string();
  {
    MetricsWriter w(path, {{"seed", "3"}});
    w.write({0, 100, 1.0 / 3.0, 0.25, 0.5, 0.75, PolicySource::passive});
    w.write({0, 200, 2.0, 0.0, 0.6, 1.0, PolicySource::passive});
  }
  const MetricsFile f = read_metrics_file(path);
  REQUIRE(f.records.size() == 2);
  CHECK(f.records[0].mean_len == 1.0 / 3.0);
  CHECK(f.records[0].goal_rate == 0.75);
  CHECK(f.metadata.at("seed") == "3");
  fs::remove_all(dir);
}

TEST_CASE("aggregation across runs") {
  const std::vector<EvalRecord> a{{0, 10, 20.0, 0, 0.5, 1.0, PolicySource::passive}};
  const std::vector<EvalRecord> b{{0, 10, 30.0, 0, 0.7, 0.0, PolicySource::passive}};
  const auto one = aggregate({a});
  REQUIRE(one.size() == 1);
  CHECK(one[0].mean_len == 20.0);
  CHECK(one[0].std_len == 0.0);
  CHECK(one[0].runs == 1);

  const auto two = aggregate({a, b});
  CHECK(two[0].mean_len == doctest::Approx(25.0));
  CHECK(two[0].std_len == doctest::Approx(5.0));
  CHECK(two[0].std_return == doctest::Approx(0.1));
  CHECK(two[0].goal_rate == doctest::Approx(0.5));

  std::stringstream io;
  write_aggregate(io, two, {{"runs", "2"}});
  const auto back = read_aggregate(io);
  REQUIRE(back.size() == 1);
  CHECK(back[0].mean_len == two[0].mean_len);
  CHECK(back[0].runs == 2);
}

TEST_CASE("experiments and suites write their outputs") {
  const fs::path dir = scratch("suite");
  RunConfig c = parse_config(kSmallConfig);
  c.output_dir = dir.string();
  c.checkpoint_every = 1500;
  const RunSummary s = run_experiment(c);
  CHECK(s.abstract_steps == 500);
  CHECK(s.records.size() == 3);
  const MetricsFile f = read_metrics_file((dir / "metrics.csv").string());
  CHECK(f.records.size() == 3);
  CHECK(f.metadata.at("abstract_steps") == "500");
  CHECK(fs::exists(dir / "checkpoints" / "level0_policy.txt"));
  CHECK(fs::exists(dir / "checkpoints" / "level1_values.txt"));
  CHECK(fs::exists(dir / "checkpoints" / "level0_step1500_passive_q.txt"));
  const Policy p = load_policy((dir / "checkpoints" / "level0_policy.txt").string());
  CHECK(p.actions() == s.result.ground_policy().actions());

  fs::remove_all(dir);
  const SuiteResult three = run_suite(c, 3, 77);
  CHECK(three.completed == 3);
  CHECK(three.table.size() == 3);
  CHECK(fs::exists(dir / "aggregate.csv"));
  CHECK(fs::exists(dir / "run_2" / "metrics.csv"));
  std::ifstream agg(dir / "aggregate.csv");
  CHECK(read_aggregate(agg).size() == 3);

  // Run 0 uses the same stream whatever the suite size.
  const auto run0_of_three = read_metrics_file((dir / "run_0" / "metrics.csv").string()).records;
  fs::remove_all(dir);
  run_suite(c, 1, 77);
  const auto run0_of_one = read_metrics_file((dir / "run_0" / "metrics.csv").string()).records;
  REQUIRE(run0_of_one.size() == run0_of_three.size());
  for (std::size_t i = 0; i < run0_of_one.size(); ++i) CHECK(run0_of_one[i].mean_len == run0_of_three[i].mean_len);
  fs::remove_all(dir);
}

#include "hiershape/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hiershape/io.hpp"

namespace hiershape {

namespace fs = std::filesystem;
using nlohmann::json;

std::string default_data_dir() {
  if (const char* env = std::getenv("HIERSHAPE_DATA")) return env;
  return HIERSHAPE_DATA_DIR;
}

// Config -------------------------------------------------------------------

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must lie in [0, 1]");
}

void check_discount(double g, const std::string& what) {
  if (!(g > 0.0 && g < 1.0)) throw ConfigError(what + " must lie in (0, 1)");
}

json env_sidecar(const std::string& data_dir, const std::string& name) {
  const fs::path path = fs::path(data_dir) / "maps" / (name + ".json");
  std::ifstream f(path);
  if (!f) throw ConfigError("unknown environment '" + name + "' (no " + path.string() + ")");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void validate(const RunConfig& c) {
  if (c.env_name.empty()) throw ConfigError("env.name is required");
  env_sidecar(c.data_dir, c.env_name);
  check_probability(c.failure_prob, "env.failure_prob");
  check_discount(c.gamma, "env.gamma");
  if (c.timeout == 0) throw ConfigError("env.timeout must be positive");
  if (c.scenario_prob) check_probability(*c.scenario_prob, "env.scenario_prob");
  for (std::size_t i = 0; i < c.levels.size(); ++i) {
    const LevelSpec& l = c.levels[i];
    const std::string at = "hierarchy.levels[" + std::to_string(i) + "]";
    if (l.kind != "rooms") throw ConfigError(at + ".kind must be 'rooms'");
    check_probability(l.failure_prob, at + ".failure_prob");
    check_discount(l.gamma, at + ".gamma");
    if (l.timeout == 0) throw ConfigError(at + ".timeout must be positive");
  }
  if (c.levels.size() > 1) throw ConfigError("grid environments support one abstraction level");
  if (c.budget.size() != c.levels.size() + 1) {
    throw ConfigError("budget.steps needs " + std::to_string(c.levels.size() + 1) +
                      " entries (ground first), got " + std::to_string(c.budget.size()));
  }
  for (std::size_t b : c.budget) {
    if (b == 0) throw ConfigError("budget.steps entries must be positive");
  }
  if (c.eval_episodes == 0) throw ConfigError("eval.episodes must be positive");
  if (c.learner.name != "q_learning" && c.learner.name != "delayed_q") {
    throw ConfigError("learner.name must be 'q_learning' or 'delayed_q'");
  }
  try {
    QLearner probe(1, 1, 0.5, c.learner.q, 1, 0);
    DelayedQLearner probe2(1, 1, 0.5, c.learner.delayed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("learner: ") + e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const std::string& data_dir) {
  RunConfig c;
  c.data_dir = data_dir;
  try {
    const json j = json::parse(json_text);
    const json& env = j.at("env");
    c.env_name = env.at("name").get<std::string>();
    c.failure_prob = get_or(env, "failure_prob", c.failure_prob);
    c.gamma = get_or(env, "gamma", c.gamma);
    c.timeout = get_or(env, "timeout", c.timeout);
    if (env.contains("scenario_prob")) c.scenario_prob = env.at("scenario_prob").get<double>();

    if (j.contains("hierarchy")) {
      for (const json& l : j.at("hierarchy").value("levels", json::array())) {
        LevelSpec spec;
        spec.kind = get_or<std::string>(l, "kind", spec.kind);
        spec.failure_prob = get_or(l, "failure_prob", spec.failure_prob);
        spec.gamma = get_or(l, "gamma", spec.gamma);
        spec.timeout = get_or(l, "timeout", spec.timeout);
        for (const json& e : l.value("extra_edges", json::array())) {
          spec.extra_edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
        }
        c.levels.push_back(spec);
      }
    }
    if (j.contains("learner")) {
      const json& l = j.at("learner");
      c.learner.name = get_or<std::string>(l, "name", c.learner.name);
      if (l.contains("alpha")) {
        c.learner.q.alpha_start = get_or(l.at("alpha"), "start", c.learner.q.alpha_start);
        c.learner.q.alpha_end = get_or(l.at("alpha"), "end", c.learner.q.alpha_end);
      }
      if (l.contains("epsilon")) {
        c.learner.q.epsilon_start = get_or(l.at("epsilon"), "start", c.learner.q.epsilon_start);
        c.learner.q.epsilon_end = get_or(l.at("epsilon"), "end", c.learner.q.epsilon_end);
      }
      c.learner.q.q_init = get_or(l, "q_init", c.learner.q.q_init);
      if (l.contains("delayed")) {
        const json& d = l.at("delayed");
        c.learner.delayed.epsilon1 = get_or(d, "epsilon1", c.learner.delayed.epsilon1);
        c.learner.delayed.delta = get_or(d, "delta", c.learner.delayed.delta);
        c.learner.delayed.max_reward = get_or(d, "max_reward", c.learner.delayed.max_reward);
        c.learner.delayed.m = get_or(d, "m", c.learner.delayed.m);
      }
    }
    c.budget = j.at("budget").at("steps").get<std::vector<std::size_t>>();
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      c.eval_every = get_or(e, "every", c.eval_every);
      c.eval_episodes = get_or(e, "episodes", c.eval_episodes);
      const auto source = get_or<std::string>(e, "source", "passive");
      if (source == "passive") c.eval_source = PolicySource::passive;
      else if (source == "active") c.eval_source = PolicySource::active;
      else throw ConfigError("eval.source must be 'passive' or 'active'");
    }
    if (j.contains("shaping")) {
      c.shaping = parse_shaping_variant(get_or<std::string>(j.at("shaping"), "variant", "biased"));
    }
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("output")) {
      c.output_dir = get_or<std::string>(j.at("output"), "dir", "");
      c.checkpoint_every = get_or<std::size_t>(j.at("output"), "checkpoint_every", 0);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["env"] = {{"name", c.env_name}, {"failure_prob", c.failure_prob}, {"gamma", c.gamma},
              {"timeout", c.timeout}};
  if (c.scenario_prob) j["env"]["scenario_prob"] = *c.scenario_prob;
  json levels = json::array();
  for (const LevelSpec& l : c.levels) {
    json edges = json::array();
    for (const auto& [a, b] : l.extra_edges) edges.push_back({a, b});
    levels.push_back({{"kind", l.kind}, {"failure_prob", l.failure_prob}, {"gamma", l.gamma},
                      {"timeout", l.timeout}, {"extra_edges", edges}});
  }
  j["hierarchy"] = {{"levels", levels}};
  j["learner"] = {{"name", c.learner.name},
                  {"alpha", {{"start", c.learner.q.alpha_start}, {"end", c.learner.q.alpha_end}}},
                  {"epsilon", {{"start", c.learner.q.epsilon_start}, {"end", c.learner.q.epsilon_end}}},
                  {"q_init", c.learner.q.q_init},
                  {"delayed", {{"epsilon1", c.learner.delayed.epsilon1},
                               {"delta", c.learner.delayed.delta},
                               {"max_reward", c.learner.delayed.max_reward},
                               {"m", c.learner.delayed.m}}}};
  j["budget"] = {{"steps", c.budget}};
  j["eval"] = {{"every", c.eval_every}, {"episodes", c.eval_episodes},
               {"source", to_string(c.eval_source)}};
  j["shaping"] = {{"variant", to_string(c.shaping)}};
  j["seed"] = c.seed;
  j["output"] = {{"dir", c.output_dir}, {"checkpoint_every", c.checkpoint_every}};
  return j.dump(2);
}

std::vector<std::string> lint(const RunConfig& c) {
  std::vector<std::string> out;
  if (c.learner.name == "q_learning") {
    for (auto& w : lint(c.learner.q)) out.push_back("learner: " + w);
  }
  if (c.shaping != ShapingVariant::none && c.levels.empty()) {
    out.emplace_back("shaping requested without abstraction levels: the run is unshaped");
  }
  if (c.eval_every == 0) out.emplace_back("eval.every is 0: no metrics will be recorded");
  return out;
}

// Environments -------------------------------------------------------------

namespace {

Cell parse_cell(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

std::vector<char> parse_rooms(const json& j) {
  std::vector<char> out;
  for (const json& r : j) {
    const auto s = r.get<std::string>();
    if (s.size() != 1) throw ConfigError("room labels are single characters");
    out.push_back(s[0]);
  }
  return out;
}

LabelingConfig parse_labels(const json& task, std::optional<double> scenario_prob) {
  LabelingConfig labels;
  for (const auto& [room, props] : task.at("room_props").items()) {
    if (room.size() != 1) throw ConfigError("room labels are single characters");
    labels.room_props[room[0]] = props.get<std::vector<std::string>>();
  }
  for (const json& s : task.value("scenario", json::array())) {
    ScenarioProp p;
    p.name = s.at("name").get<std::string>();
    p.requires_prop = s.at("requires").get<std::string>();
    p.probability = scenario_prob.value_or(s.value("probability", 0.2));
    labels.scenario.push_back(p);
  }
  labels.talking = task.value("talking", std::string("Talking"));
  return labels;
}

}  // namespace

Environment build_environment(const RunConfig& c) {
  const json side = env_sidecar(c.data_dir, c.env_name);
  const fs::path maps = fs::path(c.data_dir) / "maps";
  try {
    const GridMap map = GridMap::load((maps / side.at("map").get<std::string>()).string());
    const Cell start = parse_cell(side.at("start"));
    const bool task = side.contains("task");
    const bool interact = side.value("interact", false);

    GridOptions gopt;
    gopt.failure_prob = c.failure_prob;
    gopt.discount = c.gamma;
    gopt.interact = interact;
    if (!task) gopt.goal_rooms = parse_rooms(side.at("goal_rooms"));
    if (map.wall(start)) throw ConfigError("start cell is a wall");
    GridWorld world = grid_to_mdp(map, gopt);
    RoomGraph graph = room_graph(map);

    std::vector<std::string> warnings = map.lint();
    std::vector<MdpPtr> levels;
    std::vector<StateMapping> mappings;
    std::vector<StartDistribution> starts;
    std::vector<std::size_t> timeouts{c.timeout};

    std::optional<TaskAutomaton> automaton;
    std::optional<LabelingConfig> labels;
    std::optional<ProductMDP> ground_product;
    if (task) {
      const json& t = side.at("task");
      automaton = TaskAutomaton::load((maps / t.at("automaton").get<std::string>()).string());
      labels = parse_labels(t, c.scenario_prob);
      ground_product = dfa_product(label_grid(world, *labels), *automaton, *labels);
      levels.push_back(ground_product->mdp);
      starts.push_back(ground_product->start(world.state_of(start), automaton->initial()));
    } else {
      levels.push_back(world.mdp);
      starts.push_back(StartDistribution::fixed(world.state_of(start)));
    }

    for (const LevelSpec& l : c.levels) {
      RoomsOptions ropt;
      ropt.failure_prob = l.failure_prob;
      ropt.discount = l.gamma;
      ropt.interact = interact;
      if (!task) ropt.goal_rooms = gopt.goal_rooms;
      TabularMDP rooms = rooms_abstract_mdp(graph, ropt);
      if (!l.extra_edges.empty()) {
        const std::size_t stride = interact ? 2 : 1;
        std::vector<std::pair<State, State>> edges;
        for (const auto& [from, to] : l.extra_edges) {
          if (from.size() != 1 || to.size() != 1) throw ConfigError("extra_edges use room labels");
          for (std::size_t t = 0; t < stride; ++t) {
            edges.emplace_back(graph.index(from[0]) * stride + t, graph.index(to[0]) * stride);
          }
        }
        rooms = faulty_abstraction(rooms, edges, l.failure_prob);
      }
      auto rooms_ptr = std::make_shared<const TabularMDP>(std::move(rooms));
      if (task) {
        ProductMDP upper = dfa_product(label_rooms(rooms_ptr, graph, interact, *labels), *automaton, *labels);
        mappings.push_back(product_mapping(*ground_product, upper, world.rooms));
        std::vector<std::pair<State, double>> w;
        for (State p = 0; p < upper.mdp->n_states(); ++p) {
          const std::size_t q = upper.q_of(p);
          if (q != automaton->accepting() && q != automaton->sink()) w.emplace_back(p, 1.0);
        }
        levels.push_back(upper.mdp);
        starts.emplace_back(std::move(w));
      } else {
        mappings.push_back(world.rooms);
        levels.push_back(rooms_ptr);
        starts.push_back(StartDistribution::uniform_non_goal(*rooms_ptr));
      }
      timeouts.push_back(l.timeout);
    }
    Environment env{c.env_name, Hierarchy(std::move(levels), std::move(mappings)), std::move(starts),
                    std::move(timeouts), std::move(warnings), std::move(world), std::move(graph)};
    return env;
  } catch (const json::exception& e) {
    throw ConfigError("environment '" + c.env_name + "': " + e.what());
  } catch (const ParseError& e) {
    throw ConfigError("environment '" + c.env_name + "': " + e.what());
  }
}

OptimalReference optimal_reference(const Environment& env, const SolverOptions& solver) {
  const TabularMDP& ground = *env.hierarchy.level(0);
  const OptimalSolution opt = value_iteration(ground, solver);
  return {opt.greedy, truncated_episode_stats(ground, opt.greedy, env.starts[0], env.timeouts[0])};
}

// Metrics ------------------------------------------------------------------

namespace {
constexpr const char* kMetricsHeader = "step,mean_len,std_len,mean_return,source,goal_rate";
constexpr const char* kAggregateHeader = "step,mean_len,std_len,mean_return,std_return,goal_rate,runs";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

/// Lines of a stream; a final line without newline is reported as partial.
std::vector<std::string> complete_lines(std::istream& in) {
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::vector<std::string> lines;
  std::size_t begin = 0;
  for (std::size_t nl = text.find('\n'); nl != std::string::npos; nl = text.find('\n', begin)) {
    lines.push_back(text.substr(begin, nl - begin));
    begin = nl + 1;
  }
  return lines;
}

void parse_metadata(const std::string& line, std::map<std::string, std::string>& meta) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return;
  std::string key = line.substr(1, eq - 1);
  key.erase(0, key.find_first_not_of(' '));
  meta[key] = line.substr(eq + 1);
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path,
                             const std::map<std::string, std::string>& metadata)
    : out_(path, std::ios::out | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open metrics file " + path);
  for (const auto& [k, v] : metadata) out_ << "# " << k << '=' << v << '\n';
  out_ << kMetricsHeader << '\n';
  out_.flush();
}

void MetricsWriter::write(const EvalRecord& r) {
  out_ << r.step << ',' << format_double(r.mean_len) << ',' << format_double(r.std_len) << ','
       << format_double(r.mean_return) << ',' << to_string(r.source) << ','
       << format_double(r.goal_rate) << '\n';
  out_.flush();
}

MetricsFile read_metrics(std::istream& in) {
  MetricsFile out;
  bool header = false;
  for (const std::string& line : complete_lines(in)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      parse_metadata(line, out.metadata);
      continue;
    }
    if (!header) {
      if (line != kMetricsHeader) throw ParseError("unexpected metrics header: " + line);
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 6) throw ParseError("metrics record needs 6 fields: " + line);
    EvalRecord r;
    r.step = static_cast<std::size_t>(std::stoull(f[0]));
    r.mean_len = parse_double(f[1]);
    r.std_len = parse_double(f[2]);
    r.mean_return = parse_double(f[3]);
    if (f[4] == "passive") r.source = PolicySource::passive;
    else if (f[4] == "active") r.source = PolicySource::active;
    else throw ParseError("bad policy source: " + f[4]);
    r.goal_rate = parse_double(f[5]);
    out.records.push_back(r);
  }
  if (!header) throw ParseError("metrics file has no header");
  return out;
}

MetricsFile read_metrics_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_metrics(f);
}

RunSummary run_experiment(const RunConfig& config) {
  const Environment env = build_environment(config);
  RunSummary summary;
  for (std::size_t k = 1; k < config.budget.size(); ++k) summary.abstract_steps += config.budget[k];

  std::optional<MetricsWriter> writer;
  fs::path out_dir;
  if (!config.output_dir.empty()) {
    out_dir = config.output_dir;
    fs::create_directories(out_dir / "checkpoints");
    std::ofstream(out_dir / "config.json") << config_to_json(config) << '\n';
    writer.emplace((out_dir / "metrics.csv").string(),
                   std::map<std::string, std::string>{
                       {"env", config.env_name},
                       {"seed", std::to_string(config.seed)},
                       {"learner", config.learner.name},
                       {"shaping", to_string(config.shaping)},
                       {"abstract_steps", std::to_string(summary.abstract_steps)},
                       {"timeout", std::to_string(config.timeout)},
                       {"eval_episodes", std::to_string(config.eval_episodes)}});
  }

  std::vector<LevelOptions> options(env.hierarchy.n_levels());
  for (std::size_t k = 0; k < options.size(); ++k) {
    LevelOptions& o = options[k];
    o.budget = config.budget[k];
    o.timeout = env.timeouts[k];
    o.start = env.starts[k];
    o.eval_every = k == 0 ? config.eval_every : 0;
    o.eval_episodes = config.eval_episodes;
    o.eval_source = config.eval_source;
    if (writer && config.checkpoint_every > 0) {
      o.checkpoint_every = config.checkpoint_every;
      o.checkpoint = [&, k](std::size_t step, const Learner& active, const Learner& passive) {
        const std::string stem = "level" + std::to_string(k) + "_step" + std::to_string(step);
        save_q((out_dir / "checkpoints" / (stem + "_passive_q.txt")).string(), passive.q_table());
        save_q((out_dir / "checkpoints" / (stem + "_active_q.txt")).string(), active.q_table());
      };
    }
  }
  const EvalSink sink = [&](const EvalRecord& r) {
    summary.records.push_back(r);
    if (writer) writer->write(r);
  };
  summary.result = run_hierarchy(env.hierarchy, config.learner, options, config.shaping, config.seed, sink);

  if (writer) {
    for (const LevelResult& l : summary.result.levels) {
      const fs::path stem = out_dir / "checkpoints" / ("level" + std::to_string(l.level));
      save_q(stem.string() + "_passive_q.txt", l.passive_q);
      save_q(stem.string() + "_active_q.txt", l.active_q);
      save_values(stem.string() + "_values.txt", l.values);
      save_policy(stem.string() + "_policy.txt", l.policy);
    }
  }
  return summary;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<EvalRecord>>& runs) {
  std::vector<AggregateRow> rows;
  if (runs.empty()) return rows;
  std::vector<std::map<std::size_t, const EvalRecord*>> by_step(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const EvalRecord& r : runs[i]) by_step[i][r.step] = &r;
  }
  for (const auto& [step, first] : by_step[0]) {
    std::vector<const EvalRecord*> recs;
    for (const auto& m : by_step) {
      const auto it = m.find(step);
      if (it != m.end()) recs.push_back(it->second);
    }
    if (recs.size() != runs.size()) continue;
    const double n = static_cast<double>(recs.size());
    AggregateRow row;
    row.step = step;
    row.runs = recs.size();
    double sq_len = 0.0, sq_ret = 0.0;
    for (const EvalRecord* r : recs) {
      row.mean_len += r->mean_len / n;
      row.mean_return += r->mean_return / n;
      row.goal_rate += r->goal_rate / n;
    }
    for (const EvalRecord* r : recs) {
      sq_len += (r->mean_len - row.mean_len) * (r->mean_len - row.mean_len);
      sq_ret += (r->mean_return - row.mean_return) * (r->mean_return - row.mean_return);
    }
    row.std_len = std::sqrt(sq_len / n);
    row.std_return = std::sqrt(sq_ret / n);
    rows.push_back(row);
  }
  return rows;
}

void write_aggregate(std::ostream& out, const std::vector<AggregateRow>& rows,
                     const std::map<std::string, std::string>& metadata) {
  for (const auto& [k, v] : metadata) out << "# " << k << '=' << v << '\n';
  out << kAggregateHeader << '\n';
  for (const AggregateRow& r : rows) {
    out << r.step << ',' << format_double(r.mean_len) << ',' << format_double(r.std_len) << ','
        << format_double(r.mean_return) << ',' << format_double(r.std_return) << ','
        << format_double(r.goal_rate) << ',' << r.runs << '\n';
  }
}

std::vector<AggregateRow> read_aggregate(std::istream& in) {
  std::vector<AggregateRow> rows;
  bool header = false;
  for (const std::string& line : complete_lines(in)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kAggregateHeader) throw ParseError("unexpected aggregate header: " + line);
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 7) throw ParseError("aggregate row needs 7 fields: " + line);
    rows.push_back({static_cast<std::size_t>(std::stoull(f[0])), parse_double(f[1]), parse_double(f[2]),
                    parse_double(f[3]), parse_double(f[4]), parse_double(f[5]),
                    static_cast<std::size_t>(std::stoull(f[6]))});
  }
  if (!header) throw ParseError("aggregate table has no header");
  return rows;
}

SuiteResult run_suite(const RunConfig& config, std::size_t n_runs, std::uint64_t master_seed) {
  if (n_runs == 0) throw ConfigError("a suite needs at least one run");
  SuiteResult out;
  std::vector<std::vector<EvalRecord>> runs;
  std::size_t abstract_steps = 0;
  for (std::size_t i = 0; i < n_runs; ++i) {
    RunConfig c = config;
    c.seed = derive_seed(master_seed, i);
    if (!config.output_dir.empty()) c.output_dir = (fs::path(config.output_dir) / ("run_" + std::to_string(i))).string();
    try {
      RunSummary s = run_experiment(c);
      abstract_steps = s.abstract_steps;
      runs.push_back(std::move(s.records));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      out.failures.push_back("run " + std::to_string(i) + ": " + e.what());
    }
  }
  out.completed = runs.size();
  if (runs.empty()) throw std::runtime_error("every run of the suite failed");
  out.table = aggregate(runs);
  if (!config.output_dir.empty()) {
    fs::create_directories(config.output_dir);
    std::ofstream f(fs::path(config.output_dir) / "aggregate.csv");
    write_aggregate(f, out.table,
                    {{"env", config.env_name},
                     {"shaping", to_string(config.shaping)},
                     {"learner", config.learner.name},
                     {"abstract_steps", std::to_string(abstract_steps)},
                     {"runs", std::to_string(out.completed)},
                     {"master_seed", std::to_string(master_seed)}});
  }
  return out;
}

// Theory -------------------------------------------------------------------

std::string to_json_line(const TheoryRecord& r) {
  const Theorem1Report& t = r.theorem;
  json j = {{"instance", r.instance},
            {"seed", r.seed},
            {"nu", t.nu},
            {"epsilon", t.epsilon},
            {"epsilon_is_truncated_lower_bound", true},
            {"slack", t.slack},
            {"horizon", t.horizon},
            {"L", t.loss},
            {"rhs", t.rhs},
            {"refined_rhs", t.refined_rhs},
            {"n_abstract", t.n_abstract},
            {"gamma", t.discount},
            {"holds", t.holds},
            {"lemma2_holds", r.lemma2_holds},
            {"options_agree", r.options_agree},
            {"nu_witness", r.nu_witness},
            {"max_option_gap", r.max_option_gap},
            {"ok", r.ok()},
            {"warnings", t.warnings}};
  return j.dump();
}

TheoryRecord check_instance(const std::string& name, std::uint64_t seed, const AbstractionLayer& layer,
                            double corrupt_w) {
  TheoryRecord rec;
  rec.instance = name;
  rec.seed = seed;
  const TabularMDP& mdp = *layer.lower;
  const OptimalSolution opt = value_iteration(mdp);
  const AbstractValueApprox approx = abstract_value_approx(mdp, layer.mapping, opt.values);
  rec.nu_witness = nu_witness_valid(mdp, layer.mapping, opt.values, approx);

  std::optional<std::map<std::pair<State, State>, double>> corrupted;
  if (corrupt_w != 0.0) {
    corrupted = approx.w;
    for (auto& [key, w] : *corrupted) w += corrupt_w;
  }
  rec.theorem = theorem1_check(layer, std::nullopt, {}, corrupted ? &*corrupted : nullptr);

  const std::size_t horizon = default_horizon(mdp.discount());
  for (State s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_goal(s)) continue;
    const PhiOption option{layer.mapping(s), opt.greedy};
    try {
      const OptionValue v = option_value(mdp, layer.mapping, option, opt.values, s, horizon);
      rec.max_option_gap = std::max(rec.max_option_gap, std::abs(v.exact - v.series));
      const Lemma2Report l2 = lemma2_check(mdp, layer.mapping, option, opt.values, approx, s, horizon);
      rec.lemma2_holds = rec.lemma2_holds && l2.holds;
    } catch (const std::logic_error&) {
      rec.options_agree = false;
    }
  }
  return rec;
}

std::vector<TheoryRecord> theory_sweep(std::uint64_t master_seed, std::size_t count, double corrupt_w) {
  std::vector<TheoryRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(master_seed, i);
    Rng rng(seed);
    RandomInstanceOptions o;
    o.n_states = 4 + rng.below(17);
    o.n_blocks = 2 + rng.below(std::min<std::size_t>(3, o.n_states - 2));
    o.n_actions = 2 + rng.below(3);
    o.discount = 0.5 + 0.4 * rng.uniform();
    o.local = rng.bernoulli(0.5);
    const RandomInstance inst = random_instance(rng.next(), o);
    out.push_back(check_instance("random", seed, inst.layer(), corrupt_w));
  }
  return out;
}

AbstractionLayer named_layer(const std::string& env_name, const std::string& data_dir) {
  RunConfig c;
  c.env_name = env_name;
  c.data_dir = data_dir;
  c.levels.push_back(LevelSpec{});
  c.budget = {1, 1};
  const Environment env = build_environment(c);
  if (env.hierarchy.n_levels() != 2) throw ConfigError("named instance needs one abstraction level");
  return env.hierarchy.layer(0);
}

}  // namespace hiershape

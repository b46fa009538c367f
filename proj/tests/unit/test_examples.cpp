#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "hiershape/harness.hpp"
#include "hiershape/shaping.hpp"
#include "hiershape/solver.hpp"
#include "hiershape/theory.hpp"

using namespace hiershape;
using fixtures::share;
namespace fs = std::filesystem;

namespace {

RunConfig config(const std::string& name) { return load_config(std::string(HIERSHAPE_CONFIG_DIR) + "/" + name + ".json"); }

Environment eight_rooms() { return build_environment(config("fig2b_shaped")); }

bool same_transitions(const TabularMDP& a, const TabularMDP& b) {
  if (a.n_states() != b.n_states() || a.n_actions() != b.n_actions()) return false;
  for (State s = 0; s < a.n_states(); ++s) {
    for (Action x = 0; x < a.n_actions(); ++x) {
      const auto oa = a.outcomes(s, x), ob = b.outcomes(s, x);
      if (oa.size() != ob.size()) return false;
      for (std::size_t i = 0; i < oa.size(); ++i) {
        if (oa[i].next != ob[i].next || oa[i].prob != ob[i].prob || oa[i].reward != ob[i].reward) return false;
      }
    }
  }
  return a.goal_states() == b.goal_states();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("8-rooms ground MDP, partition and goal correspondence") {
  const Environment env = eight_rooms();
  const AbstractionLayer layer = env.hierarchy.layer(0);
  CHECK(validate_goal_mdp(*layer.lower).ok());
  CHECK(check_goal_correspondence(layer).ok());
  const auto blocks = induced_partition(layer.mapping);
  REQUIRE(blocks.size() == 8);
  for (const auto& b : blocks) {
    REQUIRE_FALSE(b.empty());
    const char room = env.grid->map.label(env.grid->cell_of(b.front()));
    for (State s : b) CHECK(env.grid->map.label(env.grid->cell_of(s)) == room);
  }
  CHECK(induced_partition(StateMapping::identity(5)).size() == 5);
  const auto one = induced_partition(StateMapping::constant(5, 0, 1));
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 5);
}

TEST_CASE("solver self-consistency on 4-rooms") {
  const Environment env = build_environment(config("fig2a_q_learning"));
  const TabularMDP& m = *env.hierarchy.level(0);
  const SolverOptions opt;
  const auto sol = value_iteration(m, opt);
  const auto v = policy_evaluation(m, sol.greedy, opt);
  for (State s = 0; s < m.n_states(); ++s) {
    CHECK(std::abs(v[s] - sol.values[s]) <= 2 * opt.tol);
    if (m.is_goal(s)) CHECK(sol.values[s] == 0.0);
  }
  // A policy that never reaches the goal earns nothing.
  const auto stay = policy_evaluation(fixtures::stay_or_go(), Policy::deterministic({1, 1}, 2));
  CHECK(stay[0] == 0.0);
}

TEST_CASE("potentials from abstractions") {
  const RandomInstance inst = random_instance(4, {});
  const AbstractionLayer id(inst.ground, inst.ground, StateMapping::identity(inst.ground->n_states()));
  const auto v = value_iteration(*inst.ground).values;
  CHECK(potential_from_abstraction(id, v).potentials() == v);
  const auto zero = potential_from_abstraction(inst.layer(), ValueTable(inst.abstract->n_states(), 0.0));
  for (double p : zero.potentials()) CHECK(p == 0.0);
  CHECK(zero.delta(0, 1, false) == 0.0);

  const Environment env = eight_rooms();
  const AbstractionLayer layer = env.hierarchy.layer(0);
  const PotentialShaper sh = potential_from_abstraction(layer, value_iteration(*layer.upper).values);
  for (const auto& block : induced_partition(layer.mapping)) {
    for (State s : block) CHECK(sh.potential(s) == sh.potential(block.front()));
  }
}

TEST_CASE("shaping delta examples") {
  CHECK(PotentialShaper({2.0, 3.0}, 0.9).delta(0, 1, false) == doctest::Approx(0.7));
  const PotentialShaper constant({0.4, 0.4, 0.4}, 0.9);
  for (State s = 0; s < 3; ++s) CHECK(constant.delta(s, (s + 1) % 3, false) == doctest::Approx(-0.1 * 0.4));
  CHECK(PotentialShaper({0.5, 0.2}, 0.9, true).delta(0, 1, true) == doctest::Approx(-0.5));
}

TEST_CASE("biased MDP examples") {
  const RandomInstance inst = random_instance(8, {});
  const TabularMDP& m = *inst.ground;
  const TabularMDP same = biased_mdp(m, PotentialShaper::zero(m.n_states(), m.discount()));
  CHECK(same_transitions(same, m));

  // With the optimal values as potential the biased MDP keeps the greedy choices.
  const auto sol = value_iteration(m);
  std::vector<double> phi = sol.values;
  const auto bsol = value_iteration(biased_mdp(m, PotentialShaper(phi, m.discount())));
  for (State s = 0; s < m.n_states(); ++s) {
    if (!m.is_goal(s)) CHECK(bsol.greedy.action(s) == sol.greedy.action(s));
  }

  // On 8-rooms, crossing a doorway towards the goal pays more than crossing back.
  const Environment env = eight_rooms();
  const AbstractionLayer layer = env.hierarchy.layer(0);
  const PotentialShaper sh = potential_from_abstraction(layer, value_iteration(*layer.upper).values);
  const TabularMDP biased = biased_mdp(*layer.lower, sh);
  std::size_t crossings = 0;
  for (State s = 0; s < biased.n_states(); ++s) {
    if (layer.lower->is_goal(s)) continue;
    for (Action a = 0; a < biased.n_actions(); ++a) {
      for (const Outcome& o : biased.outcomes(s, a)) {
        if (layer.mapping(o.next) == layer.mapping(s) || layer.lower->is_goal(o.next)) continue;
        if (sh.potential(o.next) <= sh.potential(s)) continue;
        for (Action b = 0; b < biased.n_actions(); ++b) {
          if (biased.transition(o.next, b, s) > 0.0) {
            CHECK(o.reward > biased.reward(o.next, b, s));
            ++crossings;
          }
        }
      }
    }
  }
  CHECK(crossings > 0);
}

TEST_CASE("return identity examples") {
  EpisodeLog log;
  log.steps = {{0, 0, 0.0, 1}, {1, 0, 0.0, 2}};
  log.timed_out = true;
  const PotentialShaper sh({0.5, 0.1, 0.8}, 0.9);
  const auto r = episode_return_identity_check(log, sh, 0.9);
  CHECK(r.shaped_return - r.raw_return == doctest::Approx(0.81 * 0.8 - 0.5));
  CHECK(std::abs(r.residual) < 1e-12);
  const auto z = episode_return_identity_check(log, PotentialShaper::zero(3, 0.9), 0.9);
  CHECK(z.shaped_return == z.raw_return);
}

TEST_CASE("8-rooms shaped run reaches near-optimal start value") {
  RunConfig c = config("fig2b_shaped");
  c.eval_every = 0;
  const Environment env = build_environment(c);
  const TabularMDP& m = *env.hierarchy.level(0);
  const State start = env.starts[0].support().front().first;
  const double v_star = value_iteration(m).values[start];
  for (std::uint64_t seed : {1, 2}) {
    c.seed = seed;
    const RunSummary s = run_experiment(c);
    CHECK(s.result.levels[0].values[start] >= 0.95 * v_star);
  }
}

TEST_CASE("two-level hierarchy matches the optimum on well-visited states") {
  // Deterministic moves keep optimal and suboptimal actions a clear margin apart.
  RunConfig c = config("fig2a_shaped");
  c.failure_prob = 0.0;
  c.learner.q.epsilon_end = 0.1;
  c.eval_every = 0;
  const Environment env = build_environment(c);
  const TabularMDP& m = *env.hierarchy.level(0);
  const auto opt = value_iteration(m);
  for (std::uint64_t seed : {5, 6}) {
    c.seed = seed;
    const RunSummary s = run_experiment(c);
    const LevelResult& ground = s.result.levels[0];
    std::size_t checked = 0;
    for (State st = 0; st < m.n_states(); ++st) {
      if (m.is_goal(st) || ground.visits[st] < 100) continue;
      ++checked;
      // Equal-valued moves are equally optimal.
      CHECK(opt.q(st, ground.policy.action(st)) >= opt.values[st] - 1e-6);
    }
    CHECK(checked > 50);
    std::size_t total = 0;
    for (std::size_t v : ground.visits) total += v;
    CHECK(total == ground.steps);
  }
}

TEST_CASE("a single-level hierarchy is plain unshaped learning") {
  const TabularMDP m = fixtures::corridor(6, 0.9, 0.1);
  const Hierarchy h({share(m)}, {});
  LevelOptions opt;
  opt.budget = 3000;
  opt.timeout = 30;
  const auto hr = run_hierarchy(h, LearnerSpec{}, {opt}, ShapingVariant::biased, 12);
  const auto lr = run_level(m, PotentialShaper::zero(6, 0.9), LearnerSpec{}, opt, derive_seed(12, 0));
  CHECK(hr.levels[0].passive_q.data() == lr.passive_q.data());
  CHECK(hr.levels[0].active_q.data() == lr.passive_q.data());
}

TEST_CASE("option values of singleton blocks") {
  const TabularMDP chain = fixtures::chain3(0.9);
  const StateMapping id = StateMapping::identity(3);
  const auto v = value_iteration(chain).values;
  const Policy p = Policy::deterministic({0, 0, 0}, 1);
  CHECK(option_value(chain, id, {1, p}, v, 1).exact == doctest::Approx(1.0));
  CHECK(option_value(chain, id, {0, p}, v, 0).exact == doctest::Approx(0.9 * v[1]));

  const auto now = block_exit_distribution(chain, id, 1, p, 10);
  CHECK(now.p[0][2] == doctest::Approx(1.0));
  CHECK(now.residual == 0.0);

  MdpBuilder b(2, 1, 0.9);
  b.add(0, 0, 0, 1.0).add(1, 0, 1, 1.0);
  b.set_goals({1});
  const auto never = block_exit_distribution(b.build(), StateMapping::identity(2), 0, Policy::deterministic({0, 0}, 1), 10);
  for (const auto& row : never.p) {
    for (double x : row) CHECK(x == 0.0);
  }
  CHECK(never.residual == doctest::Approx(1.0));
}

TEST_CASE("option values: linear solve against exit series on random instances") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomInstanceOptions o;
    o.n_states = 10;
    o.n_blocks = 2;
    o.local = seed % 2 == 0;
    const RandomInstance inst = random_instance(1000 + seed, o);
    const TabularMDP& m = *inst.ground;
    const auto v = value_iteration(m).values;
    const Policy uniform = Policy::uniform(m.n_states(), m.n_actions());
    for (State s = 0; s < m.n_states(); ++s) {
      if (m.is_goal(s)) continue;
      const auto ov = option_value(m, inst.mapping, {inst.mapping(s), uniform}, v, s);
      CHECK(std::abs(ov.exact - ov.series) <= ov.tail_bound + 1e-9);
    }
  }
}

TEST_CASE("biased option values in degenerate cases") {
  const RandomInstance inst = random_instance(21, {});
  const TabularMDP& m = *inst.ground;
  const auto sol = value_iteration(m);
  const Policy uniform = Policy::uniform(m.n_states(), m.n_actions());

  const PotentialShaper zero = PotentialShaper::zero(m.n_states(), m.discount());
  const TabularMDP same = biased_mdp(m, zero);
  for (State s = 0; s < m.n_states(); ++s) {
    if (m.is_goal(s)) continue;
    const PhiOption opt{inst.mapping(s), uniform};
    CHECK(biased_option_value(same, m, inst.mapping, opt, zero, sol.values, s).exact ==
          doctest::Approx(option_value(m, inst.mapping, opt, sol.values, s).exact).epsilon(1e-12));
  }

  // Identity mapping with the optimal potential: shaping telescopes to -V*(s).
  const StateMapping id = StateMapping::identity(m.n_states());
  const PotentialShaper vstar(sol.values, m.discount());
  const TabularMDP biased = biased_mdp(m, vstar);
  const ValueTable none(m.n_states(), 0.0);
  for (State s = 0; s < m.n_states(); ++s) {
    if (m.is_goal(s)) continue;
    const PhiOption opt{s, uniform};
    CHECK(biased_option_value(biased, m, id, opt, vstar, none, s).exact ==
          doctest::Approx(option_value(m, id, opt, sol.values, s).exact - sol.values[s]).epsilon(1e-9));
  }
}

TEST_CASE("abstract value approximation and similarity examples") {
  const RandomInstance inst = random_instance(2, {});
  const auto sol = value_iteration(*inst.ground);
  CHECK(abstract_value_approx(*inst.ground, StateMapping::identity(inst.ground->n_states()), sol.values).nu == 0.0);

  // One block, two deterministic policies exiting to different blocks.
  MdpBuilder b(3, 2, 0.9);
  b.add(0, 0, 1, 1.0, 1.0).add(0, 1, 2, 1.0, 1.0);
  for (Action a = 0; a < 2; ++a) b.add(1, a, 1, 1.0).add(2, a, 2, 1.0);
  b.set_goals({1, 2});
  const TabularMDP fork = b.build();
  const auto sim = abstract_similarity(fork, StateMapping::identity(3), Policy::deterministic({0, 0, 0}, 2),
                                       Policy::deterministic({1, 0, 0}, 2), 10);
  CHECK(sim.epsilon == doctest::Approx(1.0));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomInstanceOptions o;
    o.n_states = 12;
    const RandomInstance ri = random_instance(seed, o);
    const auto rs = value_iteration(*ri.ground);
    const Policy uniform = Policy::uniform(12, ri.ground->n_actions());
    const std::size_t k = 20;
    const auto a = abstract_similarity(*ri.ground, ri.mapping, rs.greedy, uniform, k);
    const auto c = abstract_similarity(*ri.ground, ri.mapping, rs.greedy, uniform, 2 * k);
    CHECK(std::abs(a.epsilon - c.epsilon) <= a.slack + 1e-12);
  }
}

TEST_CASE("exploration loss and bound examples") {
  // A potential that is zero everywhere: every upper state is a goal.
  const RandomInstance inst = random_instance(6, {});
  MdpBuilder u(1, 1, 0.9);
  u.add(0, 0, 0, 1.0);
  u.set_goals({0});
  const AbstractionLayer flat(inst.ground, share(u.build()), StateMapping::constant(inst.ground->n_states(), 0, 1));
  CHECK(std::abs(exploration_loss(flat).loss) < 1e-7);

  const AbstractionLayer id(inst.ground, inst.ground, StateMapping::identity(inst.ground->n_states()));
  const auto rep = theorem1_check(id);
  CHECK(rep.holds);
  CHECK(rep.epsilon == 0.0);
  CHECK(rep.nu == 0.0);
  CHECK(std::abs(rep.loss) < 1e-7);

  const auto eight = theorem1_check(named_layer("8rooms"));
  CHECK(eight.holds);
  CHECK(eight.discount == doctest::Approx(0.98));
  CHECK(eight.rhs > 0.0);
}

TEST_CASE("sandwich bounds") {
  SUBCASE("exact W collapses the bounds") {
    const RandomInstance inst = random_instance(9, {});
    const TabularMDP& m = *inst.ground;
    const StateMapping id = StateMapping::identity(m.n_states());
    const auto sol = value_iteration(m);
    const auto approx = abstract_value_approx(m, id, sol.values);
    for (State s = 0; s < m.n_states(); ++s) {
      if (m.is_goal(s)) continue;
      const auto l = lemma2_check(m, id, {s, sol.greedy}, sol.values, approx, s);
      CHECK(l.holds);
      CHECK(l.upper - l.lower <= 2 * l.tail_bound + 1e-9);
      CHECK(l.exact == doctest::Approx(l.lower).epsilon(1e-9));
    }
  }
  SUBCASE("width grows with nu") {
    std::size_t positive = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const RandomInstance inst = random_instance(seed, {});
      const TabularMDP& m = *inst.ground;
      const auto sol = value_iteration(m);
      const auto approx = abstract_value_approx(m, inst.mapping, sol.values);
      if (approx.nu <= 0.0) continue;
      ++positive;
      const double g = m.discount();
      for (State s = 0; s < m.n_states(); ++s) {
        if (m.is_goal(s)) continue;
        const auto l = lemma2_check(m, inst.mapping, {inst.mapping(s), sol.greedy}, sol.values, approx, s);
        CHECK(l.holds);
        CHECK(l.upper - l.lower <= 2 * g * approx.nu / (1 - g) + 2 * l.tail_bound + 1e-9);
      }
    }
    CHECK(positive > 0);
  }
  SUBCASE("singleton block with a deterministic exit") {
    MdpBuilder b(4, 2, 0.9);
    b.add(0, 0, 1, 1.0).add(0, 1, 2, 1.0);
    for (Action a = 0; a < 2; ++a) b.add(1, a, 3, 1.0, 1.0).add(2, a, 3, 1.0, 1.0).add(3, a, 3, 1.0);
    b.set_goals({3});
    const TabularMDP m = b.build();
    const StateMapping phi({0, 1, 1, 2}, 3);
    const ValueTable v{0.0, 0.4, 0.6, 0.0};
    const auto approx = abstract_value_approx(m, phi, v);
    const auto l = lemma2_check(m, phi, {0, Policy::deterministic({0, 0, 0, 0}, 2)}, v, approx, 0);
    CHECK(l.lower == doctest::Approx(0.9 * (0.5 - 0.1)));
    CHECK(l.upper == doctest::Approx(0.9 * (0.5 + 0.1)));
    CHECK(l.exact == doctest::Approx(0.9 * 0.4));
    CHECK(l.holds);
  }
}

TEST_CASE("random instances are deterministic and solvable") {
  const RandomInstance a = random_instance(77, {}), b = random_instance(77, {});
  CHECK(same_transitions(*a.ground, *b.ground));
  CHECK(same_transitions(*a.abstract, *b.abstract));
  CHECK(a.mapping.table() == b.mapping.table());
  CHECK(a.start == b.start);
  std::size_t unreachable = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    RandomInstanceOptions o;
    o.n_states = 4 + seed % 17;
    o.n_blocks = 2 + seed % 3;
    o.local = seed % 2 == 0;
    const RandomInstance inst = random_instance(seed, o);
    unreachable += !can_reach_goal(*inst.ground)[inst.start];
  }
  CHECK(unreachable == 0);
}

TEST_CASE("environment examples") {
  std::stringstream in("#####\n#aab#\n#####\n");
  GridOptions opt;
  opt.failure_prob = 0.0;
  const GridWorld w = grid_to_mdp(GridMap::parse(in), opt);
  for (State s = 0; s < w.mdp->n_states(); ++s) {
    for (Action a = 0; a < w.mdp->n_actions(); ++a) {
      REQUIRE(w.mdp->outcomes(s, a).size() == 1);
      CHECK(w.mdp->outcomes(s, a)[0].prob == 1.0);
    }
  }

  const Environment env = eight_rooms();
  const RoomGraph& g = *env.rooms;
  const TabularMDP& m2 = *env.hierarchy.level(1);
  const auto v = value_iteration(m2).values;
  CHECK(v[g.index('B')] > v[g.index('p')]);
  CHECK(v[g.index('p')] > v[g.index('y')]);
  CHECK(v[g.index('G')] == 0.0);
  CHECK(same_transitions(faulty_abstraction(m2, {}, 0.1), m2));

  RoomsOptions det;
  det.failure_prob = 0.0;
  det.goal_rooms = {'G'};
  const TabularMDP rooms = rooms_abstract_mdp(g, det);
  for (State s = 0; s < rooms.n_states(); ++s) {
    for (Action a = 0; a < rooms.n_actions(); ++a) CHECK(rooms.outcomes(s, a).size() == 1);
  }
}

TEST_CASE("office automaton traces") {
  const TaskAutomaton a = TaskAutomaton::load(default_data_dir() + "/automata/office.txt");
  auto v = [&](std::initializer_list<const char*> props) {
    Valuation x = 0;
    for (const char* p : props) x |= 1u << a.prop_index(p);
    return x;
  };
  std::size_t q = a.initial();
  for (const Valuation x : {v({"Out1"}), v({"In1", "Person1"}), v({"In1", "Person1", "Talking"}), v({"Out2"}),
                            v({"In2", "Person2"}), v({"In2", "Person2", "Talking"})}) {
    q = a.step(q, x);
  }
  CHECK(q == a.accepting());
  // A closed first door jumps straight to the second office.
  CHECK(a.state_names()[a.step(a.initial(), v({"Out1", "Closed1"}))] == "b0");
}

TEST_CASE("experiment examples") {
  RunConfig c = config("fig2a_shaped");
  c.seed = 3;
  CHECK(run_experiment(c).records.size() == 50);

  const fs::path dir = fs::temp_directory_path() / "hiershape_test_examples";
  fs::remove_all(dir);
  c.budget = {5000, 1000};
  c.output_dir = (dir / "a").string();
  run_experiment(c);
  c.output_dir = (dir / "b").string();
  run_experiment(c);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK_FALSE(slurp(dir / "a" / "metrics.csv").empty());
  fs::remove_all(dir);

  // The optimal policy's simulated length matches the exact floor.
  const Environment env = build_environment(c);
  const OptimalReference ref = optimal_reference(env);
  Rng rng(8);
  const auto st = evaluate_policy(*env.hierarchy.level(0), ref.policy, env.starts[0], env.timeouts[0], 4000, rng);
  CHECK(std::abs(st.mean_len - ref.stats.expected_length) < 4 * st.std_len / std::sqrt(4000.0));
}

TEST_CASE("off-policy Q-learning converges from another policy's experience") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    RandomInstanceOptions o;
    o.n_states = 20;
    o.n_actions = 3;
    const RandomInstance inst = random_instance(300 + seed, o);
    const TabularMDP& m = *inst.ground;
    const QTable qstar = value_iteration(m).q;
    const std::size_t steps = 500000;
    QLearningParams p;
    p.alpha_end = 0.01;
    // The behaviour is a separate learner whose exploration never drops below 0.1.
    QLearner behaviour(m.n_states(), m.n_actions(), m.discount(), p, steps, seed);
    QLearner target(m.n_states(), m.n_actions(), m.discount(), p, steps, seed + 100);
    const StartDistribution starts = StartDistribution::uniform_non_goal(m);
    Rng rng(seed);
    State s = starts.sample(rng);
    for (std::size_t t = 0, len = 0; t < steps; ++t) {
      const Action a = behaviour.action(s, t);
      const Sample x = sample_transition(m, s, a, rng);
      const Transition tr{s, a, x.reward, x.next, m.is_goal(x.next)};
      behaviour.update(tr);
      target.update(tr);
      s = x.next;
      if (m.is_goal(s) || ++len == 50) {
        s = starts.sample(rng);
        len = 0;
      }
    }
    double err = 0.0;
    for (State st = 0; st < m.n_states(); ++st) {
      if (m.is_goal(st)) continue;
      for (Action a = 0; a < m.n_actions(); ++a) err = std::max(err, std::abs(target.q_table()(st, a) - qstar(st, a)));
    }
    CHECK(err < 0.05);
  }
}

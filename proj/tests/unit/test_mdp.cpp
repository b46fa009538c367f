#include <doctest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "hiershape/abstraction.hpp"
#include "hiershape/mdp.hpp"
#include "hiershape/rng.hpp"

using namespace hiershape;

TEST_CASE("rng streams are reproducible and seed derivation separates runs") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));

  Rng r(5);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) {
    const auto k = r.below(3);
    REQUIRE(k < 3);
    ++counts[k];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 450);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("builder rejects malformed tables") {
  SUBCASE("row does not sum to one") {
    MdpBuilder b(2, 1, 0.9);
    b.add(0, 0, 1, 0.5).add(1, 0, 1, 1.0);
    CHECK_FALSE(b.check_structure().structural.empty());
    CHECK_THROWS_AS(b.build(), MdpError);
  }
  SUBCASE("index out of range") {
    MdpBuilder b(2, 1, 0.9);
    b.add(0, 0, 5, 1.0).add(1, 0, 1, 1.0);
    CHECK_THROWS_AS(b.build(), MdpError);
  }
  SUBCASE("discount outside (0,1)") {
    MdpBuilder b(1, 1, 1.0);
    b.add(0, 0, 0, 1.0);
    CHECK_THROWS_AS(b.build(), MdpError);
  }
  SUBCASE("conflicting rewards on a merged transition") {
    MdpBuilder b(2, 1, 0.9);
    b.add(0, 0, 1, 0.5, 1.0).add(0, 0, 1, 0.5, 0.0).add(1, 0, 1, 1.0);
    CHECK_THROWS_AS(b.build(), MdpError);
  }
}

TEST_CASE("duplicate transitions merge") {
  MdpBuilder b(2, 1, 0.9);
  b.add(0, 0, 1, 0.25).add(0, 0, 1, 0.75).add(1, 0, 1, 1.0);
  const TabularMDP m = b.build();
  CHECK(m.transition(0, 0, 1) == doctest::Approx(1.0));
  CHECK(m.outcomes(0, 0).size() == 1);
}

TEST_CASE("goal MDP validation") {
  CHECK(validate_goal_mdp(fixtures::chain3()).ok());

  SUBCASE("reward outside goal entry") {
    MdpBuilder b(3, 1, 0.9);
    b.add(0, 0, 1, 1.0, 0.5).add(1, 0, 2, 1.0, 1.0).add(2, 0, 2, 1.0);
    b.set_goals({2});
    const auto r = validate_goal_mdp(b.build());
    CHECK(r.has_violation("reward outside goal entry"));
  }
  SUBCASE("non-absorbing goal") {
    MdpBuilder b(2, 1, 0.9);
    b.add(0, 0, 1, 1.0, 1.0).add(1, 0, 0, 1.0);
    b.set_goals({1});
    CHECK(validate_goal_mdp(b.build()).has_violation("goal not absorbing"));
  }
  SUBCASE("missing goal reward") {
    MdpBuilder b(2, 1, 0.9);
    b.add(0, 0, 1, 1.0, 0.0).add(1, 0, 1, 1.0);
    b.set_goals({1});
    CHECK(validate_goal_mdp(b.build()).has_violation("missing goal-entry reward"));
  }
}

TEST_CASE("policies") {
  const Policy d = Policy::deterministic({1, 0}, 2);
  CHECK(d.action(0) == 1);
  CHECK(d.prob(0, 1) == 1.0);
  CHECK(d.prob(0, 0) == 0.0);
  CHECK_THROWS(Policy::deterministic({2}, 2));
  CHECK_THROWS(Policy::stochastic({{0.5, 0.4}}));

  const Policy u = Policy::uniform(1, 4);
  CHECK(u.prob(0, 3) == doctest::Approx(0.25));
  CHECK_THROWS_AS(u.action(0), std::logic_error);
  Rng rng(3);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 8000; ++i) ++counts[u.sample(0, rng)];
  for (int c : counts) CHECK(std::abs(c - 2000) < 200);
}

TEST_CASE("start distributions") {
  const TabularMDP m = fixtures::corridor(4);
  const auto u = StartDistribution::uniform_non_goal(m);
  CHECK(u.support().size() == 3);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK_FALSE(m.is_goal(u.sample(rng)));
  CHECK_THROWS(StartDistribution({}));
  CHECK_THROWS(StartDistribution({{0, -1.0}}));
}

TEST_CASE("episodes stop at the goal or the timeout") {
  const TabularMDP chain = fixtures::chain3();
  const Policy p = Policy::deterministic({0, 0, 0}, 1);
  PolicyAgent agent(p, 1);
  Rng rng(1);
  const EpisodeLog log = run_episode(chain, agent, 0, 10, rng);
  CHECK(log.length() == 2);
  CHECK(log.terminated_at_goal);
  CHECK_FALSE(log.timed_out);
  CHECK(log.steps.back().reward == 1.0);

  const TabularMDP stay = fixtures::stay_or_go();
  const Policy loiter = Policy::deterministic({1, 1}, 2);
  PolicyAgent a2(loiter, 1);
  const EpisodeLog log2 = run_episode(stay, a2, 0, 7, rng);
  CHECK(log2.length() == 7);
  CHECK(log2.timed_out);
  CHECK_FALSE(log2.terminated_at_goal);

  const EpisodeLog at_goal = run_episode(stay, a2, 1, 7, rng);
  CHECK(at_goal.length() == 0);
  CHECK(at_goal.terminated_at_goal);
  CHECK_THROWS(run_episode(stay, a2, 0, 0, rng));
}

TEST_CASE("sampled transitions follow the table") {
  const TabularMDP m = fixtures::corridor(3, 0.9, 0.3);
  Rng rng(9);
  int moved = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) moved += sample_transition(m, 0, 0, rng).next == 1;
  CHECK(std::abs(moved / double(n) - 0.7) < 0.015);
}

TEST_CASE("abstraction mappings and hierarchies") {
  using fixtures::share;
  const StateMapping phi({0, 0, 1}, 2);
  CHECK(phi.surjective());
  const auto blocks = induced_partition(phi);
  CHECK(blocks[0] == std::vector<State>{0, 1});
  CHECK(blocks[1] == std::vector<State>{2});
  CHECK_THROWS(StateMapping({0, 3}, 2));

  MdpBuilder ub(2, 1, 0.9);
  ub.add(0, 0, 1, 1.0, 1.0).add(1, 0, 1, 1.0);
  ub.set_goals({1});
  const Hierarchy h({share(fixtures::chain3()), share(ub.build())}, {phi});
  CHECK(h.n_levels() == 2);
  CHECK(h.validate().ok());

  SUBCASE("goal correspondence violation is reported") {
    const StateMapping bad({0, 1, 1}, 2);
    const Hierarchy hb({share(fixtures::chain3()), share(ub.build())}, {bad});
    const auto r = hb.validate();
    CHECK_FALSE(r.violations.empty());
  }
  SUBCASE("mapping sizes must match") {
    CHECK_THROWS(Hierarchy({share(fixtures::chain3()), share(ub.build())}, {StateMapping({0, 1}, 2)}));
  }
}

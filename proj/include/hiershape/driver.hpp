#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hiershape/abstraction.hpp"
#include "hiershape/learners.hpp"
#include "hiershape/shaping.hpp"
#include "hiershape/solver.hpp"

namespace hiershape {

enum class PolicySource { passive, active };
const char* to_string(PolicySource source);

enum class ShapingVariant { biased, return_invariant, none };
const char* to_string(ShapingVariant variant);
ShapingVariant parse_shaping_variant(const std::string& name);

/// One frozen-policy evaluation during training.
struct EvalRecord {
  std::size_t level = 0;
  std::size_t step = 0;
  double mean_len = 0.0;
  double std_len = 0.0;
  double mean_return = 0.0;
  double goal_rate = 0.0;
  PolicySource source = PolicySource::passive;
};

using EvalSink = std::function<void(const EvalRecord&)>;

struct EvalStats {
  double mean_len = 0.0;
  double std_len = 0.0;
  double mean_return = 0.0;
  double goal_rate = 0.0;
};

/// Runs `episodes` episodes of a fixed policy; lengths count steps, returns are
/// raw discounted returns.
EvalStats evaluate_policy(const TabularMDP& mdp, const Policy& policy,
                          const StartDistribution& start, std::size_t timeout,
                          std::size_t episodes, Rng& rng);

struct LevelOptions {
  std::size_t budget = 0;
  std::size_t timeout = 100;
  StartDistribution start = StartDistribution::fixed(0);
  /// Evaluate every `eval_every` steps; 0 disables evaluation.
  std::size_t eval_every = 0;
  std::size_t eval_episodes = 10;
  PolicySource eval_source = PolicySource::passive;
  /// Estimate the output value by rollouts instead of exact evaluation.
  bool monte_carlo_value = false;
  std::size_t monte_carlo_episodes = 200;
  SolverOptions solver;
  /// Called every `checkpoint_every` steps with both learners; 0 disables.
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t step, const Learner& active, const Learner& passive)> checkpoint;
};

struct LevelResult {
  std::size_t level = 0;
  Policy policy = Policy::uniform(0, 1);
  ValueTable values;
  Policy active_policy = Policy::uniform(0, 1);
  QTable passive_q;
  QTable active_q;
  std::size_t steps = 0;
  std::size_t episodes = 0;
  /// Training steps taken from each state.
  std::vector<std::size_t> visits;
};

/// Twin-learner training of one level. The active learner picks actions and
/// learns shaped rewards, the passive one learns raw rewards and provides the
/// output policy, whose value is then computed on the known model.
LevelResult run_level(const TabularMDP& mdp, const PotentialShaper& shaper,
                      const LearnerSpec& learner, const LevelOptions& options, std::uint64_t seed,
                      const EvalSink& sink = {}, std::size_t level_index = 0);

struct HierarchyResult {
  /// Indexed by level; level 0 is the ground MDP.
  std::vector<LevelResult> levels;
  std::vector<std::string> warnings;

  const Policy& ground_policy() const { return levels.front().policy; }
};

/// Trains levels from the most abstract down to the ground. `options[i]` belongs to level i.
HierarchyResult run_hierarchy(const Hierarchy& hierarchy, const LearnerSpec& learner,
                              const std::vector<LevelOptions>& options, ShapingVariant variant,
                              std::uint64_t seed, const EvalSink& sink = {});

}  // namespace hiershape

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hiershape/rng.hpp"

namespace hiershape {

using State = std::size_t;
using Action = std::size_t;

/// Absolute tolerance for probability row sums.
inline constexpr double kProbabilityTolerance = 1e-9;

struct Outcome {
  State next;
  double prob;
  double reward;
};

class MdpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Findings of a model check. Structural errors (malformed tables) are kept
/// apart from goal-MDP violations so callers can tell the two failure kinds apart.
struct ValidationReport {
  std::vector<std::string> structural;
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool ok() const { return structural.empty() && violations.empty(); }
  bool has_violation(const std::string& needle) const;
  std::string summary() const;
};

class TabularMDP;

/**
 * Accumulates sparse transitions and produces an immutable TabularMDP.
 *
 * Repeated (s, a, next) entries are merged by summing probabilities; their
 * rewards must agree because reward is a function of (s, a, next).
 */
class MdpBuilder {
 public:
  MdpBuilder(std::size_t n_states, std::size_t n_actions, double discount);

  MdpBuilder& add(State s, Action a, State next, double prob, double reward = 0.0);
  MdpBuilder& set_goals(std::vector<State> goals, bool goal_mdp = true);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  /// Row sums, probability ranges, indices and discount.
  ValidationReport check_structure() const;

  /// Throws MdpError when check_structure() reports anything.
  TabularMDP build() const;

 private:
  friend ValidationReport validate_goal_mdp(const MdpBuilder& builder);

  std::size_t n_states_;
  std::size_t n_actions_;
  double discount_;
  std::vector<std::vector<Outcome>> rows_;
  std::vector<State> goals_;
  bool goal_mdp_ = false;
  std::vector<std::string> add_errors_;
};

/// Finite MDP with sparse stochastic transitions. Immutable after construction.
class TabularMDP {
 public:
  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double discount() const { return discount_; }

  std::span<const Outcome> outcomes(State s, Action a) const {
    const std::size_t row = s * n_actions_ + a;
    return {outcomes_.data() + offsets_[row], offsets_[row + 1] - offsets_[row]};
  }

  double transition(State s, Action a, State next) const;
  double reward(State s, Action a, State next) const;

  bool is_goal(State s) const { return goal_flags_[s] != 0; }
  const std::vector<State>& goal_states() const { return goals_; }
  bool goal_mdp() const { return goal_mdp_; }

  /// Copy with rewards rewritten by `fn(s, a, outcome)`; structure unchanged.
  TabularMDP with_rewards(const std::function<double(State, Action, const Outcome&)>& fn,
                          bool goal_mdp) const;

  std::size_t n_outcomes() const { return outcomes_.size(); }

 private:
  friend class MdpBuilder;
  TabularMDP() = default;

  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  double discount_ = 0.0;
  std::vector<std::size_t> offsets_;
  std::vector<Outcome> outcomes_;
  std::vector<State> goals_;
  std::vector<char> goal_flags_;
  bool goal_mdp_ = false;
};

/// Checks the goal-MDP pattern: unit reward exactly on goal entry, absorbing goals.
ValidationReport validate_goal_mdp(const TabularMDP& mdp);
/// Same, but on raw tables: structural problems are reported first and stop the check.
ValidationReport validate_goal_mdp(const MdpBuilder& builder);

/// Deterministic (state -> action) or stochastic (state -> distribution) policy.
class Policy {
 public:
  static Policy deterministic(std::vector<Action> actions, std::size_t n_actions);
  static Policy stochastic(std::vector<std::vector<double>> rows);
  static Policy uniform(std::size_t n_states, std::size_t n_actions);

  bool is_deterministic() const { return deterministic_; }
  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  /// Action of a deterministic policy.
  Action action(State s) const;
  double prob(State s, Action a) const;
  Action sample(State s, Rng& rng) const;

  const std::vector<Action>& actions() const { return actions_; }

 private:
  Policy() = default;
  bool deterministic_ = true;
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<Action> actions_;
  std::vector<double> probs_;
};

struct Sample {
  double reward;
  State next;
};

Sample sample_transition(const TabularMDP& mdp, State s, Action a, Rng& rng);

/// Distribution over episode start states.
class StartDistribution {
 public:
  static StartDistribution fixed(State s) { return StartDistribution({{s, 1.0}}); }
  /// Uniform over the MDP's non-goal states.
  static StartDistribution uniform_non_goal(const TabularMDP& mdp);
  explicit StartDistribution(std::vector<std::pair<State, double>> weights);

  State sample(Rng& rng) const;
  const std::vector<std::pair<State, double>>& support() const { return weights_; }

 private:
  std::vector<std::pair<State, double>> weights_;
};

struct StepRecord {
  State state;
  Action action;
  double reward;
  State next;
};

struct EpisodeLog {
  State start = 0;
  std::vector<StepRecord> steps;
  bool terminated_at_goal = false;
  bool timed_out = false;

  std::size_t length() const { return steps.size(); }
};

/// Callback interface driven by run_episode.
class EpisodeAgent {
 public:
  virtual ~EpisodeAgent() = default;
  virtual Action act(State s) = 0;
  virtual void observe(const StepRecord& /*step*/, bool /*at_goal*/, bool /*at_timeout*/) {}
  /// Stops the episode early (e.g. an exhausted training budget).
  virtual bool halted() const { return false; }
};

/// Executes a fixed policy; stochastic policies draw from their own stream.
class PolicyAgent : public EpisodeAgent {
 public:
  PolicyAgent(const Policy& policy, std::uint64_t seed) : policy_(policy), rng_(seed) {}
  Action act(State s) override;

 private:
  const Policy& policy_;
  Rng rng_;
};

/// Runs one episode until the first goal entry or `timeout` steps.
/// Throws MdpError if the agent returns an invalid action.
EpisodeLog run_episode(const TabularMDP& mdp, EpisodeAgent& agent, State start,
                       std::size_t timeout, Rng& rng);

}  // namespace hiershape

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "hiershape/mdp.hpp"

namespace hiershape {

using ValueTable = std::vector<double>;

/// Dense per-(state, action) values, row-major by state.
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double init = 0.0)
      : n_states_(n_states), n_actions_(n_actions), data_(n_states * n_actions, init) {}

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  double& operator()(State s, Action a) { return data_[s * n_actions_ + a]; }
  double operator()(State s, Action a) const { return data_[s * n_actions_ + a]; }

  std::span<const double> row(State s) const { return {data_.data() + s * n_actions_, n_actions_}; }

  /// Argmax with ties broken by the lowest action index.
  Action greedy(State s) const;
  double max(State s) const;

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> data_;
};

/// Greedy policy of a Q-table (lowest-index ties).
Policy greedy_policy(const QTable& q);

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  /// Sup-norm distance to the fixed point guaranteed on return.
  double tol = 1e-8;
  /// Exceeding this is a bug canary: discounted sweeps always converge.
  std::size_t max_iterations = 1'000'000;
};

struct OptimalSolution {
  ValueTable values;
  QTable q;
  /// Lowest-index action among those within 2*tol of the row maximum.
  Policy greedy = Policy::uniform(0, 1);
  std::size_t iterations = 0;
};

/// Synchronous (Jacobi) value iteration. Stops when the Bellman residual drops
/// below tol*(1-gamma)/gamma, so that ||V - V*|| < tol.
OptimalSolution value_iteration(const TabularMDP& mdp, const SolverOptions& options = {});

/// Fixed point of the policy Bellman operator, same stopping rule as value_iteration.
ValueTable policy_evaluation(const TabularMDP& mdp, const Policy& policy,
                             const SolverOptions& options = {});

/// One-step lookahead Q(s, a) = sum_s' T (R + gamma V(s')).
QTable q_from_values(const TabularMDP& mdp, const ValueTable& values);

/// Exact statistics of an episode of at most `timeout` steps under `policy`.
struct TruncatedEpisodeStats {
  double expected_length = 0.0;
  double goal_probability = 0.0;
  double expected_return = 0.0;
};

TruncatedEpisodeStats truncated_episode_stats(const TabularMDP& mdp, const Policy& policy,
                                              const StartDistribution& start,
                                              std::size_t timeout);

}  // namespace hiershape

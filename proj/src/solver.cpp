#include "hiershape/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hiershape {

Action QTable::greedy(State s) const {
  const double* r = data_.data() + s * n_actions_;
  Action best = 0;
  for (Action a = 1; a < n_actions_; ++a) {
    if (r[a] > r[best]) best = a;
  }
  return best;
}

double QTable::max(State s) const {
  const double* r = data_.data() + s * n_actions_;
  return *std::max_element(r, r + n_actions_);
}

Policy greedy_policy(const QTable& q) {
  std::vector<Action> actions(q.n_states());
  for (State s = 0; s < q.n_states(); ++s) actions[s] = q.greedy(s);
  return Policy::deterministic(std::move(actions), q.n_actions());
}

namespace {

void validate_options(const SolverOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
}

/// Runs Jacobi sweeps of `backup` until the residual criterion holds.
template <typename Backup>
std::size_t iterate_to_fixed_point(const TabularMDP& mdp, const SolverOptions& options,
                                   ValueTable& values, Backup&& backup) {
  validate_options(options);
  const double gamma = mdp.discount();
  const double threshold = options.tol * (1.0 - gamma) / gamma;
  ValueTable next(values.size());
  double checkpoint_residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    double residual = 0.0;
    for (State s = 0; s < mdp.n_states(); ++s) {
      next[s] = backup(s, values);
      residual = std::max(residual, std::abs(next[s] - values[s]));
    }
    values.swap(next);
    if (residual < threshold) return it;
    if (it % 100 == 0) {
      // The Bellman operator is a gamma-contraction: the residual cannot grow.
      if (residual > checkpoint_residual * (1.0 + 1e-9) + 1e-15) {
        throw std::logic_error("Bellman residual increased: " + std::to_string(residual) +
                               " > " + std::to_string(checkpoint_residual));
      }
      checkpoint_residual = residual;
    }
  }
  throw SolverError("solver did not converge within " + std::to_string(options.max_iterations) +
                    " iterations");
}

double action_value(const TabularMDP& mdp, State s, Action a, const ValueTable& v) {
  const double gamma = mdp.discount();
  double q = 0.0;
  for (const Outcome& o : mdp.outcomes(s, a)) q += o.prob * (o.reward + gamma * v[o.next]);
  return q;
}

}  // namespace

QTable q_from_values(const TabularMDP& mdp, const ValueTable& values) {
  QTable q(mdp.n_states(), mdp.n_actions());
  for (State s = 0; s < mdp.n_states(); ++s) {
    for (Action a = 0; a < mdp.n_actions(); ++a) q(s, a) = action_value(mdp, s, a, values);
  }
  return q;
}

OptimalSolution value_iteration(const TabularMDP& mdp, const SolverOptions& options) {
  OptimalSolution out;
  out.values.assign(mdp.n_states(), 0.0);
  out.iterations = iterate_to_fixed_point(mdp, options, out.values, [&](State s, const ValueTable& v) {
    double best = -std::numeric_limits<double>::infinity();
    for (Action a = 0; a < mdp.n_actions(); ++a) best = std::max(best, action_value(mdp, s, a, v));
    return best;
  });
  out.q = q_from_values(mdp, out.values);
  // Actions whose computed values differ by less than the solver error are ties.
  const double tie = 2.0 * options.tol;
  std::vector<Action> actions(mdp.n_states());
  for (State s = 0; s < mdp.n_states(); ++s) {
    const double best = out.q.max(s);
    Action pick = 0;
    while (out.q(s, pick) < best - tie) ++pick;
    actions[s] = pick;
  }
  out.greedy = Policy::deterministic(std::move(actions), mdp.n_actions());
  return out;
}

ValueTable policy_evaluation(const TabularMDP& mdp, const Policy& policy,
                             const SolverOptions& options) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions()) {
    throw std::invalid_argument("policy_evaluation: policy does not cover the MDP");
  }
  ValueTable values(mdp.n_states(), 0.0);
  if (policy.is_deterministic()) {
    iterate_to_fixed_point(mdp, options, values, [&](State s, const ValueTable& v) {
      return action_value(mdp, s, policy.action(s), v);
    });
  } else {
    iterate_to_fixed_point(mdp, options, values, [&](State s, const ValueTable& v) {
      double total = 0.0;
      for (Action a = 0; a < mdp.n_actions(); ++a) {
        const double p = policy.prob(s, a);
        if (p > 0.0) total += p * action_value(mdp, s, a, v);
      }
      return total;
    });
  }
  return values;
}

TruncatedEpisodeStats truncated_episode_stats(const TabularMDP& mdp, const Policy& policy,
                                              const StartDistribution& start,
                                              std::size_t timeout) {
  TruncatedEpisodeStats stats;
  std::vector<double> mass(mdp.n_states(), 0.0), next(mdp.n_states(), 0.0);
  for (const auto& [s, w] : start.support()) {
    if (!mdp.is_goal(s)) mass[s] += w;
  }
  double discount = 1.0;
  for (std::size_t t = 0; t < timeout; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    double alive = 0.0;
    for (State s = 0; s < mdp.n_states(); ++s) {
      if (mass[s] == 0.0) continue;
      alive += mass[s];
      for (Action a = 0; a < mdp.n_actions(); ++a) {
        const double pa = policy.prob(s, a);
        if (pa == 0.0) continue;
        for (const Outcome& o : mdp.outcomes(s, a)) {
          const double m = mass[s] * pa * o.prob;
          stats.expected_return += discount * m * o.reward;
          if (mdp.is_goal(o.next)) {
            stats.goal_probability += m;
          } else {
            next[o.next] += m;
          }
        }
      }
    }
    if (alive == 0.0) break;
    stats.expected_length += alive;
    mass.swap(next);
    discount *= mdp.discount();
  }
  return stats;
}

}  // namespace hiershape

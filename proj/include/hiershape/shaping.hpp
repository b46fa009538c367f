#pragma once

#include <vector>

#include "hiershape/abstraction.hpp"
#include "hiershape/mdp.hpp"
#include "hiershape/solver.hpp"

namespace hiershape {

/// Potential-based shaping F(s, a, s') = gamma * phi(s') - phi(s).
class PotentialShaper {
 public:
  PotentialShaper(std::vector<double> potential, double discount, bool return_invariant = false);

  /// Null potential over `n` states.
  static PotentialShaper zero(std::size_t n, double discount);

  /// With return_invariant set, terminal steps treat phi(s') as 0. Terminal
  /// means goal entry or the timeout cut-off.
  double delta(State s, State next, bool terminal) const {
    if (terminal && return_invariant_) return -potential_[s];
    return discount_ * potential_[next] - potential_[s];
  }

  double potential(State s) const { return potential_[s]; }
  const std::vector<double>& potentials() const { return potential_; }
  double discount() const { return discount_; }
  bool return_invariant() const { return return_invariant_; }
  std::size_t n_states() const { return potential_.size(); }

 private:
  std::vector<double> potential_;
  double discount_;
  bool return_invariant_;
};

/// phi(s) = upper_values[mapping(s)], using the lower MDP's discount.
PotentialShaper potential_from_abstraction(const AbstractionLayer& layer,
                                           const ValueTable& upper_values,
                                           bool return_invariant = false);

/// Same MDP with shaped rewards. Transitions out of goals keep reward 0, so the
/// goal potential enters exactly once. The result is not a goal MDP.
TabularMDP biased_mdp(const TabularMDP& mdp, const PotentialShaper& shaper);

struct ReturnIdentity {
  double raw_return = 0.0;
  double shaped_return = 0.0;
  double residual = 0.0;
};

/// Discounted raw and shaped returns of a logged episode and the residual of
/// G' - G - (gamma^n phi(s_n) - phi(s_0)), where phi(s_n) counts as 0 for
/// return-invariant shapers that saw a terminal last step.
ReturnIdentity episode_return_identity_check(const EpisodeLog& log, const PotentialShaper& shaper,
                                             double discount);

}  // namespace hiershape

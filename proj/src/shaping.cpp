#include "hiershape/shaping.hpp"

#include <cmath>
#include <stdexcept>

namespace hiershape {

PotentialShaper::PotentialShaper(std::vector<double> potential, double discount,
                                 bool return_invariant)
    : potential_(std::move(potential)), discount_(discount), return_invariant_(return_invariant) {
  for (double p : potential_) {
    if (!std::isfinite(p)) throw std::invalid_argument("potential must be finite");
  }
}

PotentialShaper PotentialShaper::zero(std::size_t n, double discount) {
  return {std::vector<double>(n, 0.0), discount};
}

PotentialShaper potential_from_abstraction(const AbstractionLayer& layer,
                                           const ValueTable& upper_values,
                                           bool return_invariant) {
  if (upper_values.size() != layer.upper->n_states()) {
    throw std::invalid_argument("upper value table size does not match the abstract MDP");
  }
  std::vector<double> phi(layer.lower->n_states());
  for (State s = 0; s < phi.size(); ++s) phi[s] = upper_values[layer.mapping(s)];
  return {std::move(phi), layer.lower->discount(), return_invariant};
}

TabularMDP biased_mdp(const TabularMDP& mdp, const PotentialShaper& shaper) {
  if (shaper.n_states() != mdp.n_states()) {
    throw std::invalid_argument("shaper does not cover the MDP's states");
  }
  return mdp.with_rewards(
      [&](State s, Action, const Outcome& o) {
        if (mdp.is_goal(s)) return 0.0;
        return o.reward + shaper.delta(s, o.next, mdp.is_goal(o.next));
      },
      /*goal_mdp=*/false);
}

ReturnIdentity episode_return_identity_check(const EpisodeLog& log, const PotentialShaper& shaper,
                                             double discount) {
  if (log.steps.empty()) throw std::invalid_argument("identity check needs a nonempty episode");
  ReturnIdentity out;
  const std::size_t n = log.steps.size();
  const bool last_terminal = log.terminated_at_goal || log.timed_out;
  double g = 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    const StepRecord& st = log.steps[t];
    const bool terminal = (t + 1 == n) && last_terminal;
    out.raw_return += g * st.reward;
    out.shaped_return += g * (st.reward + shaper.delta(st.state, st.next, terminal));
    g *= discount;
  }
  const State s0 = log.steps.front().state;
  const State sn = log.steps.back().next;
  const double phi_n = (shaper.return_invariant() && last_terminal) ? 0.0 : shaper.potential(sn);
  out.residual = out.shaped_return - out.raw_return - (g * phi_n - shaper.potential(s0));
  return out;
}

}  // namespace hiershape

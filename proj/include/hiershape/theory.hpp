#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hiershape/abstraction.hpp"
#include "hiershape/mdp.hpp"
#include "hiershape/shaping.hpp"
#include "hiershape/solver.hpp"

namespace hiershape {

/// Smallest K with gamma^K < 1e-8 * (1 - gamma).
std::size_t default_horizon(double discount);

/// An option confined to one block: it runs `policy` inside the block and
/// terminates on the first transition that leaves it.
struct PhiOption {
  State block = 0;
  Policy policy = Policy::uniform(0, 1);
};

struct BlockExitDistribution {
  State source = 0;
  std::size_t horizon = 0;
  /// p[k][b]: stay k steps in the source block, then enter block b. k = 0..horizon.
  std::vector<std::vector<double>> p;
  /// Mass still inside the block after horizon + 1 transitions.
  double residual = 0.0;

  /// Exit mass plus residual; 1 up to rounding.
  double total() const;
};

BlockExitDistribution block_exit_distribution(const TabularMDP& mdp, const StateMapping& mapping,
                                              State s, const Policy& policy, std::size_t horizon);

struct OptionValue {
  /// Linear-system solution over the block.
  double exact = 0.0;
  /// Series truncated after `horizon` exits, and a bound on the omitted tail.
  double series = 0.0;
  double tail_bound = 0.0;
};

/// Value of running the option from s, then acting optimally (v_star) after it
/// exits. Throws std::logic_error if the two methods disagree.
OptionValue option_value(const TabularMDP& mdp, const StateMapping& mapping,
                         const PhiOption& option, const ValueTable& v_star, State s,
                         std::optional<std::size_t> horizon = std::nullopt);

/// Same quantity on a shaped MDP: the exact solve uses the shaped rewards and
/// `continuation` after the exit, the series uses the closed form
/// sum_k gamma^k sum_s' p_k(s') (1{s' goal} + gamma phi(s') + gamma C(s')) - phi(s).
OptionValue biased_option_value(const TabularMDP& biased, const TabularMDP& original,
                                const StateMapping& mapping, const PhiOption& option,
                                const PotentialShaper& shaper, const ValueTable& continuation,
                                State s, std::optional<std::size_t> horizon = std::nullopt);

/// Term-by-term shaping per exit only, charging -phi(block) once per exit and
/// ignoring in-block steps. Kept to document where it departs from the exact value.
double biased_option_value_per_exit_form(const TabularMDP& original, const StateMapping& mapping,
                                         const PhiOption& option, const PotentialShaper& shaper,
                                         const ValueTable& continuation, State s,
                                         std::size_t horizon);

struct AbstractValueApprox {
  double nu = 0.0;
  /// Defined only for block pairs with a reachable frontier.
  std::map<std::pair<State, State>, double> w;
  std::map<std::pair<State, State>, double> pair_nu;
  /// Frontier states attaining the minimum and maximum value of each pair.
  std::map<std::pair<State, State>, std::pair<State, State>> witnesses;
  /// The pair whose half-range equals nu (if any pair exists).
  std::optional<std::pair<State, State>> worst_pair;
};

AbstractValueApprox abstract_value_approx(const TabularMDP& mdp, const StateMapping& mapping,
                                          const ValueTable& v_star);

/// Checks that the worst pair's witnesses are real frontier states whose values
/// are 2*nu apart, so no smaller nu admits any W.
bool nu_witness_valid(const TabularMDP& mdp, const StateMapping& mapping, const ValueTable& v_star,
                      const AbstractValueApprox& approx);

struct AbstractSimilarity {
  double epsilon = 0.0;
  /// Largest residual in-block mass at the horizon, over both policies and all states.
  double slack = 0.0;
  std::size_t horizon = 0;
};

AbstractSimilarity abstract_similarity(const TabularMDP& mdp, const StateMapping& mapping,
                                       const Policy& rho1, const Policy& rho2,
                                       std::size_t horizon);

struct ExplorationLoss {
  double loss = 0.0;
  ValueTable v_star;
  ValueTable v_biased_policy;
  Policy optimal = Policy::uniform(0, 1);
  Policy biased_optimal = Policy::uniform(0, 1);
  std::vector<std::string> warnings;
};

ExplorationLoss exploration_loss(const AbstractionLayer& layer, const SolverOptions& solver = {});

struct Theorem1Report {
  double loss = 0.0;
  double epsilon = 0.0;
  double slack = 0.0;
  double nu = 0.0;
  std::size_t n_abstract = 0;
  double discount = 0.0;
  std::size_t horizon = 0;
  /// 2|S_bar|((eps + slack) + gamma nu)/(1-gamma)^2 plus the solver error of L.
  double rhs = 0.0;
  /// The per-option bound of the proof with W clipped at 1, divided by (1 - gamma).
  double refined_rhs = 0.0;
  bool holds = false;
  std::vector<std::string> warnings;
};

/// `w_override` replaces the computed W table (a test hook for corrupted inputs).
Theorem1Report theorem1_check(const AbstractionLayer& layer, std::optional<std::size_t> horizon = std::nullopt,
                              const SolverOptions& solver = {},
                              const std::map<std::pair<State, State>, double>* w_override = nullptr);

struct Lemma2Report {
  double exact = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double tail_bound = 0.0;
  bool holds = false;
};

/// Sandwiches the option value between the marginalised bounds built from W and nu.
Lemma2Report lemma2_check(const TabularMDP& mdp, const StateMapping& mapping,
                          const PhiOption& option, const ValueTable& v_star,
                          const AbstractValueApprox& approx, State s,
                          std::optional<std::size_t> horizon = std::nullopt);

struct RandomInstance {
  MdpPtr ground;
  MdpPtr abstract;
  StateMapping mapping;
  State start = 0;

  AbstractionLayer layer() const { return {ground, abstract, mapping}; }
};

struct RandomInstanceOptions {
  std::size_t n_states = 10;
  std::size_t n_actions = 2;
  std::size_t n_blocks = 3;
  double discount = 0.9;
  double abstract_failure = 0.1;
  std::size_t max_successors = 3;
  /// Grid-like local dynamics: successors are drawn near the state index.
  bool local = false;
};

/// Connected goal MDP whose last block holds the goals, plus a block-graph
/// abstraction that satisfies goal correspondence by construction.
RandomInstance random_instance(std::uint64_t seed, const RandomInstanceOptions& options);

/// States from which the goal set is reachable under some policy.
std::vector<char> can_reach_goal(const TabularMDP& mdp);

}  // namespace hiershape

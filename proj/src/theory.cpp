#include "hiershape/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hiershape {

std::size_t default_horizon(double discount) {
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie in (0, 1)");
  const double target = 1e-8 * (1.0 - discount);
  std::size_t k = 0;
  double g = 1.0;
  while (!(g < target)) {
    g *= discount;
    ++k;
  }
  return k;
}

double BlockExitDistribution::total() const {
  double t = residual;
  for (const auto& row : p) {
    for (double x : row) t += x;
  }
  return t;
}

namespace {

std::vector<State> block_members(const StateMapping& mapping, State block) {
  std::vector<State> out;
  for (State s = 0; s < mapping.lower_n_states(); ++s) {
    if (mapping(s) == block) out.push_back(s);
  }
  return out;
}

/// Forward occupancy DP inside the block of s. Calls on_exit(k, s', mass) for
/// mass leaving the block on transition k; returns the mass still inside after
/// horizon + 1 transitions.
template <typename OnExit>
double forward_exits(const TabularMDP& mdp, const StateMapping& mapping,
                     const std::vector<State>& members, State s, const Policy& policy,
                     std::size_t horizon, OnExit&& on_exit) {
  const State block = mapping(s);
  std::vector<double> mass(mdp.n_states(), 0.0), next(mdp.n_states(), 0.0);
  mass[s] = 1.0;
  for (std::size_t k = 0; k <= horizon; ++k) {
    bool any = false;
    for (State u : members) {
      const double m = mass[u];
      if (m == 0.0) continue;
      any = true;
      for (Action a = 0; a < mdp.n_actions(); ++a) {
        const double pa = policy.prob(u, a);
        if (pa == 0.0) continue;
        for (const Outcome& o : mdp.outcomes(u, a)) {
          const double w = m * pa * o.prob;
          if (mapping(o.next) == block) {
            next[o.next] += w;
          } else {
            on_exit(k, o.next, w);
          }
        }
      }
    }
    if (!any) return 0.0;
    for (State u : members) {
      mass[u] = next[u];
      next[u] = 0.0;
    }
  }
  double residual = 0.0;
  for (State u : members) residual += mass[u];
  return residual;
}

void check_option(const TabularMDP& mdp, const StateMapping& mapping, const PhiOption& option,
                  State s) {
  if (mapping.lower_n_states() != mdp.n_states()) throw std::invalid_argument("mapping does not cover the MDP");
  if (s >= mdp.n_states() || mapping(s) != option.block) {
    throw std::invalid_argument("state lies outside the option's block");
  }
  if (option.policy.n_states() != mdp.n_states() || option.policy.n_actions() != mdp.n_actions()) {
    throw std::invalid_argument("option policy does not cover the MDP");
  }
}

/// Solves v = sum_in T (r + gamma v) + sum_out T (r + gamma C) over the block.
double solve_block(const TabularMDP& mdp, const StateMapping& mapping,
                   const std::vector<State>& members, const Policy& policy,
                   const ValueTable& continuation, State s) {
  const std::size_t n = members.size();
  std::vector<long> local(mdp.n_states(), -1);
  for (std::size_t i = 0; i < n; ++i) local[members[i]] = static_cast<long>(i);
  const double gamma = mdp.discount();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<long>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const State u = members[i];
    for (Action act = 0; act < mdp.n_actions(); ++act) {
      const double pa = policy.prob(u, act);
      if (pa == 0.0) continue;
      for (const Outcome& o : mdp.outcomes(u, act)) {
        const double w = pa * o.prob;
        b(static_cast<long>(i)) += w * o.reward;
        if (local[o.next] >= 0) {
          a(static_cast<long>(i), local[o.next]) -= gamma * w;
        } else {
          b(static_cast<long>(i)) += w * gamma * continuation[o.next];
        }
      }
    }
  }
  const Eigen::VectorXd v = a.partialPivLu().solve(b);
  return v(local[s]);
}

void require_agreement(const OptionValue& v, const char* what) {
  if (std::abs(v.exact - v.series) > v.tail_bound + 1e-6) {
    throw std::logic_error(std::string(what) + ": linear solve " + std::to_string(v.exact) +
                           " and series " + std::to_string(v.series) + " disagree");
  }
}

bool block_is_goal(const TabularMDP& mdp, const std::vector<State>& members) {
  return !members.empty() && std::all_of(members.begin(), members.end(),
                                          [&](State u) { return mdp.is_goal(u); });
}

bool block_is_mixed(const TabularMDP& mdp, const std::vector<State>& members) {
  const auto goals = std::count_if(members.begin(), members.end(), [&](State u) { return mdp.is_goal(u); });
  return goals != 0 && static_cast<std::size_t>(goals) != members.size();
}

}  // namespace

BlockExitDistribution block_exit_distribution(const TabularMDP& mdp, const StateMapping& mapping,
                                              State s, const Policy& policy, std::size_t horizon) {
  BlockExitDistribution d;
  d.source = s;
  d.horizon = horizon;
  d.p.assign(horizon + 1, std::vector<double>(mapping.upper_n_states(), 0.0));
  const auto members = block_members(mapping, mapping(s));
  d.residual = forward_exits(mdp, mapping, members, s, policy, horizon,
                             [&](std::size_t k, State next, double w) { d.p[k][mapping(next)] += w; });
  if (std::abs(d.total() - 1.0) > 1e-9) {
    throw std::logic_error("block exit distribution lost mass: total " + std::to_string(d.total()));
  }
  return d;
}

OptionValue option_value(const TabularMDP& mdp, const StateMapping& mapping,
                         const PhiOption& option, const ValueTable& v_star, State s,
                         std::optional<std::size_t> horizon) {
  check_option(mdp, mapping, option, s);
  const std::size_t k_max = horizon.value_or(default_horizon(mdp.discount()));
  const auto members = block_members(mapping, option.block);
  const double gamma = mdp.discount();
  OptionValue out;
  out.exact = solve_block(mdp, mapping, members, option.policy, v_star, s);

  std::vector<double> gk(k_max + 1, 1.0);
  for (std::size_t k = 1; k <= k_max; ++k) gk[k] = gk[k - 1] * gamma;
  const double residual = forward_exits(
      mdp, mapping, members, s, option.policy, k_max, [&](std::size_t k, State next, double w) {
        out.series += gk[k] * w * ((mdp.is_goal(next) ? 1.0 : 0.0) + gamma * v_star[next]);
      });
  out.tail_bound = residual * gk[k_max] * (1.0 + gamma) / (1.0 - gamma);
  require_agreement(out, "option value");
  return out;
}

OptionValue biased_option_value(const TabularMDP& biased, const TabularMDP& original,
                                const StateMapping& mapping, const PhiOption& option,
                                const PotentialShaper& shaper, const ValueTable& continuation,
                                State s, std::optional<std::size_t> horizon) {
  check_option(original, mapping, option, s);
  if (biased.n_states() != original.n_states()) throw std::invalid_argument("biased MDP does not match");
  const auto members = block_members(mapping, option.block);
  if (block_is_mixed(original, members)) {
    throw std::invalid_argument("biased option value needs blocks that are all goals or all non-goals");
  }
  const std::size_t k_max = horizon.value_or(default_horizon(original.discount()));
  const double gamma = original.discount();
  OptionValue out;
  out.exact = solve_block(biased, mapping, members, option.policy, continuation, s);
  if (original.is_goal(s)) return out;

  const double phi_block = shaper.potential(s);
  double bound = 0.0;
  for (State u = 0; u < original.n_states(); ++u) {
    bound = std::max(bound, std::abs(shaper.potential(u)) + std::abs(continuation[u]));
  }
  std::vector<double> gk(k_max + 1, 1.0);
  for (std::size_t k = 1; k <= k_max; ++k) gk[k] = gk[k - 1] * gamma;
  const double residual = forward_exits(
      original, mapping, members, s, option.policy, k_max, [&](std::size_t k, State next, double w) {
        const bool goal = original.is_goal(next);
        const double phi_next = (goal && shaper.return_invariant()) ? 0.0 : shaper.potential(next);
        out.series += gk[k] * w * ((goal ? 1.0 : 0.0) + gamma * phi_next + gamma * continuation[next]);
      });
  out.series -= phi_block;
  out.tail_bound = residual * gk[k_max] * gamma * (1.0 + gamma * bound);
  require_agreement(out, "biased option value");
  return out;
}

double biased_option_value_per_exit_form(const TabularMDP& original, const StateMapping& mapping,
                                         const PhiOption& option, const PotentialShaper& shaper,
                                         const ValueTable& continuation, State s,
                                         std::size_t horizon) {
  check_option(original, mapping, option, s);
  if (original.is_goal(s)) return 0.0;
  const auto members = block_members(mapping, option.block);
  const double gamma = original.discount();
  const double phi_block = shaper.potential(s);
  double total = 0.0, gk = 1.0;
  std::size_t last_k = 0;
  forward_exits(original, mapping, members, s, option.policy, horizon,
                [&](std::size_t k, State next, double w) {
                  for (; last_k < k; ++last_k) gk *= gamma;
                  total += gk * w * ((original.is_goal(next) ? 1.0 : 0.0) + gamma * shaper.potential(next) -
                                     phi_block + gamma * continuation[next]);
                });
  return total;
}

AbstractValueApprox abstract_value_approx(const TabularMDP& mdp, const StateMapping& mapping,
                                          const ValueTable& v_star) {
  AbstractValueApprox out;
  std::map<std::pair<State, State>, std::pair<State, State>>& wit = out.witnesses;
  for (State s = 0; s < mdp.n_states(); ++s) {
    for (Action a = 0; a < mdp.n_actions(); ++a) {
      for (const Outcome& o : mdp.outcomes(s, a)) {
        if (o.prob <= 0.0 || mapping(o.next) == mapping(s)) continue;
        const auto key = std::pair{mapping(s), mapping(o.next)};
        auto [it, fresh] = wit.try_emplace(key, o.next, o.next);
        if (fresh) continue;
        if (v_star[o.next] < v_star[it->second.first]) it->second.first = o.next;
        if (v_star[o.next] > v_star[it->second.second]) it->second.second = o.next;
      }
    }
  }
  for (const auto& [key, w] : wit) {
    const double lo = v_star[w.first], hi = v_star[w.second];
    out.w[key] = 0.5 * (lo + hi);
    out.pair_nu[key] = 0.5 * (hi - lo);
    if (!out.worst_pair || out.pair_nu[key] > out.nu) {
      out.nu = out.pair_nu[key];
      out.worst_pair = key;
    }
  }
  return out;
}

bool nu_witness_valid(const TabularMDP& mdp, const StateMapping& mapping, const ValueTable& v_star,
                      const AbstractValueApprox& approx) {
  if (!approx.worst_pair) return approx.nu == 0.0;
  const auto [from, to] = *approx.worst_pair;
  const auto [lo, hi] = approx.witnesses.at(*approx.worst_pair);
  auto on_frontier = [&](State target) {
    if (mapping(target) != to) return false;
    for (State s = 0; s < mdp.n_states(); ++s) {
      if (mapping(s) != from) continue;
      for (Action a = 0; a < mdp.n_actions(); ++a) {
        if (mdp.transition(s, a, target) > 0.0) return true;
      }
    }
    return false;
  };
  // Any W is at least (hi - lo)/2 away from one of the two witnesses.
  return on_frontier(lo) && on_frontier(hi) &&
         std::abs(0.5 * (v_star[hi] - v_star[lo]) - approx.nu) <= 1e-12;
}

AbstractSimilarity abstract_similarity(const TabularMDP& mdp, const StateMapping& mapping,
                                       const Policy& rho1, const Policy& rho2,
                                       std::size_t horizon) {
  if (horizon == 0) throw std::invalid_argument("similarity horizon must be at least 1");
  AbstractSimilarity out;
  out.horizon = horizon;
  const auto blocks = induced_partition(mapping);
  const std::size_t nb = mapping.upper_n_states();
  std::vector<double> p1((horizon + 1) * nb), p2((horizon + 1) * nb);
  for (State s = 0; s < mdp.n_states(); ++s) {
    // Goals are absorbing with zero value: no option starts there.
    if (mdp.is_goal(s)) continue;
    const auto& members = blocks[mapping(s)];
    std::fill(p1.begin(), p1.end(), 0.0);
    std::fill(p2.begin(), p2.end(), 0.0);
    const double r1 = forward_exits(mdp, mapping, members, s, rho1, horizon,
                                    [&](std::size_t k, State n, double w) { p1[k * nb + mapping(n)] += w; });
    const double r2 = forward_exits(mdp, mapping, members, s, rho2, horizon,
                                    [&](std::size_t k, State n, double w) { p2[k * nb + mapping(n)] += w; });
    out.slack = std::max({out.slack, r1, r2});
    for (std::size_t i = 0; i < p1.size(); ++i) out.epsilon = std::max(out.epsilon, std::abs(p1[i] - p2[i]));
  }
  return out;
}

ExplorationLoss exploration_loss(const AbstractionLayer& layer, const SolverOptions& solver) {
  ExplorationLoss out;
  try {
    const ValidationReport r = check_goal_correspondence(layer);
    for (const auto& v : r.violations) out.warnings.push_back("assumption violated: " + v);
  } catch (const std::invalid_argument& e) {
    out.warnings.emplace_back(e.what());
  }
  const OptimalSolution upper = value_iteration(*layer.upper, solver);
  const PotentialShaper shaper = potential_from_abstraction(layer, upper.values);
  const TabularMDP biased = biased_mdp(*layer.lower, shaper);
  const OptimalSolution ground = value_iteration(*layer.lower, solver);
  const OptimalSolution shaped = value_iteration(biased, solver);
  out.v_star = ground.values;
  out.optimal = ground.greedy;
  out.biased_optimal = shaped.greedy;
  out.v_biased_policy = policy_evaluation(*layer.lower, shaped.greedy, solver);
  for (State s = 0; s < out.v_star.size(); ++s) {
    out.loss = std::max(out.loss, std::abs(out.v_star[s] - out.v_biased_policy[s]));
  }
  return out;
}

Theorem1Report theorem1_check(const AbstractionLayer& layer, std::optional<std::size_t> horizon,
                              const SolverOptions& solver,
                              const std::map<std::pair<State, State>, double>* w_override) {
  const TabularMDP& mdp = *layer.lower;
  Theorem1Report rep;
  rep.discount = mdp.discount();
  rep.n_abstract = layer.upper->n_states();
  rep.horizon = horizon.value_or(default_horizon(rep.discount));

  const ExplorationLoss el = exploration_loss(layer, solver);
  rep.loss = el.loss;
  rep.warnings = el.warnings;
  AbstractValueApprox approx = abstract_value_approx(mdp, layer.mapping, el.v_star);
  rep.nu = approx.nu;

  // The (W, nu) certificate must satisfy the frontier condition it claims.
  bool certificate = true;
  if (w_override) approx.w = *w_override;
  for (const auto& [key, wit] : approx.witnesses) {
    const auto it = approx.w.find(key);
    if (it == approx.w.end()) {
      certificate = false;
      rep.warnings.push_back("W undefined on a reachable frontier pair");
      continue;
    }
    const double slack = 1e-12;
    if (std::abs(it->second - el.v_star[wit.first]) > rep.nu + slack ||
        std::abs(it->second - el.v_star[wit.second]) > rep.nu + slack) {
      certificate = false;
      rep.warnings.push_back("W violates the frontier condition on pair (" + std::to_string(key.first) +
                             "," + std::to_string(key.second) + ")");
    }
  }

  const AbstractSimilarity sim =
      abstract_similarity(mdp, layer.mapping, el.optimal, el.biased_optimal, rep.horizon);
  rep.epsilon = sim.epsilon;
  rep.slack = sim.slack;

  const double g = rep.discount;
  const double solver_allowance = 4.0 * solver.tol / (1.0 - g);
  rep.rhs = 2.0 * static_cast<double>(rep.n_abstract) * ((rep.epsilon + rep.slack) + g * rep.nu) /
                ((1.0 - g) * (1.0 - g)) +
            solver_allowance;

  double per_option = 0.0;
  for (State s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_goal(s)) continue;
    double sum = 0.0;
    for (const auto& [key, w] : approx.w) {
      if (key.first != layer.mapping(s)) continue;
      const double goal = layer.upper->is_goal(key.second) ? 1.0 : 0.0;
      sum += (goal + g * std::min(1.0, w)) * (rep.epsilon + rep.slack) / (1.0 - g) +
             2.0 * g * rep.nu / (1.0 - g);
    }
    per_option = std::max(per_option, sum);
  }
  rep.refined_rhs = per_option / (1.0 - g) + solver_allowance;
  rep.holds = certificate && rep.loss <= rep.rhs;
  return rep;
}

Lemma2Report lemma2_check(const TabularMDP& mdp, const StateMapping& mapping,
                          const PhiOption& option, const ValueTable& v_star,
                          const AbstractValueApprox& approx, State s,
                          std::optional<std::size_t> horizon) {
  const std::size_t k_max = horizon.value_or(default_horizon(mdp.discount()));
  Lemma2Report rep;
  rep.exact = option_value(mdp, mapping, option, v_star, s, k_max).exact;
  const auto blocks = induced_partition(mapping);
  const BlockExitDistribution d = block_exit_distribution(mdp, mapping, s, option.policy, k_max);
  const double g = mdp.discount();
  double gk = 1.0;
  for (std::size_t k = 0; k <= k_max; ++k, gk *= g) {
    for (State b = 0; b < d.p[k].size(); ++b) {
      const double p = d.p[k][b];
      if (p == 0.0) continue;
      const auto it = approx.w.find({mapping(s), b});
      if (it == approx.w.end()) throw std::logic_error("exit into a pair without a frontier");
      const double goal = block_is_goal(mdp, blocks[b]) ? 1.0 : 0.0;
      rep.lower += gk * p * (goal + g * (it->second - approx.nu));
      rep.upper += gk * p * (goal + g * (it->second + approx.nu));
    }
  }
  rep.tail_bound = d.residual * gk * (1.0 + g);
  rep.holds = rep.lower - 1e-9 <= rep.exact && rep.exact <= rep.upper + rep.tail_bound + 1e-9;
  return rep;
}

std::vector<char> can_reach_goal(const TabularMDP& mdp) {
  std::vector<std::vector<State>> preds(mdp.n_states());
  for (State s = 0; s < mdp.n_states(); ++s) {
    for (Action a = 0; a < mdp.n_actions(); ++a) {
      for (const Outcome& o : mdp.outcomes(s, a)) {
        if (o.prob > 0.0) preds[o.next].push_back(s);
      }
    }
  }
  std::vector<char> reach(mdp.n_states(), 0);
  std::vector<State> stack(mdp.goal_states().begin(), mdp.goal_states().end());
  for (State g : stack) reach[g] = 1;
  while (!stack.empty()) {
    const State u = stack.back();
    stack.pop_back();
    for (State p : preds[u]) {
      if (!reach[p]) {
        reach[p] = 1;
        stack.push_back(p);
      }
    }
  }
  return reach;
}

RandomInstance random_instance(std::uint64_t seed, const RandomInstanceOptions& opt) {
  const std::size_t n = opt.n_states, na = opt.n_actions, nb = opt.n_blocks;
  if (nb < 2 || nb > n || na == 0 || opt.max_successors == 0) {
    throw std::invalid_argument("random instance: need 2 <= n_blocks <= n_states and positive sizes");
  }
  Rng rng(seed);
  std::vector<State> block(n);
  for (State s = 0; s < n; ++s) block[s] = s < nb ? s : rng.below(nb);
  const State goal_block = nb - 1;
  auto is_goal = [&](State s) { return block[s] == goal_block; };

  // Weighted successor lists per (s, a).
  std::vector<std::vector<std::pair<State, double>>> rows(n * na);
  for (State s = 0; s < n; ++s) {
    if (is_goal(s)) continue;
    for (Action a = 0; a < na; ++a) {
      const std::size_t k = 1 + rng.below(opt.max_successors);
      for (std::size_t j = 0; j < k; ++j) {
        State next;
        if (opt.local) {
          const long off = static_cast<long>(rng.below(5)) - 2;
          next = static_cast<State>((static_cast<long>(s) + off + static_cast<long>(n)) % static_cast<long>(n));
        } else {
          next = rng.below(n);
        }
        rows[s * na + a].emplace_back(next, 0.05 + rng.uniform());
      }
    }
  }
  auto reachable = [&]() {
    std::vector<char> reach(n, 0);
    for (State s = 0; s < n; ++s) reach[s] = is_goal(s);
    for (bool changed = true; changed;) {
      changed = false;
      for (State s = 0; s < n; ++s) {
        if (reach[s]) continue;
        for (Action a = 0; a < na && !reach[s]; ++a) {
          for (const auto& [next, w] : rows[s * na + a]) {
            if (reach[next]) {
              reach[s] = 1;
              changed = true;
              break;
            }
          }
        }
      }
    }
    return reach;
  };
  for (auto reach = reachable(); std::find(reach.begin(), reach.end(), 0) != reach.end(); reach = reachable()) {
    std::vector<State> good;
    for (State s = 0; s < n; ++s) {
      if (reach[s]) good.push_back(s);
    }
    const State s = static_cast<State>(std::find(reach.begin(), reach.end(), 0) - reach.begin());
    rows[s * na + rng.below(na)].emplace_back(good[rng.below(good.size())], 0.05 + rng.uniform());
  }

  MdpBuilder ground(n, na, opt.discount);
  std::vector<State> goals;
  std::vector<std::vector<char>> edge(nb, std::vector<char>(nb, 0));
  for (State s = 0; s < n; ++s) {
    if (is_goal(s)) {
      goals.push_back(s);
      for (Action a = 0; a < na; ++a) ground.add(s, a, s, 1.0);
      continue;
    }
    for (Action a = 0; a < na; ++a) {
      double total = 0.0;
      for (const auto& [next, w] : rows[s * na + a]) total += w;
      for (const auto& [next, w] : rows[s * na + a]) {
        ground.add(s, a, next, w / total, is_goal(next) ? 1.0 : 0.0);
        if (block[next] != block[s]) edge[block[s]][block[next]] = 1;
      }
    }
  }
  ground.set_goals(goals);

  std::size_t up_actions = 1;
  for (const auto& row : edge) up_actions = std::max<std::size_t>(up_actions, std::count(row.begin(), row.end(), 1));
  MdpBuilder upper(nb, up_actions, opt.discount);
  const double f = opt.abstract_failure;
  for (State b = 0; b < nb; ++b) {
    std::vector<State> targets;
    for (State c = 0; c < nb; ++c) {
      if (edge[b][c]) targets.push_back(c);
    }
    for (Action a = 0; a < up_actions; ++a) {
      if (b == goal_block || a >= targets.size()) {
        upper.add(b, a, b, 1.0);
      } else {
        upper.add(b, a, targets[a], 1.0 - f, targets[a] == goal_block ? 1.0 : 0.0);
        upper.add(b, a, b, f);
      }
    }
  }
  upper.set_goals({goal_block});

  return {std::make_shared<const TabularMDP>(ground.build()),
          std::make_shared<const TabularMDP>(upper.build()), StateMapping(block, nb), 0};
}

}  // namespace hiershape

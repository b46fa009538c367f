#include "hiershape/driver.hpp"

#include <cmath>
#include <stdexcept>

namespace hiershape {

const char* to_string(PolicySource source) {
  return source == PolicySource::passive ? "passive" : "active";
}

const char* to_string(ShapingVariant variant) {
  switch (variant) {
    case ShapingVariant::biased: return "biased";
    case ShapingVariant::return_invariant: return "return_invariant";
    case ShapingVariant::none: return "none";
  }
  return "?";
}

ShapingVariant parse_shaping_variant(const std::string& name) {
  if (name == "biased") return ShapingVariant::biased;
  if (name == "return_invariant") return ShapingVariant::return_invariant;
  if (name == "none") return ShapingVariant::none;
  throw std::invalid_argument("unknown shaping variant '" + name + "'");
}

EvalStats evaluate_policy(const TabularMDP& mdp, const Policy& policy,
                          const StartDistribution& start, std::size_t timeout,
                          std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  PolicyAgent agent(policy, rng.next());
  double sum = 0.0, sum_sq = 0.0, ret = 0.0, goals = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const EpisodeLog log = run_episode(mdp, agent, start.sample(rng), timeout, rng);
    const double len = static_cast<double>(log.length());
    sum += len;
    sum_sq += len * len;
    double g = 1.0;
    for (const StepRecord& st : log.steps) {
      ret += g * st.reward;
      g *= mdp.discount();
    }
    if (log.terminated_at_goal) goals += 1.0;
  }
  const double n = static_cast<double>(episodes);
  EvalStats out;
  out.mean_len = sum / n;
  out.std_len = std::sqrt(std::max(0.0, sum_sq / n - out.mean_len * out.mean_len));
  out.mean_return = ret / n;
  out.goal_rate = goals / n;
  return out;
}

namespace {

/// Feeds each environment step to both learners and triggers evaluations.
class TwinAgent final : public EpisodeAgent {
 public:
  TwinAgent(Learner& active, Learner& passive, const PotentialShaper& shaper,
            std::size_t budget, std::function<void(std::size_t)> on_step)
      : active_(active), passive_(passive), shaper_(shaper), budget_(budget),
        on_step_(std::move(on_step)), visits_(shaper.n_states(), 0) {}

  Action act(State s) override { return active_.action(s, step_); }

  void observe(const StepRecord& st, bool at_goal, bool at_timeout) override {
    ++visits_[st.state];
    const double shaped = st.reward + shaper_.delta(st.state, st.next, at_goal || at_timeout);
    active_.update({st.state, st.action, shaped, st.next, at_goal});
    passive_.update({st.state, st.action, st.reward, st.next, at_goal});
    ++step_;
    on_step_(step_);
  }

  bool halted() const override { return step_ >= budget_; }
  std::size_t steps() const { return step_; }
  std::vector<std::size_t> take_visits() { return std::move(visits_); }

 private:
  Learner& active_;
  Learner& passive_;
  const PotentialShaper& shaper_;
  std::size_t budget_;
  std::function<void(std::size_t)> on_step_;
  std::size_t step_ = 0;
  std::vector<std::size_t> visits_;
};

ValueTable monte_carlo_values(const TabularMDP& mdp, const Policy& policy, std::size_t episodes,
                              Rng& rng) {
  // Truncate where the discounted tail drops below 1e-6.
  const auto horizon = static_cast<std::size_t>(std::ceil(std::log(1e-6) / std::log(mdp.discount())));
  PolicyAgent agent(policy, rng.next());
  ValueTable v(mdp.n_states(), 0.0);
  for (State s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_goal(s)) continue;
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      const EpisodeLog log = run_episode(mdp, agent, s, horizon, rng);
      double g = 1.0;
      for (const StepRecord& st : log.steps) {
        total += g * st.reward;
        g *= mdp.discount();
      }
    }
    v[s] = total / static_cast<double>(episodes);
  }
  return v;
}

}  // namespace

LevelResult run_level(const TabularMDP& mdp, const PotentialShaper& shaper,
                      const LearnerSpec& learner, const LevelOptions& options, std::uint64_t seed,
                      const EvalSink& sink, std::size_t level_index) {
  if (options.budget == 0) throw std::invalid_argument("level budget must be at least 1 step");
  if (shaper.n_states() != mdp.n_states()) {
    throw std::invalid_argument("shaper does not cover the level's states");
  }
  auto active = make_learner(learner, mdp.n_states(), mdp.n_actions(), mdp.discount(),
                             options.budget, derive_seed(seed, 0));
  auto passive = make_learner(learner, mdp.n_states(), mdp.n_actions(), mdp.discount(),
                              options.budget, derive_seed(seed, 1));
  Rng env_rng(derive_seed(seed, 2));
  Rng eval_rng(derive_seed(seed, 3));

  auto on_step = [&](std::size_t step) {
    if (options.checkpoint_every != 0 && options.checkpoint && step % options.checkpoint_every == 0) {
      options.checkpoint(step, *active, *passive);
    }
    if (options.eval_every == 0 || step % options.eval_every != 0 || !sink) return;
    const Learner& source = options.eval_source == PolicySource::passive ? *passive : *active;
    const EvalStats stats = evaluate_policy(mdp, source.output(), options.start, options.timeout,
                                            options.eval_episodes, eval_rng);
    sink({level_index, step, stats.mean_len, stats.std_len, stats.mean_return, stats.goal_rate,
          options.eval_source});
  };

  TwinAgent agent(*active, *passive, shaper, options.budget, on_step);
  LevelResult result;
  result.level = level_index;
  while (!agent.halted() && !passive->stop_condition()) {
    const State start = options.start.sample(env_rng);
    if (mdp.is_goal(start)) throw std::invalid_argument("start distribution places mass on a goal");
    run_episode(mdp, agent, start, options.timeout, env_rng);
    ++result.episodes;
  }
  result.steps = agent.steps();
  result.visits = agent.take_visits();
  result.policy = passive->output();
  result.active_policy = active->output();
  result.passive_q = passive->q_table();
  result.active_q = active->q_table();
  if (options.monte_carlo_value) {
    Rng mc_rng(derive_seed(seed, 4));
    result.values = monte_carlo_values(mdp, result.policy, options.monte_carlo_episodes, mc_rng);
  } else {
    result.values = policy_evaluation(mdp, result.policy, options.solver);
  }
  return result;
}

HierarchyResult run_hierarchy(const Hierarchy& hierarchy, const LearnerSpec& learner,
                              const std::vector<LevelOptions>& options, ShapingVariant variant,
                              std::uint64_t seed, const EvalSink& sink) {
  const std::size_t n = hierarchy.n_levels();
  if (options.size() != n) throw std::invalid_argument("need one level option set per level");
  HierarchyResult out;
  const ValidationReport report = hierarchy.validate();
  for (const auto& m : report.structural) throw MdpError("hierarchy: " + m);
  out.warnings = report.violations;
  out.warnings.insert(out.warnings.end(), report.warnings.begin(), report.warnings.end());

  out.levels.resize(n);
  for (std::size_t k = n; k-- > 0;) {
    const TabularMDP& mdp = *hierarchy.level(k);
    const bool top = (k + 1 == n);
    const PotentialShaper shaper =
        (top || variant == ShapingVariant::none)
            ? PotentialShaper::zero(mdp.n_states(), mdp.discount())
            : potential_from_abstraction(hierarchy.layer(k), out.levels[k + 1].values,
                                         variant == ShapingVariant::return_invariant);
    out.levels[k] = run_level(mdp, shaper, learner, options[k], derive_seed(seed, k), sink, k);
  }
  return out;
}

}  // namespace hiershape

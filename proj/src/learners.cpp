#include "hiershape/learners.hpp"

#include <stdexcept>

namespace hiershape {

std::vector<std::string> lint(const QLearningParams& p) {
  std::vector<std::string> out;
  if (p.epsilon_end <= 0.0) {
    out.emplace_back("epsilon decays to 0: exploration stops being positive on every action");
  }
  if (p.alpha_end <= 0.0) out.emplace_back("alpha decays to 0: learning stops at the horizon");
  return out;
}

namespace {

void check_params(const QLearningParams& p) {
  auto in = [](double x, double lo, double hi) { return x >= lo && x <= hi; };
  if (!in(p.alpha_start, 0.0, 1.0) || !in(p.alpha_end, 0.0, 1.0) || p.alpha_start <= 0.0) {
    throw std::invalid_argument("alpha must lie in (0, 1]");
  }
  if (!in(p.epsilon_start, 0.0, 1.0) || !in(p.epsilon_end, 0.0, 1.0)) {
    throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
  if (p.alpha_end > p.alpha_start || p.epsilon_end > p.epsilon_start) {
    throw std::invalid_argument("schedules must be non-increasing");
  }
}

}  // namespace

QLearner::QLearner(std::size_t n_states, std::size_t n_actions, double discount,
                   const QLearningParams& params, std::size_t horizon, std::uint64_t seed)
    : QLearner(QTable(n_states, n_actions, params.q_init), discount, params, horizon, seed) {}

QLearner::QLearner(QTable initial_q, double discount, const QLearningParams& params,
                   std::size_t horizon, std::uint64_t seed)
    : q_(std::move(initial_q)),
      discount_(discount),
      alpha_{params.alpha_start, params.alpha_end, std::max<std::size_t>(horizon, 1)},
      epsilon_{params.epsilon_start, params.epsilon_end, std::max<std::size_t>(horizon, 1)},
      rng_(seed) {
  check_params(params);
  if (q_.n_actions() == 0) throw std::invalid_argument("learner needs at least one action");
}

Action QLearner::action(State s, std::size_t step) {
  if (rng_.uniform() < epsilon_.at(step)) return rng_.below(q_.n_actions());
  return q_.greedy(s);
}

void QLearner::update(const Transition& t) {
  const double bootstrap = t.terminal ? 0.0 : q_.max(t.next);
  const double target = t.reward + discount_ * bootstrap;
  double& q = q_(t.state, t.action);
  q += alpha_.at(updates_) * (target - q);
  ++updates_;
}

DelayedQLearner::DelayedQLearner(std::size_t n_states, std::size_t n_actions, double discount,
                                 const DelayedQParams& params)
    : q_(n_states, n_actions, params.max_reward / (1.0 - discount)),
      discount_(discount),
      params_(params),
      accum_(n_states * n_actions, 0.0),
      count_(n_states * n_actions, 0),
      stamp_(n_states * n_actions, 0),
      learn_(n_states * n_actions, 1) {
  if (params.m == 0) throw std::invalid_argument("delayed Q: m must be positive");
  if (!(params.epsilon1 > 0.0)) throw std::invalid_argument("delayed Q: epsilon1 must be positive");
}

Action DelayedQLearner::action(State s, std::size_t) { return q_.greedy(s); }

void DelayedQLearner::update(const Transition& t) {
  ++time_;
  const std::size_t i = index(t.state, t.action);
  if (learn_[i]) {
    accum_[i] += t.reward + (t.terminal ? 0.0 : discount_ * q_.max(t.next));
    if (++count_[i] == params_.m) {
      const double estimate = accum_[i] / static_cast<double>(params_.m);
      double& q = q_(t.state, t.action);
      if (q - estimate >= 2.0 * params_.epsilon1) {
        q = estimate + params_.epsilon1;
        last_success_ = time_;
        ++successes_;
      } else if (stamp_[i] >= last_success_) {
        learn_[i] = 0;
      }
      stamp_[i] = time_;
      accum_[i] = 0.0;
      count_[i] = 0;
    }
  } else if (stamp_[i] < last_success_) {
    learn_[i] = 1;
  }
}

std::unique_ptr<Learner> make_learner(const LearnerSpec& spec, std::size_t n_states,
                                      std::size_t n_actions, double discount, std::size_t horizon,
                                      std::uint64_t seed) {
  if (spec.name == "q_learning") {
    return std::make_unique<QLearner>(n_states, n_actions, discount, spec.q, horizon, seed);
  }
  if (spec.name == "delayed_q") {
    return std::make_unique<DelayedQLearner>(n_states, n_actions, discount, spec.delayed);
  }
  throw std::invalid_argument("unknown learner '" + spec.name + "'");
}

}  // namespace hiershape

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hiershape/mdp.hpp"
#include "hiershape/rng.hpp"
#include "hiershape/solver.hpp"

namespace hiershape {

struct Transition {
  State state;
  Action action;
  double reward;
  State next;
  /// True only on goal entry. Timeouts bootstrap like any other step.
  bool terminal;
};

/// Common contract of the tabular learners used as active and passive learners.
class Learner {
 public:
  virtual ~Learner() = default;

  /// Exploration policy at global step `step`.
  virtual Action action(State s, std::size_t step) = 0;
  virtual void update(const Transition& t) = 0;
  virtual const QTable& q_table() const = 0;
  virtual bool stop_condition() const { return false; }

  Action greedy_action(State s) const { return q_table().greedy(s); }
  /// Greedy policy of the current Q-table, lowest-index ties.
  Policy output() const { return greedy_policy(q_table()); }
};

/// Linear interpolation from `start` to `end` over `horizon` steps, then flat.
struct LinearSchedule {
  double start = 1.0;
  double end = 1.0;
  std::size_t horizon = 1;

  double at(std::size_t t) const {
    if (t >= horizon) return end;
    return start + (end - start) * (static_cast<double>(t) / static_cast<double>(horizon));
  }
};

struct QLearningParams {
  double alpha_start = 0.1;
  double alpha_end = 0.02;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  /// Uniform initial Q value, unless `initial_q` is given.
  double q_init = 0.0;
};

/// Configuration findings that are legal but worth flagging.
std::vector<std::string> lint(const QLearningParams& params);

class QLearner final : public Learner {
 public:
  /// `horizon` is the number of steps over which both schedules decay.
  QLearner(std::size_t n_states, std::size_t n_actions, double discount,
           const QLearningParams& params, std::size_t horizon, std::uint64_t seed);
  /// Starts from an explicit Q-table instead of params.q_init.
  QLearner(QTable initial_q, double discount, const QLearningParams& params, std::size_t horizon,
           std::uint64_t seed);

  Action action(State s, std::size_t step) override;
  void update(const Transition& t) override;
  const QTable& q_table() const override { return q_; }

  double epsilon_at(std::size_t step) const { return epsilon_.at(step); }
  double alpha_at(std::size_t update) const { return alpha_.at(update); }
  std::size_t updates() const { return updates_; }

 private:
  QTable q_;
  double discount_;
  LinearSchedule alpha_;
  LinearSchedule epsilon_;
  Rng rng_;
  std::size_t updates_ = 0;
};

struct DelayedQParams {
  double epsilon1 = 0.01;
  /// Only enters the theoretical choice of m; kept for completeness.
  double delta = 0.1;
  double max_reward = 1.0;
  std::size_t m = 15;
};

/// Delayed Q-learning (Strehl et al., 2006): optimistic initialisation, greedy
/// action choice, and batched updates every m samples of a pair.
class DelayedQLearner final : public Learner {
 public:
  DelayedQLearner(std::size_t n_states, std::size_t n_actions, double discount,
                  const DelayedQParams& params);

  Action action(State s, std::size_t step) override;
  void update(const Transition& t) override;
  const QTable& q_table() const override { return q_; }

  std::size_t pending_samples(State s, Action a) const { return count_[index(s, a)]; }
  bool learning(State s, Action a) const { return learn_[index(s, a)] != 0; }
  std::size_t successful_updates() const { return successes_; }

 private:
  std::size_t index(State s, Action a) const { return s * q_.n_actions() + a; }

  QTable q_;
  double discount_;
  DelayedQParams params_;
  std::vector<double> accum_;
  std::vector<std::size_t> count_;
  std::vector<std::size_t> stamp_;
  std::vector<char> learn_;
  std::size_t time_ = 0;
  std::size_t last_success_ = 0;
  std::size_t successes_ = 0;
};

struct LearnerSpec {
  std::string name = "q_learning";  // q_learning | delayed_q
  QLearningParams q;
  DelayedQParams delayed;
};

/// Builds a learner for an MDP of the given shape. `horizon` is the level's step budget.
std::unique_ptr<Learner> make_learner(const LearnerSpec& spec, std::size_t n_states,
                                      std::size_t n_actions, double discount, std::size_t horizon,
                                      std::uint64_t seed);

}  // namespace hiershape

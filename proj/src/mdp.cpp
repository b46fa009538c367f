#include "hiershape/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hiershape {

namespace {

std::string at(State s, Action a) {
  std::ostringstream os;
  os << "(s=" << s << ", a=" << a << ")";
  return os.str();
}

void check_goal_pattern(std::size_t n_states, std::size_t n_actions,
                        const std::vector<char>& goal,
                        const std::function<std::span<const Outcome>(State, Action)>& row,
                        ValidationReport& report) {
  bool any_goal = std::any_of(goal.begin(), goal.end(), [](char g) { return g != 0; });
  if (!any_goal) report.warnings.push_back("empty goal set");
  for (State s = 0; s < n_states; ++s) {
    for (Action a = 0; a < n_actions; ++a) {
      for (const Outcome& o : row(s, a)) {
        if (o.prob <= 0.0) continue;
        const bool entry = !goal[s] && goal[o.next];
        if (entry && o.reward != 1.0) {
          report.violations.push_back("missing goal-entry reward at " + at(s, a) + " -> " +
                                      std::to_string(o.next));
        } else if (!entry && o.reward != 0.0) {
          report.violations.push_back("reward outside goal entry at " + at(s, a) + " -> " +
                                      std::to_string(o.next));
        }
        if (goal[s] && !goal[o.next]) {
          report.violations.push_back("goal not absorbing: " + std::to_string(s) + " -> " +
                                      std::to_string(o.next));
        }
      }
    }
  }
}

}  // namespace

bool ValidationReport::has_violation(const std::string& needle) const {
  auto contains = [&](const std::string& m) { return m.find(needle) != std::string::npos; };
  return std::any_of(violations.begin(), violations.end(), contains) ||
         std::any_of(structural.begin(), structural.end(), contains);
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& m : structural) os << "structural: " << m << '\n';
  for (const auto& m : violations) os << "violation: " << m << '\n';
  for (const auto& m : warnings) os << "warning: " << m << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------

MdpBuilder::MdpBuilder(std::size_t n_states, std::size_t n_actions, double discount)
    : n_states_(n_states), n_actions_(n_actions), discount_(discount),
      rows_(n_states * n_actions) {}

MdpBuilder& MdpBuilder::add(State s, Action a, State next, double prob, double reward) {
  if (s >= n_states_ || a >= n_actions_ || next >= n_states_) {
    add_errors_.push_back("index out of range in transition " + at(s, a) + " -> " +
                          std::to_string(next));
    return *this;
  }
  auto& row = rows_[s * n_actions_ + a];
  for (Outcome& o : row) {
    if (o.next == next) {
      if (o.reward != reward) {
        add_errors_.push_back("conflicting rewards for " + at(s, a) + " -> " +
                              std::to_string(next));
      }
      o.prob += prob;
      return *this;
    }
  }
  row.push_back({next, prob, reward});
  return *this;
}

MdpBuilder& MdpBuilder::set_goals(std::vector<State> goals, bool goal_mdp) {
  std::sort(goals.begin(), goals.end());
  goals.erase(std::unique(goals.begin(), goals.end()), goals.end());
  goals_ = std::move(goals);
  goal_mdp_ = goal_mdp;
  return *this;
}

ValidationReport MdpBuilder::check_structure() const {
  ValidationReport report;
  report.structural = add_errors_;
  if (n_states_ == 0) report.structural.push_back("no states");
  if (n_actions_ == 0) report.structural.push_back("no actions");
  if (!(discount_ > 0.0 && discount_ < 1.0)) {
    report.structural.push_back("discount must lie in (0,1)");
  }
  for (State g : goals_) {
    if (g >= n_states_) report.structural.push_back("goal index out of range");
  }
  for (State s = 0; s < n_states_; ++s) {
    for (Action a = 0; a < n_actions_; ++a) {
      double sum = 0.0;
      for (const Outcome& o : rows_[s * n_actions_ + a]) {
        if (!(o.prob >= 0.0 && o.prob <= 1.0 + kProbabilityTolerance)) {
          report.structural.push_back("probability outside [0,1] at " + at(s, a));
        }
        if (!std::isfinite(o.reward)) {
          report.structural.push_back("non-finite reward at " + at(s, a));
        }
        sum += o.prob;
      }
      if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        std::ostringstream os;
        os << "row sum " << sum << " != 1 at " << at(s, a);
        report.structural.push_back(os.str());
      }
    }
  }
  return report;
}

TabularMDP MdpBuilder::build() const {
  ValidationReport report = check_structure();
  if (!report.structural.empty()) throw MdpError("malformed MDP:\n" + report.summary());

  TabularMDP mdp;
  mdp.n_states_ = n_states_;
  mdp.n_actions_ = n_actions_;
  mdp.discount_ = discount_;
  mdp.offsets_.reserve(rows_.size() + 1);
  mdp.offsets_.push_back(0);
  for (const auto& row : rows_) {
    for (const Outcome& o : row) {
      if (o.prob > 0.0) mdp.outcomes_.push_back(o);
    }
    mdp.offsets_.push_back(mdp.outcomes_.size());
  }
  mdp.goals_ = goals_;
  mdp.goal_flags_.assign(n_states_, 0);
  for (State g : goals_) mdp.goal_flags_[g] = 1;
  mdp.goal_mdp_ = goal_mdp_;
  return mdp;
}

// ---------------------------------------------------------------------------

double TabularMDP::transition(State s, Action a, State next) const {
  for (const Outcome& o : outcomes(s, a)) {
    if (o.next == next) return o.prob;
  }
  return 0.0;
}

double TabularMDP::reward(State s, Action a, State next) const {
  for (const Outcome& o : outcomes(s, a)) {
    if (o.next == next) return o.reward;
  }
  return 0.0;
}

TabularMDP TabularMDP::with_rewards(
    const std::function<double(State, Action, const Outcome&)>& fn, bool goal_mdp) const {
  TabularMDP copy = *this;
  copy.goal_mdp_ = goal_mdp;
  for (State s = 0; s < n_states_; ++s) {
    for (Action a = 0; a < n_actions_; ++a) {
      const std::size_t row = s * n_actions_ + a;
      for (std::size_t i = offsets_[row]; i < offsets_[row + 1]; ++i) {
        copy.outcomes_[i].reward = fn(s, a, outcomes_[i]);
      }
    }
  }
  return copy;
}

ValidationReport validate_goal_mdp(const TabularMDP& mdp) {
  ValidationReport report;
  std::vector<char> goal(mdp.n_states(), 0);
  for (State g : mdp.goal_states()) goal[g] = 1;
  check_goal_pattern(mdp.n_states(), mdp.n_actions(), goal,
                     [&](State s, Action a) { return mdp.outcomes(s, a); }, report);
  return report;
}

ValidationReport validate_goal_mdp(const MdpBuilder& builder) {
  ValidationReport report = builder.check_structure();
  if (!report.structural.empty()) return report;
  std::vector<char> goal(builder.n_states_, 0);
  for (State g : builder.goals_) goal[g] = 1;
  check_goal_pattern(builder.n_states_, builder.n_actions_, goal,
                     [&](State s, Action a) {
                       const auto& row = builder.rows_[s * builder.n_actions_ + a];
                       return std::span<const Outcome>(row.data(), row.size());
                     },
                     report);
  return report;
}

// ---------------------------------------------------------------------------

Policy Policy::deterministic(std::vector<Action> actions, std::size_t n_actions) {
  for (Action a : actions) {
    if (a >= n_actions) throw std::invalid_argument("policy action out of range");
  }
  Policy p;
  p.deterministic_ = true;
  p.n_states_ = actions.size();
  p.n_actions_ = n_actions;
  p.actions_ = std::move(actions);
  return p;
}

Policy Policy::stochastic(std::vector<std::vector<double>> rows) {
  Policy p;
  p.deterministic_ = false;
  p.n_states_ = rows.size();
  p.n_actions_ = rows.empty() ? 0 : rows.front().size();
  p.probs_.reserve(p.n_states_ * p.n_actions_);
  for (const auto& row : rows) {
    if (row.size() != p.n_actions_) throw std::invalid_argument("ragged policy table");
    double sum = 0.0;
    for (double x : row) {
      if (x < 0.0) throw std::invalid_argument("negative policy probability");
      sum += x;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
      throw std::invalid_argument("policy row does not sum to 1");
    }
    p.probs_.insert(p.probs_.end(), row.begin(), row.end());
  }
  return p;
}

Policy Policy::uniform(std::size_t n_states, std::size_t n_actions) {
  return stochastic(std::vector<std::vector<double>>(
      n_states, std::vector<double>(n_actions, 1.0 / static_cast<double>(n_actions))));
}

Action Policy::action(State s) const {
  if (!deterministic_) throw std::logic_error("Policy::action on a stochastic policy");
  return actions_.at(s);
}

double Policy::prob(State s, Action a) const {
  if (deterministic_) return actions_.at(s) == a ? 1.0 : 0.0;
  return probs_.at(s * n_actions_ + a);
}

Action Policy::sample(State s, Rng& rng) const {
  if (deterministic_) return actions_.at(s);
  double u = rng.uniform();
  const double* row = probs_.data() + s * n_actions_;
  for (Action a = 0; a < n_actions_; ++a) {
    if (u < row[a]) return a;
    u -= row[a];
  }
  for (Action a = n_actions_; a-- > 0;) {
    if (row[a] > 0.0) return a;
  }
  return 0;
}

// ---------------------------------------------------------------------------

Sample sample_transition(const TabularMDP& mdp, State s, Action a, Rng& rng) {
  if (s >= mdp.n_states() || a >= mdp.n_actions()) {
    throw MdpError("sample_transition: index out of range " + at(s, a));
  }
  const auto row = mdp.outcomes(s, a);
  double u = rng.uniform();
  for (const Outcome& o : row) {
    if (u < o.prob) return {o.reward, o.next};
    u -= o.prob;
  }
  // Rounding left a sliver of mass past the last cumulative bound.
  return {row.back().reward, row.back().next};
}

StartDistribution StartDistribution::uniform_non_goal(const TabularMDP& mdp) {
  std::vector<std::pair<State, double>> w;
  for (State s = 0; s < mdp.n_states(); ++s) {
    if (!mdp.is_goal(s)) w.emplace_back(s, 1.0);
  }
  if (w.empty()) throw MdpError("uniform start: every state is a goal");
  return StartDistribution(std::move(w));
}

StartDistribution::StartDistribution(std::vector<std::pair<State, double>> weights)
    : weights_(std::move(weights)) {
  double total = 0.0;
  for (const auto& [s, w] : weights_) {
    if (w < 0.0) throw std::invalid_argument("negative start weight");
    total += w;
  }
  if (weights_.empty() || total <= 0.0) throw std::invalid_argument("empty start distribution");
  for (auto& entry : weights_) entry.second /= total;
}

State StartDistribution::sample(Rng& rng) const {
  if (weights_.size() == 1) return weights_.front().first;
  double u = rng.uniform();
  for (const auto& [s, w] : weights_) {
    if (u < w) return s;
    u -= w;
  }
  return weights_.back().first;
}

Action PolicyAgent::act(State s) { return policy_.sample(s, rng_); }

EpisodeLog run_episode(const TabularMDP& mdp, EpisodeAgent& agent, State start,
                       std::size_t timeout, Rng& rng) {
  if (timeout == 0) throw std::invalid_argument("run_episode: timeout must be >= 1");
  if (start >= mdp.n_states()) throw MdpError("run_episode: start state out of range");
  EpisodeLog log;
  log.start = start;
  if (mdp.is_goal(start)) {
    log.terminated_at_goal = true;
    return log;
  }
  State s = start;
  while (log.steps.size() < timeout && !agent.halted()) {
    const Action a = agent.act(s);
    if (a >= mdp.n_actions()) {
      throw MdpError("agent returned invalid action " + std::to_string(a) + " in state " +
                     std::to_string(s));
    }
    const Sample x = sample_transition(mdp, s, a, rng);
    const StepRecord step{s, a, x.reward, x.next};
    log.steps.push_back(step);
    const bool goal = mdp.is_goal(x.next);
    const bool timeout_hit = !goal && log.steps.size() >= timeout;
    agent.observe(step, goal, timeout_hit);
    if (goal) {
      log.terminated_at_goal = true;
      break;
    }
    if (timeout_hit) log.timed_out = true;
    s = x.next;
  }
  return log;
}

}  // namespace hiershape

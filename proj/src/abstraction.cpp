#include "hiershape/abstraction.hpp"

#include <algorithm>
#include <string>

namespace hiershape {

StateMapping::StateMapping(std::vector<State> table, std::size_t upper_n_states)
    : table_(std::move(table)), upper_n_(upper_n_states) {
  for (State s : table_) {
    if (s >= upper_n_) throw std::invalid_argument("mapping image out of range");
  }
}

StateMapping StateMapping::identity(std::size_t n) {
  std::vector<State> t(n);
  for (State s = 0; s < n; ++s) t[s] = s;
  return {std::move(t), n};
}

StateMapping StateMapping::constant(std::size_t lower_n, State target, std::size_t upper_n) {
  return {std::vector<State>(lower_n, target), upper_n};
}

bool StateMapping::surjective() const {
  std::vector<char> hit(upper_n_, 0);
  for (State s : table_) hit[s] = 1;
  return std::all_of(hit.begin(), hit.end(), [](char h) { return h != 0; });
}

std::vector<std::vector<State>> induced_partition(const StateMapping& mapping) {
  std::vector<std::vector<State>> blocks(mapping.upper_n_states());
  for (State s = 0; s < mapping.lower_n_states(); ++s) blocks[mapping(s)].push_back(s);
  return blocks;
}

AbstractionLayer::AbstractionLayer(MdpPtr lower_mdp, MdpPtr upper_mdp, StateMapping map)
    : lower(std::move(lower_mdp)), upper(std::move(upper_mdp)), mapping(std::move(map)) {
  if (!lower || !upper) throw std::invalid_argument("abstraction layer: null MDP");
  if (mapping.lower_n_states() != lower->n_states() ||
      mapping.upper_n_states() != upper->n_states()) {
    throw std::invalid_argument("abstraction layer: mapping dimensions do not match MDPs");
  }
}

ValidationReport check_goal_correspondence(const AbstractionLayer& layer) {
  if (!layer.lower->goal_mdp() || !layer.upper->goal_mdp()) {
    throw std::invalid_argument("goal correspondence requires two goal MDPs");
  }
  ValidationReport report;
  for (State s = 0; s < layer.lower->n_states(); ++s) {
    const bool lower_goal = layer.lower->is_goal(s);
    const bool upper_goal = layer.upper->is_goal(layer.mapping(s));
    if (lower_goal && !upper_goal) {
      report.violations.push_back("lower goal " + std::to_string(s) +
                                  " maps to non-goal upper state " +
                                  std::to_string(layer.mapping(s)));
    } else if (!lower_goal && upper_goal) {
      report.violations.push_back("non-goal lower state " + std::to_string(s) +
                                  " maps to upper goal " + std::to_string(layer.mapping(s)));
    }
  }
  if (!layer.mapping.surjective()) report.warnings.push_back("mapping is not surjective");
  return report;
}

Hierarchy::Hierarchy(std::vector<MdpPtr> levels, std::vector<StateMapping> mappings)
    : levels_(std::move(levels)), mappings_(std::move(mappings)) {
  if (levels_.empty()) throw std::invalid_argument("hierarchy needs at least one level");
  if (mappings_.size() + 1 != levels_.size()) {
    throw std::invalid_argument("hierarchy needs one mapping per adjacent level pair");
  }
  for (std::size_t i = 0; i < mappings_.size(); ++i) {
    if (mappings_[i].lower_n_states() != levels_[i]->n_states() ||
        mappings_[i].upper_n_states() != levels_[i + 1]->n_states()) {
      throw std::invalid_argument("hierarchy: mapping " + std::to_string(i) +
                                  " dimensions do not match its levels");
    }
  }
}

AbstractionLayer Hierarchy::layer(std::size_t i) const {
  return {levels_.at(i), levels_.at(i + 1), mappings_.at(i)};
}

ValidationReport Hierarchy::validate() const {
  ValidationReport report;
  auto merge = [&](const ValidationReport& r, const std::string& prefix) {
    for (const auto& m : r.structural) report.structural.push_back(prefix + m);
    for (const auto& m : r.violations) report.violations.push_back(prefix + m);
    for (const auto& m : r.warnings) report.warnings.push_back(prefix + m);
  };
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (levels_[i]->goal_mdp()) merge(validate_goal_mdp(*levels_[i]), "level " + std::to_string(i) + ": ");
  }
  for (std::size_t i = 0; i < mappings_.size(); ++i) {
    const std::string prefix = "layer " + std::to_string(i) + ": ";
    if (levels_[i]->goal_mdp() && levels_[i + 1]->goal_mdp()) {
      merge(check_goal_correspondence(layer(i)), prefix);
    } else if (!mappings_[i].surjective()) {
      report.warnings.push_back(prefix + "mapping is not surjective");
    }
  }
  return report;
}

}  // namespace hiershape

#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "hiershape/mdp.hpp"

namespace hiershape {

/// Total map from lower-level states to upper-level states, stored as a dense table.
class StateMapping {
 public:
  StateMapping(std::vector<State> table, std::size_t upper_n_states);

  static StateMapping identity(std::size_t n);
  static StateMapping constant(std::size_t lower_n, State target, std::size_t upper_n);

  std::size_t lower_n_states() const { return table_.size(); }
  std::size_t upper_n_states() const { return upper_n_; }
  State operator()(State s) const { return table_[s]; }
  const std::vector<State>& table() const { return table_; }

  /// Non-surjective maps are legal; they only leave some abstract states unused.
  bool surjective() const;

 private:
  std::vector<State> table_;
  std::size_t upper_n_;
};

/// Block i holds the preimage of upper state i (possibly empty).
std::vector<std::vector<State>> induced_partition(const StateMapping& mapping);

using MdpPtr = std::shared_ptr<const TabularMDP>;

/// A lower MDP, its abstraction, and the state mapping between them.
struct AbstractionLayer {
  AbstractionLayer(MdpPtr lower, MdpPtr upper, StateMapping mapping);

  MdpPtr lower;
  MdpPtr upper;
  StateMapping mapping;
};

/// Lower goals must be exactly the union of the preimages of the upper goals.
ValidationReport check_goal_correspondence(const AbstractionLayer& layer);

/// M_0 ... M_n with mappings phi_0 ... phi_{n-1}; level 0 is the ground MDP.
class Hierarchy {
 public:
  Hierarchy(std::vector<MdpPtr> levels, std::vector<StateMapping> mappings);

  std::size_t n_levels() const { return levels_.size(); }
  const MdpPtr& level(std::size_t i) const { return levels_.at(i); }
  const StateMapping& mapping(std::size_t i) const { return mappings_.at(i); }
  AbstractionLayer layer(std::size_t i) const;

  /// Goal-MDP checks per level plus goal correspondence per layer. Surjectivity
  /// gaps are reported as warnings.
  ValidationReport validate() const;

 private:
  std::vector<MdpPtr> levels_;
  std::vector<StateMapping> mappings_;
};

}  // namespace hiershape

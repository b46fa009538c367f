#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hiershape/abstraction.hpp"
#include "hiershape/mdp.hpp"

namespace hiershape {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Character grid: '#' is a wall, any other printable character labels a room.
/// y grows downward.
class GridMap {
 public:
  explicit GridMap(std::vector<std::string> rows);
  static GridMap parse(std::istream& in);
  static GridMap load(const std::string& path);

  int width() const { return width_; }
  int height() const { return height_; }
  bool inside(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool wall(Cell c) const { return !inside(c) || rows_[c.y][c.x] == '#'; }
  char label(Cell c) const { return rows_[c.y][c.x]; }

  /// Room labels in row-major order of first appearance; this order fixes abstract indices.
  const std::vector<char>& rooms() const { return rooms_; }
  std::size_t room_index(char label) const;

  /// Labels whose cells form more than one connected region.
  std::vector<std::string> lint() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::string> rows_;
  std::vector<char> rooms_;
};

// Grid actions. Interact is present only when enabled.
inline constexpr Action kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kInteract = 4;

struct GridOptions {
  double failure_prob = 0.0;
  double discount = 0.98;
  std::vector<Cell> goal_cells;
  /// Every cell of these rooms is a goal.
  std::vector<char> goal_rooms;
  /// Adds an interact action and a one-step "talking" bit to the state.
  bool interact = false;
};

/// A grid MDP plus the bookkeeping to move between cells and state indices.
struct GridWorld {
  GridMap map;
  std::vector<Cell> cells;
  bool interact = false;
  MdpPtr mdp;
  /// State to room index (and talk bit when interact is on: room * 2 + talk).
  StateMapping rooms;

  State state_of(Cell c, bool talking = false) const;
  Cell cell_of(State s) const { return cells[interact ? s / 2 : s]; }
  bool talking(State s) const { return interact && (s % 2) == 1; }

 private:
  friend GridWorld grid_to_mdp(const GridMap&, const GridOptions&);
  GridWorld(GridMap m, StateMapping r) : map(std::move(m)), rooms(std::move(r)) {}
  std::vector<long> index_;
};

/// The intended move succeeds with probability 1 - f; otherwise one of the
/// other actions runs, each with mass f / (A - 1). Blocked moves stay put.
GridWorld grid_to_mdp(const GridMap& map, const GridOptions& options);

struct RoomGraph {
  std::vector<char> labels;
  /// Sorted neighbour indices per room.
  std::vector<std::vector<std::size_t>> adjacency;

  std::size_t index(char label) const;
};

/// Rooms are adjacent when two of their cells share an edge.
RoomGraph room_graph(const GridMap& map);

struct RoomsOptions {
  double failure_prob = 0.1;
  double discount = 0.9;
  std::vector<char> goal_rooms;
  bool interact = false;
};

/// Action j moves to the j-th neighbour with probability 1 - f and stays
/// otherwise; rooms with fewer neighbours pad with self-loops.
TabularMDP rooms_abstract_mdp(const RoomGraph& graph, const RoomsOptions& options);

/// Appends one action per spurious directed edge (from, to), with the same
/// success probability 1 - f. Other states get self-loops on the new actions.
TabularMDP faulty_abstraction(const TabularMDP& base,
                              const std::vector<std::pair<State, State>>& extra_edges,
                              double failure_prob);

// Task automata ------------------------------------------------------------

using Valuation = std::uint32_t;

struct Literal {
  std::size_t prop;
  bool positive;
};

/// Deterministic automaton over proposition valuations. Unmatched inputs go to the sink.
class TaskAutomaton {
 public:
  static TaskAutomaton parse(std::istream& in);
  static TaskAutomaton load(const std::string& path);

  std::size_t n_states() const { return names_.size(); }
  std::size_t initial() const { return initial_; }
  std::size_t accepting() const { return accepting_; }
  std::size_t sink() const { return sink_; }
  const std::vector<std::string>& props() const { return props_; }
  const std::vector<std::string>& state_names() const { return names_; }
  std::size_t prop_index(const std::string& name) const;
  std::size_t state_index(const std::string& name) const;

  std::size_t step(std::size_t q, Valuation v) const;

 private:
  struct Arc {
    std::vector<Literal> guard;
    std::size_t next;
  };
  std::vector<std::string> names_;
  std::vector<std::string> props_;
  std::vector<std::vector<Arc>> arcs_;
  std::size_t initial_ = 0;
  std::size_t accepting_ = 0;
  std::size_t sink_ = 0;
};

/// A per-episode random proposition, observable only where `requires` holds.
struct ScenarioProp {
  std::string name;
  std::string requires_prop;
  double probability = 0.2;
};

struct LabelingConfig {
  /// Propositions true in every cell of a room.
  std::map<char, std::vector<std::string>> room_props;
  std::vector<ScenarioProp> scenario;
  /// Emitted while the talk bit is set.
  std::string talking = "Talking";
};

/// Dynamics states with their per-state proposition sets.
struct LabeledDynamics {
  MdpPtr mdp;
  std::vector<std::vector<std::string>> labels;
};

LabeledDynamics label_grid(const GridWorld& world, const LabelingConfig& config);
/// Labels rooms of an abstract MDP built with rooms_abstract_mdp over `graph`.
LabeledDynamics label_rooms(MdpPtr mdp, const RoomGraph& graph, bool interact,
                            const LabelingConfig& config);

struct ProductMDP {
  MdpPtr mdp;
  std::size_t n_dyn = 0;
  std::size_t n_q = 0;
  std::size_t n_scenarios = 0;
  std::vector<double> scenario_probs;

  State index(State s, std::size_t q, std::size_t sigma) const {
    return (s * n_q + q) * n_scenarios + sigma;
  }
  State dyn_of(State p) const { return p / (n_q * n_scenarios); }
  std::size_t q_of(State p) const { return (p / n_scenarios) % n_q; }
  std::size_t scenario_of(State p) const { return p % n_scenarios; }

  /// Episode start at dynamics state s: the scenario is drawn from its prior.
  StartDistribution start(State s, std::size_t q0) const;
};

/// Synchronous product: the automaton reads the labels of the state entered,
/// plus the scenario's propositions. Reward 1 on entering the accepting state.
ProductMDP dfa_product(const LabeledDynamics& dynamics, const TaskAutomaton& automaton,
                       const LabelingConfig& config);

/// (s, q, sigma) -> (phi(s), q, sigma).
StateMapping product_mapping(const ProductMDP& lower, const ProductMDP& upper,
                             const StateMapping& dyn_mapping);

}  // namespace hiershape

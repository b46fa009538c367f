#include "hiershape/envs.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>

#include "hiershape/io.hpp"

namespace hiershape {

// GridMap ------------------------------------------------------------------

GridMap::GridMap(std::vector<std::string> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw ParseError("map has no rows");
  height_ = static_cast<int>(rows_.size());
  width_ = static_cast<int>(rows_.front().size());
  for (std::size_t y = 0; y < rows_.size(); ++y) {
    if (static_cast<int>(rows_[y].size()) != width_) {
      throw ParseError("map row " + std::to_string(y) + " has width " +
                       std::to_string(rows_[y].size()) + ", expected " + std::to_string(width_));
    }
    for (char ch : rows_[y]) {
      if (ch == '#') continue;
      if (ch <= ' ' || ch > '~') throw ParseError("map row " + std::to_string(y) + ": bad cell character");
      if (std::find(rooms_.begin(), rooms_.end(), ch) == rooms_.end()) rooms_.push_back(ch);
    }
  }
  if (rooms_.empty()) throw ParseError("map has no open cells");
}

GridMap GridMap::parse(std::istream& in) {
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == ';') continue;
    rows.push_back(line);
  }
  return GridMap(std::move(rows));
}

GridMap GridMap::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open map " + path);
  return parse(f);
}

std::size_t GridMap::room_index(char label) const {
  const auto it = std::find(rooms_.begin(), rooms_.end(), label);
  if (it == rooms_.end()) throw std::invalid_argument(std::string("unknown room '") + label + "'");
  return static_cast<std::size_t>(it - rooms_.begin());
}

namespace {

constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

}  // namespace

std::vector<std::string> GridMap::lint() const {
  std::vector<std::string> out;
  std::vector<char> seen(static_cast<std::size_t>(width_ * height_), 0);
  std::map<char, int> components;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (wall({x, y}) || seen[y * width_ + x]) continue;
      const char lab = label({x, y});
      ++components[lab];
      std::vector<Cell> stack{{x, y}};
      seen[y * width_ + x] = 1;
      while (!stack.empty()) {
        const Cell c = stack.back();
        stack.pop_back();
        for (int d = 0; d < 4; ++d) {
          const Cell n{c.x + kDx[d], c.y + kDy[d]};
          if (wall(n) || label(n) != lab || seen[n.y * width_ + n.x]) continue;
          seen[n.y * width_ + n.x] = 1;
          stack.push_back(n);
        }
      }
    }
  }
  for (const auto& [lab, n] : components) {
    if (n > 1) out.push_back(std::string("room '") + lab + "' is split into " + std::to_string(n) + " regions");
  }
  return out;
}

// Grid MDP -----------------------------------------------------------------

State GridWorld::state_of(Cell c, bool talk) const {
  if (!map.inside(c) || index_[c.y * map.width() + c.x] < 0) {
    throw std::invalid_argument("cell (" + std::to_string(c.x) + "," + std::to_string(c.y) +
                                ") is not an open cell");
  }
  const auto cell = static_cast<State>(index_[c.y * map.width() + c.x]);
  return interact ? cell * 2 + (talk ? 1 : 0) : cell;
}

GridWorld grid_to_mdp(const GridMap& map, const GridOptions& options) {
  if (options.failure_prob < 0.0 || options.failure_prob > 1.0) {
    throw std::invalid_argument("failure probability must lie in [0, 1]");
  }
  std::vector<Cell> cells;
  std::vector<long> index(static_cast<std::size_t>(map.width() * map.height()), -1);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.wall({x, y})) continue;
      index[y * map.width() + x] = static_cast<long>(cells.size());
      cells.push_back({x, y});
    }
  }
  const std::size_t stride = options.interact ? 2 : 1;
  const std::size_t n_actions = options.interact ? 5 : 4;
  const std::size_t n = cells.size() * stride;

  std::vector<State> room_of(n);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::size_t r = map.room_index(map.label(cells[i]));
    for (std::size_t t = 0; t < stride; ++t) room_of[i * stride + t] = r * stride + t;
  }
  GridWorld world(map, StateMapping(std::move(room_of), map.rooms().size() * stride));
  world.cells = cells;
  world.index_ = index;
  world.interact = options.interact;

  std::vector<char> goal(n, 0);
  auto mark_cell = [&](std::size_t cell) {
    for (std::size_t t = 0; t < stride; ++t) goal[cell * stride + t] = 1;
  };
  for (const Cell& c : options.goal_cells) {
    if (map.wall(c)) throw std::invalid_argument("goal cell is a wall or outside the map");
    mark_cell(static_cast<std::size_t>(index[c.y * map.width() + c.x]));
  }
  for (char room : options.goal_rooms) {
    const std::size_t r = map.room_index(room);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (map.room_index(map.label(cells[i])) == r) mark_cell(i);
    }
  }

  MdpBuilder builder(n, n_actions, options.discount);
  const double f = options.failure_prob;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t t = 0; t < stride; ++t) {
      const State s = i * stride + t;
      for (Action a = 0; a < n_actions; ++a) {
        if (goal[s]) {
          builder.add(s, a, s, 1.0);
          continue;
        }
        for (Action e = 0; e < n_actions; ++e) {
          const double p = (e == a) ? 1.0 - f : f / static_cast<double>(n_actions - 1);
          if (p == 0.0) continue;
          State next;
          if (e == kInteract) {
            next = i * stride + 1;
          } else {
            const Cell c = cells[i];
            const Cell moved{c.x + kDx[e], c.y + kDy[e]};
            const std::size_t j = map.wall(moved) ? i : static_cast<std::size_t>(index[moved.y * map.width() + moved.x]);
            next = j * stride;
          }
          builder.add(s, a, next, p, goal[next] ? 1.0 : 0.0);
        }
      }
    }
  }
  std::vector<State> goals;
  for (State s = 0; s < n; ++s) {
    if (goal[s]) goals.push_back(s);
  }
  builder.set_goals(std::move(goals));
  world.mdp = std::make_shared<const TabularMDP>(builder.build());
  return world;
}

// Room abstraction ---------------------------------------------------------

std::size_t RoomGraph::index(char label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw std::invalid_argument(std::string("unknown room '") + label + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

RoomGraph room_graph(const GridMap& map) {
  RoomGraph g;
  g.labels = map.rooms();
  g.adjacency.resize(g.labels.size());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.wall({x, y})) continue;
      for (const Cell n : {Cell{x + 1, y}, Cell{x, y + 1}}) {
        if (map.wall(n) || map.label(n) == map.label({x, y})) continue;
        const std::size_t a = map.room_index(map.label({x, y}));
        const std::size_t b = map.room_index(map.label(n));
        g.adjacency[a].push_back(b);
        g.adjacency[b].push_back(a);
      }
    }
  }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
  return g;
}

TabularMDP rooms_abstract_mdp(const RoomGraph& graph, const RoomsOptions& options) {
  const double f = options.failure_prob;
  if (f < 0.0 || f > 1.0) throw std::invalid_argument("failure probability must lie in [0, 1]");
  const std::size_t n_rooms = graph.labels.size();
  if (graph.adjacency.size() != n_rooms) throw std::invalid_argument("room graph is malformed");
  // Connectivity: every room must be reachable from room 0.
  std::vector<char> seen(n_rooms, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const std::size_t r = stack.back();
    stack.pop_back();
    for (std::size_t nb : graph.adjacency[r]) {
      if (nb >= n_rooms) throw std::invalid_argument("room graph edge out of range");
      if (!seen[nb]) {
        seen[nb] = 1;
        stack.push_back(nb);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw std::invalid_argument("room graph is disconnected");
  }

  std::size_t degree = 1;
  for (const auto& adj : graph.adjacency) degree = std::max(degree, adj.size());
  const std::size_t stride = options.interact ? 2 : 1;
  const std::size_t n_actions = degree + (options.interact ? 1 : 0);
  std::vector<char> goal_room(n_rooms, 0);
  for (char g : options.goal_rooms) goal_room[graph.index(g)] = 1;

  MdpBuilder builder(n_rooms * stride, n_actions, options.discount);
  std::vector<State> goals;
  for (std::size_t r = 0; r < n_rooms; ++r) {
    for (std::size_t t = 0; t < stride; ++t) {
      const State s = r * stride + t;
      if (goal_room[r]) goals.push_back(s);
      const State stay = r * stride;
      for (Action a = 0; a < n_actions; ++a) {
        if (goal_room[r]) {
          builder.add(s, a, s, 1.0);
        } else if (options.interact && a == degree) {
          builder.add(s, a, r * stride + 1, 1.0 - f);
          builder.add(s, a, stay, f);
        } else if (a < graph.adjacency[r].size()) {
          const std::size_t target = graph.adjacency[r][a];
          builder.add(s, a, target * stride, 1.0 - f, goal_room[target] ? 1.0 : 0.0);
          builder.add(s, a, stay, f);
        } else {
          builder.add(s, a, stay, 1.0);
        }
      }
    }
  }
  builder.set_goals(std::move(goals));
  return builder.build();
}

TabularMDP faulty_abstraction(const TabularMDP& base,
                              const std::vector<std::pair<State, State>>& extra_edges,
                              double failure_prob) {
  std::vector<std::vector<State>> extra(base.n_states());
  for (const auto& [from, to] : extra_edges) {
    if (from >= base.n_states() || to >= base.n_states()) {
      throw std::invalid_argument("spurious edge references an unknown abstract state");
    }
    extra[from].push_back(to);
  }
  std::size_t added = 0;
  for (const auto& e : extra) added = std::max(added, e.size());
  const std::size_t n_actions = base.n_actions() + added;

  MdpBuilder builder(base.n_states(), n_actions, base.discount());
  for (State s = 0; s < base.n_states(); ++s) {
    for (Action a = 0; a < base.n_actions(); ++a) {
      for (const Outcome& o : base.outcomes(s, a)) builder.add(s, a, o.next, o.prob, o.reward);
    }
    for (std::size_t k = 0; k < added; ++k) {
      const Action a = base.n_actions() + k;
      if (k < extra[s].size() && !base.is_goal(s)) {
        const State to = extra[s][k];
        const double entry = base.is_goal(to) ? 1.0 : 0.0;
        builder.add(s, a, to, 1.0 - failure_prob, entry);
        builder.add(s, a, s, failure_prob);
      } else {
        builder.add(s, a, s, 1.0);
      }
    }
  }
  builder.set_goals(base.goal_states(), base.goal_mdp());
  return builder.build();
}

// Automaton ----------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Normalises the unicode connectives to their ASCII forms.
std::string ascii_guard(std::string g) {
  auto replace_all = [&](const std::string& from, const std::string& to) {
    for (std::size_t p = g.find(from); p != std::string::npos; p = g.find(from, p + to.size())) {
      g.replace(p, from.size(), to);
    }
  };
  replace_all("\xE2\x88\xA7", "&");  // logical and
  replace_all("\xC2\xAC", "!");      // not sign
  return g;
}

}  // namespace

std::size_t TaskAutomaton::prop_index(const std::string& name) const {
  const auto it = std::find(props_.begin(), props_.end(), name);
  if (it == props_.end()) throw std::invalid_argument("unknown proposition '" + name + "'");
  return static_cast<std::size_t>(it - props_.begin());
}

std::size_t TaskAutomaton::state_index(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::invalid_argument("unknown automaton state '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

TaskAutomaton TaskAutomaton::parse(std::istream& in) {
  TaskAutomaton a;
  auto state = [&](const std::string& name) {
    const auto it = std::find(a.names_.begin(), a.names_.end(), name);
    if (it != a.names_.end()) return static_cast<std::size_t>(it - a.names_.begin());
    a.names_.push_back(name);
    a.arcs_.emplace_back();
    return a.names_.size() - 1;
  };
  auto prop = [&](const std::string& name) {
    const auto it = std::find(a.props_.begin(), a.props_.end(), name);
    if (it != a.props_.end()) return static_cast<std::size_t>(it - a.props_.begin());
    a.props_.push_back(name);
    return a.props_.size() - 1;
  };
  std::optional<std::string> init, accept, sink;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "automaton line " + std::to_string(lineno) + ": ";
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (line.find('|') == std::string::npos && colon != std::string::npos) {
      const std::string key = trim(line.substr(0, colon));
      const std::string value = trim(line.substr(colon + 1));
      if (key == "init") init = value;
      else if (key == "accept") accept = value;
      else if (key == "sink") sink = value;
      else throw ParseError(where + "unknown directive '" + key + "'");
      continue;
    }
    std::vector<std::string> parts;
    std::stringstream ss(line);
    for (std::string part; std::getline(ss, part, '|');) parts.push_back(trim(part));
    if (parts.size() != 3 || parts[0].empty() || parts[2].empty()) {
      throw ParseError(where + "expected 'state | guard | next'");
    }
    Arc arc;
    const std::string guard = ascii_guard(parts[1]);
    if (guard != "true") {
      std::stringstream gs(guard);
      for (std::string lit; std::getline(gs, lit, '&');) {
        lit = trim(lit);
        bool positive = true;
        while (!lit.empty() && lit[0] == '!') {
          positive = !positive;
          lit = trim(lit.substr(1));
        }
        if (lit.empty()) throw ParseError(where + "empty literal in guard");
        arc.guard.push_back({prop(lit), positive});
      }
    }
    const std::size_t from = state(parts[0]);
    arc.next = state(parts[2]);
    a.arcs_[from].push_back(std::move(arc));
  }
  if (!init || !accept) throw ParseError("automaton needs 'init:' and 'accept:' directives");
  a.initial_ = state(*init);
  a.accepting_ = state(*accept);
  a.sink_ = state(sink.value_or("sink"));
  if (a.accepting_ == a.sink_) throw ParseError("accepting state cannot be the sink");
  if (a.props_.size() > 20) throw ParseError("too many propositions");
  a.arcs_[a.accepting_].clear();
  a.arcs_[a.sink_].clear();
  // Determinism: no valuation may satisfy two guards of one state.
  const Valuation n_vals = Valuation{1} << a.props_.size();
  for (std::size_t q = 0; q < a.names_.size(); ++q) {
    if (a.arcs_[q].size() < 2) continue;
    for (Valuation v = 0; v < n_vals; ++v) {
      std::size_t hits = 0;
      for (const Arc& arc : a.arcs_[q]) {
        hits += std::all_of(arc.guard.begin(), arc.guard.end(), [&](const Literal& l) {
          return (((v >> l.prop) & 1U) != 0) == l.positive;
        });
      }
      if (hits > 1) throw ParseError("automaton state '" + a.names_[q] + "' is nondeterministic");
    }
  }
  return a;
}

TaskAutomaton TaskAutomaton::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open automaton " + path);
  return parse(f);
}

std::size_t TaskAutomaton::step(std::size_t q, Valuation v) const {
  if (q == accepting_ || q == sink_) return q;
  for (const Arc& arc : arcs_[q]) {
    const bool match = std::all_of(arc.guard.begin(), arc.guard.end(), [&](const Literal& l) {
      return (((v >> l.prop) & 1U) != 0) == l.positive;
    });
    if (match) return arc.next;
  }
  return sink_;
}

// Labels and products ------------------------------------------------------

LabeledDynamics label_grid(const GridWorld& world, const LabelingConfig& config) {
  LabeledDynamics out;
  out.mdp = world.mdp;
  out.labels.resize(world.mdp->n_states());
  for (State s = 0; s < world.mdp->n_states(); ++s) {
    const auto it = config.room_props.find(world.map.label(world.cell_of(s)));
    if (it != config.room_props.end()) out.labels[s] = it->second;
    if (world.talking(s)) out.labels[s].push_back(config.talking);
  }
  return out;
}

LabeledDynamics label_rooms(MdpPtr mdp, const RoomGraph& graph, bool interact,
                            const LabelingConfig& config) {
  const std::size_t stride = interact ? 2 : 1;
  if (mdp->n_states() != graph.labels.size() * stride) {
    throw std::invalid_argument("abstract MDP does not match the room graph");
  }
  LabeledDynamics out;
  out.mdp = std::move(mdp);
  out.labels.resize(out.mdp->n_states());
  for (State s = 0; s < out.mdp->n_states(); ++s) {
    const auto it = config.room_props.find(graph.labels[s / stride]);
    if (it != config.room_props.end()) out.labels[s] = it->second;
    if (interact && s % 2 == 1) out.labels[s].push_back(config.talking);
  }
  return out;
}

StartDistribution ProductMDP::start(State s, std::size_t q0) const {
  std::vector<std::pair<State, double>> w;
  for (std::size_t sigma = 0; sigma < n_scenarios; ++sigma) {
    if (scenario_probs[sigma] > 0.0) w.emplace_back(index(s, q0, sigma), scenario_probs[sigma]);
  }
  return StartDistribution(std::move(w));
}

ProductMDP dfa_product(const LabeledDynamics& dynamics, const TaskAutomaton& automaton,
                       const LabelingConfig& config) {
  const TabularMDP& dyn = *dynamics.mdp;
  if (dynamics.labels.size() != dyn.n_states()) throw std::invalid_argument("label gap: labels do not cover all states");
  if (config.scenario.size() > 8) throw std::invalid_argument("too many scenario propositions");

  auto lookup = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto& p = automaton.props();
    const auto it = std::find(p.begin(), p.end(), name);
    if (it == p.end()) return std::nullopt;
    return static_cast<std::size_t>(it - p.begin());
  };
  std::vector<Valuation> base(dyn.n_states(), 0);
  for (State s = 0; s < dyn.n_states(); ++s) {
    for (const auto& name : dynamics.labels[s]) {
      if (auto i = lookup(name)) base[s] |= Valuation{1} << *i;
    }
  }

  ProductMDP out;
  out.n_dyn = dyn.n_states();
  out.n_q = automaton.n_states();
  out.n_scenarios = std::size_t{1} << config.scenario.size();
  out.scenario_probs.assign(out.n_scenarios, 1.0);
  for (std::size_t sigma = 0; sigma < out.n_scenarios; ++sigma) {
    for (std::size_t j = 0; j < config.scenario.size(); ++j) {
      const double p = config.scenario[j].probability;
      if (p < 0.0 || p > 1.0) throw std::invalid_argument("scenario probability must lie in [0, 1]");
      out.scenario_probs[sigma] *= ((sigma >> j) & 1U) ? p : 1.0 - p;
    }
  }
  // Valuation seen on entering dynamics state s under scenario sigma.
  auto valuation = [&](State s, std::size_t sigma) {
    Valuation v = base[s];
    for (std::size_t j = 0; j < config.scenario.size(); ++j) {
      if (!((sigma >> j) & 1U)) continue;
      const auto target = lookup(config.scenario[j].name);
      const auto req = lookup(config.scenario[j].requires_prop);
      if (target && (!req || ((v >> *req) & 1U))) v |= Valuation{1} << *target;
    }
    return v;
  };

  const std::size_t n = out.n_dyn * out.n_q * out.n_scenarios;
  MdpBuilder builder(n, dyn.n_actions(), dyn.discount());
  std::vector<State> goals;
  for (State s = 0; s < out.n_dyn; ++s) {
    for (std::size_t q = 0; q < out.n_q; ++q) {
      for (std::size_t sigma = 0; sigma < out.n_scenarios; ++sigma) {
        const State p = out.index(s, q, sigma);
        const bool done = q == automaton.accepting() || q == automaton.sink();
        if (q == automaton.accepting()) goals.push_back(p);
        for (Action a = 0; a < dyn.n_actions(); ++a) {
          if (done) {
            builder.add(p, a, p, 1.0);
            continue;
          }
          for (const Outcome& o : dyn.outcomes(s, a)) {
            const std::size_t q2 = automaton.step(q, valuation(o.next, sigma));
            builder.add(p, a, out.index(o.next, q2, sigma), o.prob,
                        q2 == automaton.accepting() ? 1.0 : 0.0);
          }
        }
      }
    }
  }
  builder.set_goals(std::move(goals));
  out.mdp = std::make_shared<const TabularMDP>(builder.build());
  return out;
}

StateMapping product_mapping(const ProductMDP& lower, const ProductMDP& upper,
                             const StateMapping& dyn_mapping) {
  if (lower.n_q != upper.n_q || lower.n_scenarios != upper.n_scenarios ||
      dyn_mapping.lower_n_states() != lower.n_dyn || dyn_mapping.upper_n_states() != upper.n_dyn) {
    throw std::invalid_argument("product mapping: incompatible products");
  }
  std::vector<State> table(lower.mdp->n_states());
  for (State p = 0; p < table.size(); ++p) {
    table[p] = upper.index(dyn_mapping(lower.dyn_of(p)), lower.q_of(p), lower.scenario_of(p));
  }
  return {std::move(table), upper.mdp->n_states()};
}

}  // namespace hiershape

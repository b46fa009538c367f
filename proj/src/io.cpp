#include "hiershape/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace hiershape {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

double parse_double(const std::string& text) {
  double x = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc{} || res.ptr != last) throw ParseError("not a number: '" + text + "'");
  return x;
}

namespace {

std::size_t parse_index(const std::string& text) {
  std::size_t v = 0;
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(text.data(), last, v);
  if (res.ec != std::errc{} || res.ptr != last) throw ParseError("not an index: '" + text + "'");
  return v;
}

/// Yields (key, value) token pairs of non-comment, non-blank lines.
template <typename Fn>
void for_each_entry(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key, value, extra;
    if (!(ls >> key >> value) || (ls >> extra)) {
      throw ParseError("line " + std::to_string(lineno) + ": expected two fields");
    }
    fn(key, value, lineno);
  }
}

template <typename Fn>
void with_file(const std::string& path, std::ios::openmode mode, Fn&& fn) {
  std::fstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open " + path);
  fn(f);
}

}  // namespace

void write_values(std::ostream& out, const ValueTable& values) {
  for (State s = 0; s < values.size(); ++s) out << s << ' ' << format_double(values[s]) << '\n';
}

ValueTable read_values(std::istream& in) {
  std::map<State, double> entries;
  for_each_entry(in, [&](const std::string& k, const std::string& v, std::size_t lineno) {
    if (!entries.emplace(parse_index(k), parse_double(v)).second) {
      throw ParseError("line " + std::to_string(lineno) + ": duplicate state " + k);
    }
  });
  ValueTable values(entries.empty() ? 0 : entries.rbegin()->first + 1);
  if (entries.size() != values.size()) throw ParseError("value table has gaps");
  for (const auto& [s, v] : entries) values[s] = v;
  return values;
}

void write_q(std::ostream& out, const QTable& q) {
  for (State s = 0; s < q.n_states(); ++s) {
    for (Action a = 0; a < q.n_actions(); ++a) {
      out << s << ',' << a << ' ' << format_double(q(s, a)) << '\n';
    }
  }
}

QTable read_q(std::istream& in) {
  std::map<std::pair<State, Action>, double> entries;
  std::size_t n_states = 0, n_actions = 0;
  for_each_entry(in, [&](const std::string& k, const std::string& v, std::size_t lineno) {
    const auto comma = k.find(',');
    if (comma == std::string::npos) {
      throw ParseError("line " + std::to_string(lineno) + ": expected state,action");
    }
    const State s = parse_index(k.substr(0, comma));
    const Action a = parse_index(k.substr(comma + 1));
    if (!entries.emplace(std::pair{s, a}, parse_double(v)).second) {
      throw ParseError("line " + std::to_string(lineno) + ": duplicate entry " + k);
    }
    n_states = std::max(n_states, s + 1);
    n_actions = std::max(n_actions, a + 1);
  });
  if (entries.size() != n_states * n_actions) throw ParseError("Q table has gaps");
  QTable q(n_states, n_actions);
  for (const auto& [key, v] : entries) q(key.first, key.second) = v;
  return q;
}

void write_policy(std::ostream& out, const Policy& policy) {
  if (!policy.is_deterministic()) throw std::invalid_argument("only deterministic policies serialize");
  out << "# n_actions=" << policy.n_actions() << '\n';
  for (State s = 0; s < policy.n_states(); ++s) out << s << ' ' << policy.action(s) << '\n';
}

Policy read_policy(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("# n_actions=", 0) != 0) {
    throw ParseError("policy file must start with '# n_actions=N'");
  }
  const std::size_t n_actions = parse_index(header.substr(12));
  std::map<State, Action> entries;
  for_each_entry(in, [&](const std::string& k, const std::string& v, std::size_t lineno) {
    const Action a = parse_index(v);
    if (a >= n_actions) throw ParseError("line " + std::to_string(lineno + 1) + ": action out of range");
    if (!entries.emplace(parse_index(k), a).second) {
      throw ParseError("line " + std::to_string(lineno + 1) + ": duplicate state " + k);
    }
  });
  std::vector<Action> actions(entries.empty() ? 0 : entries.rbegin()->first + 1);
  if (entries.size() != actions.size()) throw ParseError("policy has gaps");
  for (const auto& [s, a] : entries) actions[s] = a;
  return Policy::deterministic(std::move(actions), n_actions);
}

void save_values(const std::string& path, const ValueTable& values) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_values(f, values); });
}
ValueTable load_values(const std::string& path) {
  ValueTable v;
  with_file(path, std::ios::in, [&](std::fstream& f) { v = read_values(f); });
  return v;
}
void save_q(const std::string& path, const QTable& q) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_q(f, q); });
}
QTable load_q(const std::string& path) {
  QTable q;
  with_file(path, std::ios::in, [&](std::fstream& f) { q = read_q(f); });
  return q;
}
void save_policy(const std::string& path, const Policy& policy) {
  with_file(path, std::ios::out | std::ios::trunc, [&](std::fstream& f) { write_policy(f, policy); });
}
Policy load_policy(const std::string& path) {
  std::optional<Policy> p;
  with_file(path, std::ios::in, [&](std::fstream& f) { p = read_policy(f); });
  return *p;
}

}  // namespace hiershape

#pragma once

#include <iosfwd>
#include <string>

#include "hiershape/mdp.hpp"
#include "hiershape/solver.hpp"

namespace hiershape {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that parses back to exactly `x`.
std::string format_double(double x);
double parse_double(const std::string& text);

// Plain-text tables: one entry per line, `state value` or `state,action value`.
void write_values(std::ostream& out, const ValueTable& values);
ValueTable read_values(std::istream& in);

void write_q(std::ostream& out, const QTable& q);
QTable read_q(std::istream& in);

/// Deterministic policies only: `state action` per line, followed by a
/// `# n_actions=N` header line at the top.
void write_policy(std::ostream& out, const Policy& policy);
Policy read_policy(std::istream& in);

void save_values(const std::string& path, const ValueTable& values);
ValueTable load_values(const std::string& path);
void save_q(const std::string& path, const QTable& q);
QTable load_q(const std::string& path);
void save_policy(const std::string& path, const Policy& policy);
Policy load_policy(const std::string& path);

}  // namespace hiershape

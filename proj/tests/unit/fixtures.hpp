#pragma once

#include <memory>

#include "hiershape/abstraction.hpp"
#include "hiershape/mdp.hpp"

namespace fixtures {

using namespace hiershape;

/// s0 -> s1 -> s2 (goal), one action, reward 1 on entering s2.
inline TabularMDP chain3(double gamma = 0.9) {
  MdpBuilder b(3, 1, gamma);
  b.add(0, 0, 1, 1.0).add(1, 0, 2, 1.0, 1.0).add(2, 0, 2, 1.0);
  b.set_goals({2});
  return b.build();
}

/// s0 with action 0 to goal s1 and action 1 staying put.
inline TabularMDP stay_or_go(double gamma = 0.9) {
  MdpBuilder b(2, 2, gamma);
  b.add(0, 0, 1, 1.0, 1.0).add(0, 1, 0, 1.0);
  b.add(1, 0, 1, 1.0).add(1, 1, 1, 1.0);
  b.set_goals({1});
  return b.build();
}

/// Corridor 0..n-1 with goal n-1; action 0 moves right, action 1 left, each
/// succeeding with probability 1 - f and staying otherwise.
inline TabularMDP corridor(std::size_t n, double gamma = 0.9, double f = 0.0) {
  MdpBuilder b(n, 2, gamma);
  const State goal = n - 1;
  for (State s = 0; s < n; ++s) {
    if (s == goal) {
      b.add(s, 0, s, 1.0).add(s, 1, s, 1.0);
      continue;
    }
    const State right = s + 1, left = s == 0 ? 0 : s - 1;
    b.add(s, 0, right, 1.0 - f, right == goal ? 1.0 : 0.0);
    if (f > 0.0) b.add(s, 0, s, f);
    b.add(s, 1, left, 1.0 - f);
    if (f > 0.0) b.add(s, 1, s, f);
  }
  b.set_goals({goal});
  return b.build();
}

inline MdpPtr share(TabularMDP m) { return std::make_shared<const TabularMDP>(std::move(m)); }

}  // namespace fixtures

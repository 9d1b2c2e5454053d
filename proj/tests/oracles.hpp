// Test-side reference implementations.  Deliberately naive: they share no
// code with the library beyond the data types.
#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "skyweave/synthesis.hpp"

namespace oracle {

using skyweave::GameArena;
using skyweave::StateId;

// Does the memoryless strategy `choice` (per state: index of a controlled
// move in a.out(s), or -1 for none) win the game?
inline bool strategy_wins(const GameArena& a, const std::vector<int>& choice) {
  const std::size_t n = a.size();
  std::vector<std::vector<StateId>> succ(n);
  for (StateId s = 0; s < n; ++s) {
    auto out = a.out(s);
    for (std::size_t k = 0; k < out.size(); ++k)
      if (!out[k].controlled || static_cast<int>(k) == choice[s]) succ[s].push_back(out[k].target);
  }
  std::vector<char> reach(n, 0);
  std::vector<StateId> stack{a.initial};
  reach[a.initial] = 1;
  while (!stack.empty()) {
    StateId s = stack.back();
    stack.pop_back();
    if (a.error[s] || succ[s].empty()) return false;
    for (StateId t : succ[s])
      if (!reach[t]) {
        reach[t] = 1;
        stack.push_back(t);
      }
  }
  // A fair cycle avoiding some guarantee loses.  Closure by Floyd-Warshall
  // inside each restricted graph.
  const std::size_t ng = std::max<std::size_t>(1, a.guarantees.size());
  for (std::size_t j = 0; j < ng; ++j) {
    auto inG = [&](StateId s) { return !a.guarantees.empty() && a.guarantees[j][s]; };
    if (a.guarantees.empty()) continue;  // G = true
    std::vector<std::vector<char>> r(n, std::vector<char>(n, 0));
    for (StateId s = 0; s < n; ++s)
      if (reach[s] && !inG(s))
        for (StateId t : succ[s])
          if (!inG(t)) r[s][t] = 1;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        if (r[i][k])
          for (std::size_t l = 0; l < n; ++l)
            if (r[k][l]) r[i][l] = 1;
    for (StateId s = 0; s < n; ++s) {
      if (!r[s][s]) continue;
      // the cycle class of s: states t with s->t->s
      bool fair = true;
      for (std::size_t i = 0; i < a.assumptions.size() && fair; ++i) {
        bool hit = false;
        for (StateId t = 0; t < n; ++t)
          if ((t == s || (r[s][t] && r[t][s])) && a.assumptions[i][t]) hit = true;
        fair = hit;
      }
      if (fair) return false;
    }
  }
  return true;
}

// Realizability by enumerating every memoryless controller.  Complete for
// a single guarantee.
inline bool brute_force_realizable(const GameArena& a) {
  const std::size_t n = a.size();
  std::vector<std::vector<int>> options(n);
  for (StateId s = 0; s < n; ++s) {
    options[s].push_back(-1);
    auto out = a.out(s);
    for (std::size_t k = 0; k < out.size(); ++k)
      if (out[k].controlled) options[s].push_back(static_cast<int>(k));
  }
  std::vector<std::size_t> idx(n, 0);
  std::vector<int> choice(n);
  for (;;) {
    for (StateId s = 0; s < n; ++s) choice[s] = options[s][idx[s]];
    if (strategy_wins(a, choice)) return true;
    std::size_t k = 0;
    while (k < n && ++idx[k] == options[k].size()) idx[k++] = 0;
    if (k == n) return false;
  }
}

// Random deterministic arena: <= max_states states, <= max_labels events,
// one guarantee, up to two assumptions.
inline GameArena random_arena(std::mt19937& rng, int max_states, int max_labels) {
  std::uniform_int_distribution<int> ns(1, max_states), nl(1, max_labels);
  const int n = ns(rng), nlab = nl(rng);
  std::vector<std::string> labels;
  std::vector<bool> ctrl;
  for (int l = 0; l < nlab; ++l) {
    labels.push_back(std::string(1, static_cast<char>('a' + l)));
    ctrl.push_back(rng() % 2 == 0);
  }
  std::vector<std::tuple<StateId, skyweave::LabelId, StateId, bool>> moves;
  for (int s = 0; s < n; ++s)
    for (int l = 0; l < nlab; ++l)
      if (rng() % 100 < 55) moves.emplace_back(s, l, rng() % n, ctrl[l]);
  std::vector<char> err(n, 0), g(n, 0);
  for (int s = 1; s < n; ++s) err[s] = rng() % 100 < 12;
  for (int s = 0; s < n; ++s) g[s] = rng() % 100 < 35;
  std::vector<std::vector<char>> as;
  int na = rng() % 3;
  for (int i = 0; i < na; ++i) {
    std::vector<char> ai(n, 0);
    for (int s = 0; s < n; ++s) ai[s] = rng() % 100 < 40;
    as.push_back(ai);
  }
  return skyweave::make_arena(n, 0, labels, moves, err, as, {g});
}

}  // namespace oracle

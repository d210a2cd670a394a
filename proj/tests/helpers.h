#ifndef PBLAME_TESTS_HELPERS_H
#define PBLAME_TESTS_HELPERS_H

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pblame/blame.h"
#include "pblame/data.h"
#include "pblame/logic.h"
#include "pblame/oracle.h"
#include "pblame/psdd.h"
#include "pblame/sdd.h"
#include "pblame/utility.h"

namespace th {

using namespace pblame;

inline int pick(std::mt19937_64& rng, int m) { return int(rng() % uint64_t(m)); }

// Truth set over all 2^n assignments, computed by set algebra instead of
// pointwise evaluation, so it is an independent oracle for Formula::eval.
inline std::vector<bool> truth_set(const Formula& f, int n) {
  size_t sz = size_t(1) << n;
  switch (f.kind) {
    case Formula::Kind::Atom: {
      std::vector<bool> t(sz);
      for (size_t w = 0; w < sz; w++) t[w] = (w >> f.var) & 1;
      return t;
    }
    case Formula::Kind::Not: {
      std::vector<bool> t = truth_set(f.args[0], n);
      t.flip();
      return t;
    }
    case Formula::Kind::And: {
      std::vector<bool> t(sz, true);
      for (const Formula& g : f.args) {
        std::vector<bool> u = truth_set(g, n);
        for (size_t w = 0; w < sz; w++) t[w] = t[w] && u[w];
      }
      return t;
    }
    case Formula::Kind::Or: {
      std::vector<bool> t(sz, false);
      for (const Formula& g : f.args) {
        std::vector<bool> u = truth_set(g, n);
        for (size_t w = 0; w < sz; w++) t[w] = t[w] || u[w];
      }
      return t;
    }
    case Formula::Kind::Implies: {
      std::vector<bool> a = truth_set(f.args[0], n);
      std::vector<bool> b = truth_set(f.args[1], n);
      for (size_t w = 0; w < sz; w++) a[w] = !a[w] || b[w];
      return a;
    }
    case Formula::Kind::Iff: {
      std::vector<bool> a = truth_set(f.args[0], n);
      std::vector<bool> b = truth_set(f.args[1], n);
      for (size_t w = 0; w < sz; w++) a[w] = a[w] == b[w];
      return a;
    }
  }
  return {};
}

// Random AST whose atoms come from `atoms` (defaults to all of [0, nv)).
inline Formula random_formula(std::mt19937_64& rng, const std::vector<int>& atoms,
                              int depth) {
  Formula f;
  if (depth == 0 || pick(rng, 4) == 0) {
    f.kind = Formula::Kind::Atom;
    f.var = atoms[pick(rng, int(atoms.size()))];
    return f;
  }
  int arity = 2 + pick(rng, 2);
  switch (pick(rng, 5)) {
    case 0:
      f.kind = Formula::Kind::Not;
      arity = 1;
      break;
    case 1:
      f.kind = Formula::Kind::And;
      break;
    case 2:
      f.kind = Formula::Kind::Or;
      break;
    case 3:
      f.kind = Formula::Kind::Implies;
      arity = 2;
      break;
    default:
      f.kind = Formula::Kind::Iff;
      arity = 2;
      break;
  }
  for (int i = 0; i < arity; i++)
    f.args.push_back(random_formula(rng, atoms, depth - 1));
  return f;
}

inline std::vector<int> iota_vars(int nv) {
  std::vector<int> v(nv);
  for (int i = 0; i < nv; i++) v[i] = i;
  return v;
}

inline Formula random_formula(std::mt19937_64& rng, int nv, int depth) {
  return random_formula(rng, iota_vars(nv), depth);
}

struct Compiled {
  SddManager m;
  NodeId root;
};

inline Compiled compile_scenario(const Scenario& s,
                                 VtreeStrategy st = VtreeStrategy::Balanced) {
  SddManager m(Vtree::build(s.num_vars(), st));
  NodeId root = m.compile(s.constraints);
  return {std::move(m), root};
}

// Random blame-sized scenario: 1-3 context vars, a one-hot action group of
// 2-3 indicators, sometimes a second boolean action, 1-3 outcomes. The
// exactly-one structure of the group is spelled out as constraints, plus a
// few random ones. Retries until satisfiable with every group action live.
inline Scenario random_scenario(std::mt19937_64& rng) {
  for (;;) {
    int nc = 1 + pick(rng, 3);
    int g = 2 + pick(rng, 2);
    bool extra = pick(rng, 2) == 0;
    int no = 1 + pick(rng, 3);
    std::ostringstream t;
    t << "scenario rnd\ncontext";
    for (int i = 0; i < nc; i++) t << " x" << i;
    t << "\ndecision";
    for (int i = 0; i < g; i++) t << " d" << i;
    if (extra) t << " b";
    t << "\noutcome";
    for (int i = 0; i < no; i++) t << " o" << i;
    t << "\nonehot";
    for (int i = 0; i < g; i++) t << " d" << i;
    t << "\naction";
    for (int i = 0; i < g; i++) t << " d" << i;
    t << "\n";
    if (extra) t << "action b\n";
    t << "constraint |(";
    for (int i = 0; i < g; i++) t << (i ? "," : "") << "d" << i;
    t << ")\n";
    for (int i = 0; i < g; i++)
      for (int j = i + 1; j < g; j++)
        t << "constraint !(&(d" << i << ",d" << j << "))\n";
    Scenario s = Scenario::parse(t.str());

    // a couple of random constraints, avoiding group indicators so the
    // actions stay live
    std::vector<int> free_atoms;
    for (int v = 0; v < s.num_vars(); v++)
      if (s.vars[v][0] != 'd') free_atoms.push_back(v);
    int extra_cons = pick(rng, 3);
    std::ostringstream t2;
    for (int k = 0; k < extra_cons; k++) {
      Formula f = random_formula(rng, free_atoms, 2);
      t2 << "constraint " << print_formula(f, s) << "\n";
    }
    Scenario s2 = Scenario::parse(t.str() + t2.str());

    Compiled c = compile_scenario(s2);
    if (c.root == kFalseId) continue;
    std::vector<Bits> models = c.m.enumerate_models(c.root);
    if (models.size() < 4) continue;
    bool live = true;
    for (const ActionGroup& ag : s2.action_groups)
      for (size_t ai = 0; ai < ag.indicators.size() * (ag.boolean() ? 2 : 1);
           ai++) {
        ActionRef a{ag.indicators[ag.boolean() ? 0 : ai],
                    ag.boolean() ? ai == 0 : true};
        bool found = false;
        for (Bits w : models) {
          bool match = bit(w, a.var) == a.positive;
          if (!ag.boolean())
            for (int v : ag.indicators)
              if (v != a.var && bit(w, v)) match = false;
          if (match) {
            found = true;
            break;
          }
        }
        if (!found) live = false;
      }
    if (!live) continue;
    return s2;
  }
}

inline std::vector<Bits> sample_rows(std::mt19937_64& rng,
                                     const std::vector<Bits>& models, int n) {
  std::vector<Bits> rows;
  rows.reserve(n);
  for (int i = 0; i < n; i++)
    rows.push_back(models[pick(rng, int(models.size()))]);
  return rows;
}

// Random utility over the scenario's outcomes: linear or tabular, sometimes
// context-relative, weights in [0,1]. Tables cover every support projection.
inline UtilityFunction random_utility(std::mt19937_64& rng, const Scenario& s,
                                      const std::vector<Bits>& support) {
  UtilityFunction u;
  u.linear = pick(rng, 2) == 0;
  u.context_relative = pick(rng, 3) == 0;
  u.outcome_vars = s.cell_vars(Cell::Outcome);
  Bits omask = 0;
  for (int v : u.outcome_vars) omask |= Bits(1) << v;
  Bits cmask = 0;
  if (u.context_relative) {
    u.context_vars = s.cell_vars(Cell::Context);
    for (int v : u.context_vars) cmask |= Bits(1) << v;
  }
  auto unit = [&] { return double(pick(rng, 1000)) / 999.0; };
  std::vector<Bits> ctx_keys;
  for (Bits w : support) {
    Bits cx = w & cmask;
    bool seen = false;
    for (Bits k : ctx_keys) seen = seen || k == cx;
    if (!seen) ctx_keys.push_back(cx);
  }
  for (Bits cx : ctx_keys) {
    if (u.linear) {
      std::vector<double> w(u.outcome_vars.size());
      for (double& x : w) x = unit();
      u.weights[cx] = std::move(w);
    } else {
      for (Bits m : support)
        if ((m & cmask) == cx) u.table[cx][m & omask] = unit();
    }
  }
  return u;
}

// Fully assembled random instance for agreement batteries.
struct Instance {
  Scenario sc;
  Psdd p;
  UtilityFunction u;
};

inline Instance random_instance(std::mt19937_64& rng) {
  Scenario sc = random_scenario(rng);
  Compiled c = compile_scenario(sc);
  std::vector<Bits> models = c.m.enumerate_models(c.root);
  std::vector<Bits> rows = sample_rows(rng, models, 20 + pick(rng, 120));
  double smoothing = std::vector<double>{0.0, 0.5, 1.0, 2.5}[pick(rng, 4)];
  Psdd p = Psdd::fit(c.m, c.root, rows, smoothing);
  UtilityFunction u = random_utility(rng, sc, p.support());
  return {std::move(sc), std::move(p), std::move(u)};
}

// All actions across all groups, in declaration order.
inline std::vector<ActionRef> all_actions(const Scenario& s) {
  std::vector<ActionRef> out;
  for (const ActionGroup& g : s.action_groups) {
    if (g.boolean()) {
      out.push_back({g.indicators[0], true});
      out.push_back({g.indicators[0], false});
    } else {
      for (int v : g.indicators) out.push_back({v, true});
    }
  }
  return out;
}

// Random event over decisions outside a's group plus outcomes.
inline Formula random_event(std::mt19937_64& rng, const Scenario& s,
                            ActionRef a) {
  std::vector<int> group;
  for (const ActionGroup& g : s.action_groups)
    for (int v : g.indicators)
      if (v == a.var) group = g.indicators;
  std::vector<int> atoms;
  for (int v = 0; v < s.num_vars(); v++) {
    if (s.cells[v] == Cell::Context) continue;
    bool in_group = false;
    for (int gv : group) in_group = in_group || gv == v;
    if (!in_group) atoms.push_back(v);
  }
  return random_formula(rng, atoms, 2);
}

// Builtins fitted from their shipped generators.
inline Instance fit_builtin(const std::string& name, size_t n, uint64_t seed,
                            double smoothing, const UtilitySpec& uspec = {}) {
  Scenario sc = builtin_scenario(name);
  Compiled c = compile_scenario(sc);
  Dataset d = name == "lung_cancer"
                  ? generate_lung_cancer(sc, n, seed, 0.9)
              : name == "trolley" ? generate_trolley_standin(sc, n, seed)
                                  : generate_teamwork_standin(sc, n, seed);
  Psdd p = Psdd::fit(c.m, c.root, d.rows, smoothing);
  UtilityFunction u = learn_utility(p, sc, uspec);
  return {std::move(sc), std::move(p), std::move(u)};
}

inline Scenario planted_scenario() {
  return Scenario::parse(
      "scenario planted\n"
      "context x\n"
      "decision d0 d1 d2\n"
      "outcome o0 o1 o2\n"
      "onehot d0 d1 d2\n"
      "action d0 d1 d2\n"
      "constraint |(d0,d1,d2)\n"
      "constraint !(&(d0,d1))\n"
      "constraint !(&(d0,d2))\n"
      "constraint !(&(d1,d2))\n");
}

// Decision frequencies made exactly proportional to the planted expected
// utility: outcomes are deterministic per (context, decision) with the same
// pattern multiset in both contexts, so one global proportionality constant
// covers the pooled regression. Weights are eighths, so the row counts
// 8 * (w . pattern) are integers and the empirical conditionals are exact.
struct Planted {
  Scenario sc;
  std::vector<Bits> rows;
  std::vector<double> w;  // planted weights, one per outcome
};

inline Planted planted_instance(std::mt19937_64& rng) {
  Planted pl{planted_scenario(), {}, {}};
  for (int i = 0; i < 3; i++)
    pl.w.push_back(double(1 + pick(rng, 8)) / 8.0);

  // patterns over (o0,o1,o2); the 3x3 pattern matrix is nonsingular
  const int patterns[3][3] = {{1, 0, 0}, {1, 1, 0}, {0, 1, 1}};
  std::vector<int> perm{0, 1, 2};
  for (int cx = 0; cx < 2; cx++) {
    for (int d = 0; d < 3; d++) {
      const int* pat = patterns[perm[d]];
      double dot = 0;
      for (int i = 0; i < 3; i++) dot += pl.w[i] * pat[i];
      int count = int(std::lround(8 * dot));
      Bits m = 0;
      if (cx) m = set_bit(m, 0, true);
      m = set_bit(m, 1 + d, true);
      for (int i = 0; i < 3; i++)
        if (pat[i]) m = set_bit(m, 4 + i, true);
      for (int r = 0; r < count; r++) pl.rows.push_back(m);
    }
    std::shuffle(perm.begin(), perm.end(), rng);  // new assignment for cx=1
  }
  return pl;
}

inline UtilityFunction learn_planted(const Planted& pl, const UtilitySpec& spec,
                                     Psdd* out_p = nullptr) {
  Compiled c = compile_scenario(pl.sc);
  Psdd p = Psdd::fit(c.m, c.root, pl.rows, 0.0);
  UtilityFunction u = learn_utility(p, pl.sc, spec);
  if (out_p) *out_p = std::move(p);
  return u;
}

}  // namespace th

#endif

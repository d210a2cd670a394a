#include "pblame/oracle.h"

#include <algorithm>
#include <cmath>
#include <map>

namespace pblame {

namespace {

Bits mask_of(const std::vector<int>& vars) {
  Bits m = 0;
  for (int v : vars) m |= Bits(1) << v;
  return m;
}

// Pr(X = x) for every context value in the table, or the user table.
std::map<Bits, double> context_prior(const JointTable& t, const Scenario& s,
                                     const ContextDistribution& ctx) {
  Bits cmask = mask_of(s.cell_vars(Cell::Context));
  if (!ctx.from_model()) {
    std::map<Bits, double> prior;
    for (const auto& [key, w] : ctx.entries()) prior[key] += w;
    return prior;
  }
  std::map<Bits, double> prior;
  for (size_t i = 0; i < t.models.size(); i++)
    prior[t.models[i] & cmask] += t.probs[i];
  return prior;
}

bool matches(Bits m, ActionRef a) { return bit(m, a.var) == a.positive; }

}  // namespace

JointTable build_joint(const Psdd& p) {
  const std::vector<Bits>& support = p.support();
  if (support.size() > (size_t(1) << 20))
    throw query_error("support too large for a joint table (" +
                      std::to_string(support.size()) + " models)");
  JointTable t;
  t.num_vars = p.num_vars();
  t.models = support;
  t.probs.resize(support.size());
  KahanSum sum;
  for (size_t i = 0; i < support.size(); i++) {
    t.probs[i] = p.evaluate(support[i]);
    sum.add(t.probs[i]);
  }
  if (std::abs(sum.value() - 1.0) > 1e-12)
    throw query_error("joint probabilities sum to " +
                      format_double(sum.value()) + ", expected 1");
  return t;
}

double oracle_marginal(const JointTable& t, Bits mask, Bits val) {
  KahanSum sum;
  for (size_t i = 0; i < t.models.size(); i++)
    if ((t.models[i] & mask) == (val & mask)) sum.add(t.probs[i]);
  return sum.value();
}

double oracle_conditional(const JointTable& t, Bits qmask, Bits qval,
                          Bits emask, Bits eval) {
  Bits shared = qmask & emask;
  if (((qval ^ eval) & shared) != 0) return 0.0;  // query contradicts evidence
  double pe = oracle_marginal(t, emask, eval);
  if (pe <= 0) throw query_error("conditioning event has probability zero");
  Bits jm = qmask | emask;
  Bits jv = (qval & qmask) | (eval & emask);
  return oracle_marginal(t, jm, jv) / pe;
}

std::pair<Bits, double> oracle_mpe(const JointTable& t, Bits emask, Bits eval) {
  int best = -1;
  double best_p = -1;
  for (size_t i = 0; i < t.models.size(); i++) {
    if ((t.models[i] & emask) != (eval & emask)) continue;
    if (t.probs[i] > best_p) {
      best_p = t.probs[i];
      best = int(i);
    }
  }
  if (best < 0 || best_p <= 0)
    throw query_error("evidence has probability zero");
  return {t.models[best], best_p};
}

double oracle_prob_do(const JointTable& t, const Scenario& s, ActionRef a,
                      const Formula& event, const ContextDistribution& ctx) {
  Bits cmask = mask_of(s.cell_vars(Cell::Context));
  std::map<Bits, double> prior = context_prior(t, s, ctx);
  KahanSum acc;
  for (const auto& [x, w] : prior) {
    if (w <= 0) continue;
    KahanSum num, den;
    for (size_t i = 0; i < t.models.size(); i++) {
      if ((t.models[i] & cmask) != x || !matches(t.models[i], a)) continue;
      den.add(t.probs[i]);
      if (event.eval(t.models[i])) num.add(t.probs[i]);
    }
    if (den.value() > 0) acc.add(w * (num.value() / den.value()));
  }
  return acc.value();
}

double oracle_delta(const JointTable& t, const Scenario& s, ActionRef a,
                    ActionRef alt, const Formula& event,
                    const ContextDistribution& ctx) {
  double pa = oracle_prob_do(t, s, a, event, ctx);
  double pb = oracle_prob_do(t, s, alt, event, ctx);
  return std::max(pa - pb, 0.0);
}

double oracle_cost(const JointTable& t, const Scenario& s,
                   const UtilityFunction& u, ActionRef a,
                   const ContextDistribution& ctx) {
  Bits cmask = mask_of(s.cell_vars(Cell::Context));
  std::map<Bits, double> prior = context_prior(t, s, ctx);
  KahanSum acc;
  bool any = false;
  for (const auto& [x, w] : prior) {
    if (w <= 0) continue;
    KahanSum num, den;
    for (size_t i = 0; i < t.models.size(); i++) {
      if ((t.models[i] & cmask) != x || !matches(t.models[i], a)) continue;
      den.add(t.probs[i]);
      num.add(u.eval_world(t.models[i]) * t.probs[i]);
    }
    if (den.value() > 0) {
      any = true;
      acc.add(w * (num.value() / den.value()));
    }
  }
  if (!any)
    throw query_error("action has zero probability under every context");
  return -acc.value();
}

double oracle_db(const JointTable& t, const Scenario& s,
                 const UtilityFunction& u, ActionRef a, ActionRef alt,
                 const Formula& event, double N,
                 const ContextDistribution& ctx) {
  Bits cmask = mask_of(s.cell_vars(Cell::Context));
  std::map<Bits, double> prior = context_prior(t, s, ctx);
  std::vector<ActionRef> all = group_actions(s, a);
  double min_cost = 0;
  bool first = true;
  for (ActionRef g : all) {
    bool supported = false;
    for (size_t i = 0; i < t.models.size(); i++) {
      if (!matches(t.models[i], g) || t.probs[i] <= 0) continue;
      auto it = prior.find(t.models[i] & cmask);
      if (it != prior.end() && it->second > 0) supported = true;
    }
    if (!supported) continue;
    double c = oracle_cost(t, s, u, g, ctx);
    if (first || c < min_cost) min_cost = c;
    first = false;
  }
  double floor = -min_cost;
  if (!(N > floor))
    throw nbound_error("N = " + format_double(N) +
                       " is not admissible; N must exceed " +
                       format_double(floor));
  double d = oracle_delta(t, s, a, alt, event, ctx);
  if (d <= 0) return 0;
  double diff =
      std::max(oracle_cost(t, s, u, alt, ctx) - oracle_cost(t, s, u, a, ctx),
               0.0);
  return d * (N - diff) / N;
}

}  // namespace pblame

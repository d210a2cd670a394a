#ifndef PBLAME_ORACLE_H
#define PBLAME_ORACLE_H

#include <utility>
#include <vector>

#include "pblame/blame.h"
#include "pblame/common.h"
#include "pblame/logic.h"
#include "pblame/psdd.h"
#include "pblame/utility.h"

namespace pblame {

// Explicit joint distribution over the support, for brute-force reference
// computation. Test and verification plumbing only; every quantity below is
// a direct sum over listed worlds, sharing no traversal code with the
// circuit path.
struct JointTable {
  int num_vars = 0;
  std::vector<Bits> models;
  std::vector<double> probs;
};

// Tabulates evaluate() over the support. Errors when the support exceeds
// 2^20 models or the probabilities do not sum to 1 within 1e-12.
JointTable build_joint(const Psdd& p);

double oracle_marginal(const JointTable& t, Bits mask, Bits val);
double oracle_conditional(const JointTable& t, Bits qmask, Bits qval,
                          Bits emask, Bits eval);
std::pair<Bits, double> oracle_mpe(const JointTable& t, Bits emask, Bits eval);

double oracle_prob_do(const JointTable& t, const Scenario& s, ActionRef a,
                      const Formula& event, const ContextDistribution& ctx);
double oracle_delta(const JointTable& t, const Scenario& s, ActionRef a,
                    ActionRef alt, const Formula& event,
                    const ContextDistribution& ctx);
double oracle_cost(const JointTable& t, const Scenario& s,
                   const UtilityFunction& u, ActionRef a,
                   const ContextDistribution& ctx);
double oracle_db(const JointTable& t, const Scenario& s,
                 const UtilityFunction& u, ActionRef a, ActionRef alt,
                 const Formula& event, double N,
                 const ContextDistribution& ctx);

}  // namespace pblame

#endif

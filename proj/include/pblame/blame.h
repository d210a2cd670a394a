#ifndef PBLAME_BLAME_H
#define PBLAME_BLAME_H

#include <string>
#include <utility>
#include <vector>

#include "pblame/common.h"
#include "pblame/logic.h"
#include "pblame/psdd.h"
#include "pblame/utility.h"

namespace pblame {

// Distribution over context assignments: either the model's own marginal or
// an explicit user-supplied table of (context bits, weight) entries.
class ContextDistribution {
 public:
  static ContextDistribution model() { return ContextDistribution(); }
  static ContextDistribution table(std::vector<std::pair<Bits, double>> entries);
  static ContextDistribution parse(const std::string& text, const Scenario& s);
  static ContextDistribution load(const std::string& path, const Scenario& s);

  bool from_model() const { return from_model_; }
  const std::vector<std::pair<Bits, double>>& entries() const { return entries_; }

 private:
  bool from_model_ = true;
  std::vector<std::pair<Bits, double>> entries_;
};

// One action of a group: a one-hot indicator (positive) or either sign of a
// boolean action variable.
struct ActionRef {
  int var = -1;
  bool positive = true;
  bool operator==(const ActionRef& o) const {
    return var == o.var && positive == o.positive;
  }
};

struct BlameQuery {
  ActionRef action;
  std::vector<ActionRef> alternatives;  // empty: every other action of the group
  Formula event;
  std::string event_text;
  double N = 1.0;
  ContextDistribution contexts = ContextDistribution::model();
};

// Query file: named fields, one per line. `action`/`alternative` take an
// action name (prefix ! for the negation of a boolean action variable),
// `event` a formula, `N` a real. Unknown fields are errors.
BlameQuery parse_query(const std::string& text, const Scenario& s);
BlameQuery load_query(const std::string& path, const Scenario& s);

// Resolves "M" / "!M" to an ActionRef and back.
ActionRef parse_action(const std::string& token, const Scenario& s);
std::string action_label(const Scenario& s, ActionRef a);
// All actions of the group containing a, in declaration order (a included).
std::vector<ActionRef> group_actions(const Scenario& s, ActionRef a);

struct PairwiseBlame {
  ActionRef alternative;
  double prob_do_alt = 0;
  double delta = 0;
  double cost_alt = 0;
  double db = 0;
};

struct BlameReport {
  std::string action_label;
  std::string event_text;
  double N = 0;
  double n_floor = 0;  // minimum admissible N, strict lower bound
  double prob_do_action = 0;
  double cost_action = 0;
  std::vector<PairwiseBlame> pairs;
  double overall_db = 0;
  int overall_index = -1;  // into pairs; -1 when pairs empty
  std::vector<std::string> skipped;  // zero-probability contexts etc.
  size_t terms_visited = 0;  // support models touched in the widest sweep

  std::string to_text(const Scenario& s) const;
  std::string to_json(const Scenario& s) const;
};

// Back-door interventional probability of the event under do(a): sum over
// contexts of Pr'(X) Pr(event | a, X), summing only support models. Skipped
// zero-probability contexts are appended to `skipped` when given; `terms`
// receives the number of support-model visits of the sweep.
double prob_do(const Psdd& p, const Scenario& s, ActionRef a,
               const Formula& event, const ContextDistribution& ctx,
               std::vector<std::string>* skipped = nullptr,
               size_t* terms = nullptr);

// max(prob_do(a) - prob_do(alt), 0)
double delta(const Psdd& p, const Scenario& s, ActionRef a, ActionRef alt,
             const Formula& event, const ContextDistribution& ctx);

// Negative expected utility of doing a, averaged over contexts. Errors when
// a has zero probability under every context.
double cost(const Psdd& p, const Scenario& s, const UtilityFunction& u,
            ActionRef a, const ContextDistribution& ctx,
            std::vector<std::string>* skipped = nullptr);

// db_N = delta * (N - max(cost_alt - cost_a, 0)) / N
double db_formula(double delta, double cost_a, double cost_alt, double N);

// Full pairwise report against the query's alternatives (all other group
// actions when the list is empty); overall blame is the pairwise maximum,
// ties resolved toward the earliest alternative in declaration order.
BlameReport blameworthiness(const Psdd& p, const Scenario& s,
                            const UtilityFunction& u, const BlameQuery& q);

// Convenience wrapper: maximum db over all alternatives plus the witness.
std::pair<double, ActionRef> overall_blame(const Psdd& p, const Scenario& s,
                                           const UtilityFunction& u,
                                           ActionRef a, const Formula& event,
                                           const std::string& event_text,
                                           double N,
                                           const ContextDistribution& ctx);

}  // namespace pblame

#endif

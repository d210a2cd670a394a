#ifndef PBLAME_PSDD_H
#define PBLAME_PSDD_H

#include <string>
#include <utility>
#include <vector>

#include "pblame/common.h"
#include "pblame/sdd.h"
#include "pblame/vtree.h"

namespace pblame {

// Probabilistic circuit over the support of a compiled SDD. Parameters are
// maximum-likelihood with `smoothing` virtual copies of every support model,
// so the induced distribution is (count(m) + s) / (n + s * |support|) for
// each support model m and exactly the empirical distribution at s = 0.
//
// Structurally: at each internal vtree node along the right spine, a decision
// node splits on the complete left-block assignments present in the support;
// primes are parameter-free pinned literal chains (shared), decision and top
// nodes are per-context (never shared). Queries are one bottom-up pass.
class Psdd {
 public:
  struct Element {
    uint32_t prime, sub;
    double theta;
  };
  struct Node {
    enum class Kind : uint8_t { Literal, Top, Decision };
    Kind kind;
    int vpos = -1;
    int var = -1;              // Literal, Top
    bool sign = false;         // Literal
    double theta_pos = 0;      // Top
    double theta_neg = 0;
    std::vector<Element> elements;  // Decision
  };

  static Psdd fit(SddManager& m, NodeId root, const std::vector<Bits>& rows,
                  double smoothing);

  const Vtree& vtree() const { return vtree_; }
  int num_vars() const { return vtree_.num_vars(); }
  size_t num_nodes() const { return nodes_.size(); }
  uint32_t root() const { return root_; }
  const Node& node(size_t i) const { return nodes_[i]; }
  double smoothing() const { return smoothing_; }

  // Support models in declaration-order lexicographic order.
  const std::vector<Bits>& support() const { return support_; }

  double evaluate(Bits w) const;                   // complete assignment
  double marginal(Bits mask, Bits val) const;      // partial evidence
  double conditional(Bits qmask, Bits qval, Bits emask, Bits eval) const;
  std::pair<Bits, double> mpe(Bits emask, Bits eval) const;

  // Nodes touched by the most recent evaluate/marginal/mpe pass.
  size_t last_visits() const { return last_visits_; }

  void validate() const;

  std::string to_text() const;
  void save(const std::string& path) const;
  static Psdd load_text(const std::string& text, Vtree vt);
  static Psdd load(const std::string& path, Vtree vt);

 private:
  Vtree vtree_{Vtree::build(1, VtreeStrategy::Balanced)};
  std::vector<Node> nodes_;
  uint32_t root_ = 0;
  std::vector<Bits> support_;
  double smoothing_ = 0;
  mutable size_t last_visits_ = 0;

  Psdd() = default;
  void walk_support();
};

}  // namespace pblame

#endif

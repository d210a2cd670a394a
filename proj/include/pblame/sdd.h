#ifndef PBLAME_SDD_H
#define PBLAME_SDD_H

#include <string>
#include <unordered_map>
#include <vector>

#include "pblame/common.h"
#include "pblame/logic.h"
#include "pblame/vtree.h"

namespace pblame {

using NodeId = uint32_t;
constexpr NodeId kFalseId = 0;
constexpr NodeId kTrueId = 1;
constexpr NodeId kNoId = 0xffffffffu;

enum class Op { And, Or };

struct SddElement {
  NodeId prime, sub;
};

struct SddNode {
  int vpos = -1;   // vtree position; -1 for the constants
  int literal = 0; // +-(var+1) for literal nodes, 0 otherwise
  std::vector<SddElement> elements;
  NodeId neg = kNoId;
  bool is_decision() const { return literal == 0 && vpos >= 0; }
};

// Canonical (trimmed, compressed) SDDs over a fixed vtree. Nodes live in an
// arena and are deduplicated through a unique table, so structural equality
// is id equality and compiling equivalent formulas yields the same id.
class SddManager {
 public:
  explicit SddManager(Vtree vt);

  const Vtree& vtree() const { return vtree_; }
  int num_vars() const { return vtree_.num_vars(); }
  size_t num_nodes() const { return nodes_.size(); }
  const SddNode& node(NodeId id) const { return nodes_[id]; }

  NodeId literal(int var, bool positive) const {
    return NodeId(2 + 2 * var + (positive ? 0 : 1));
  }

  NodeId apply(NodeId x, NodeId y, Op op);
  NodeId negate(NodeId x);
  NodeId compile(const Formula& f);
  NodeId compile(const std::vector<Formula>& conjuncts);

  // Models over all num_vars() variables.
  uint64_t model_count(NodeId x);
  bool is_model(NodeId x, Bits w) const;
  // Complete assignments consistent with the evidence, in declaration-order
  // lexicographic order. Throws if more than cap models would be produced.
  std::vector<Bits> enumerate_models(NodeId x, uint64_t cap = (uint64_t(1) << 21));
  std::vector<Bits> enumerate_models(NodeId x, Bits evid_mask, Bits evid_val,
                                     uint64_t cap = (uint64_t(1) << 21));

  // Structural invariants of one node: primes consistent, pairwise disjoint,
  // exhaustive. For tests.
  bool check_partition(NodeId id);

  // Text serialization: nodes reachable from root, children before parents,
  // ids renumbered densely so output depends only on circuit structure.
  std::string to_text(NodeId root) const;
  void save(NodeId root, const std::string& path) const;
  NodeId load_text(const std::string& text);
  NodeId load(const std::string& path);

 private:
  struct DecisionKey {
    int vpos;
    std::vector<SddElement> elements;
    bool operator==(const DecisionKey& o) const {
      if (vpos != o.vpos || elements.size() != o.elements.size()) return false;
      for (size_t i = 0; i < elements.size(); i++)
        if (elements[i].prime != o.elements[i].prime ||
            elements[i].sub != o.elements[i].sub)
          return false;
      return true;
    }
  };
  struct DecisionKeyHash {
    size_t operator()(const DecisionKey& k) const {
      uint64_t h = uint64_t(k.vpos) * 0x9e3779b97f4a7c15ull;
      for (const SddElement& e : k.elements) {
        h ^= (uint64_t(e.prime) << 32 | e.sub) + 0x9e3779b97f4a7c15ull +
             (h << 6) + (h >> 2);
      }
      return size_t(h);
    }
  };

  Vtree vtree_;
  std::vector<SddNode> nodes_;
  std::unordered_map<DecisionKey, NodeId, DecisionKeyHash> unique_;
  std::unordered_map<uint64_t, NodeId> and_cache_, or_cache_;
  std::unordered_map<NodeId, uint64_t> mc_cache_;

  NodeId unique_decision(int vpos, std::vector<SddElement> elems);
  uint64_t mc_node(NodeId x);
  void enum_into(NodeId x, int v, Bits evid_mask, Bits evid_val, uint64_t cap,
                 std::vector<Bits>& out);
  void free_block(int lo, int hi, Bits evid_mask, Bits evid_val, uint64_t cap,
                  std::vector<Bits>& out) const;
};

}  // namespace pblame

#endif

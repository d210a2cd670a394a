#ifndef PBLAME_VTREE_H
#define PBLAME_VTREE_H

#include <string>
#include <vector>

namespace pblame {

enum class VtreeStrategy { Balanced, RightLinear };

// Full binary tree over the scenario variables in declaration order.
// Nodes are addressed by in-order position (0 .. 2n-2); every node covers a
// contiguous range [lo, hi) of variable indices.
class Vtree {
 public:
  static Vtree build(int num_vars, VtreeStrategy strategy);
  static Vtree parse(const std::string& text, const std::vector<std::string>& names);
  static Vtree load(const std::string& path, const std::vector<std::string>& names);

  std::string to_text(const std::vector<std::string>& names) const;
  void save(const std::string& path, const std::vector<std::string>& names) const;

  int root() const { return root_; }
  int num_vars() const { return num_vars_; }
  int num_nodes() const { return int(nodes_.size()); }
  bool is_leaf(int p) const { return nodes_[p].var >= 0; }
  int var_of(int p) const { return nodes_[p].var; }
  int leaf_of(int var) const { return 2 * var; }
  int left(int p) const { return nodes_[p].left; }
  int right(int p) const { return nodes_[p].right; }
  int parent(int p) const { return nodes_[p].parent; }
  int lo(int p) const { return nodes_[p].lo; }
  int hi(int p) const { return nodes_[p].hi; }
  int width(int p) const { return nodes_[p].hi - nodes_[p].lo; }
  int depth() const;

  // Smallest node whose variable range contains both a and b.
  int lca(int a, int b) const;
  bool contains(int outer, int inner) const {
    return lo(outer) <= lo(inner) && hi(inner) <= hi(outer);
  }

 private:
  struct Node {
    int left = -1, right = -1, parent = -1;
    int var = -1;
    int lo = 0, hi = 0;
  };
  std::vector<Node> nodes_;
  int root_ = 0;
  int num_vars_ = 0;

  int build_range(int lo, int hi, VtreeStrategy strategy);
};

}  // namespace pblame

#endif

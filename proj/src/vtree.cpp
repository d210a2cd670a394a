#include "pblame/vtree.h"

#include <cctype>
#include <fstream>
#include <memory>
#include <sstream>

#include "pblame/common.h"

namespace pblame {

// In-order position of a subtree over [lo,hi) split at m: leaves sit at 2*i,
// internal nodes at 2*m-1, so positions come out contiguous without renumbering.
int Vtree::build_range(int lo, int hi, VtreeStrategy strategy) {
  if (hi - lo == 1) {
    int p = 2 * lo;
    nodes_[p].var = lo;
    nodes_[p].lo = lo;
    nodes_[p].hi = hi;
    return p;
  }
  int m = strategy == VtreeStrategy::RightLinear ? lo + 1 : lo + (hi - lo + 1) / 2;
  int l = build_range(lo, m, strategy);
  int r = build_range(m, hi, strategy);
  int p = 2 * m - 1;
  nodes_[p].left = l;
  nodes_[p].right = r;
  nodes_[p].lo = lo;
  nodes_[p].hi = hi;
  nodes_[l].parent = p;
  nodes_[r].parent = p;
  return p;
}

Vtree Vtree::build(int num_vars, VtreeStrategy strategy) {
  if (num_vars < 1) throw parse_error("vtree needs at least one variable");
  if (num_vars > kMaxVars)
    throw parse_error("vtree exceeds " + std::to_string(kMaxVars) + " variables");
  Vtree v;
  v.num_vars_ = num_vars;
  v.nodes_.resize(2 * num_vars - 1);
  v.root_ = v.build_range(0, num_vars, strategy);
  return v;
}

int Vtree::depth() const {
  int best = 0;
  for (int var = 0; var < num_vars_; var++) {
    int d = 0;
    for (int p = leaf_of(var); p != root_; p = parent(p)) d++;
    if (d > best) best = d;
  }
  return best;
}

int Vtree::lca(int a, int b) const {
  int p = a;
  while (!contains(p, b)) p = parent(p);
  return p;
}

namespace {

void print_node(const Vtree& v, int p, const std::vector<std::string>& names,
                std::string& out) {
  if (v.is_leaf(p)) {
    out += names[v.var_of(p)];
    return;
  }
  out += '(';
  print_node(v, v.left(p), names, out);
  out += ' ';
  print_node(v, v.right(p), names, out);
  out += ')';
}

struct VtreeParser {
  const std::string& text;
  const std::vector<std::string>& names;
  size_t pos = 0;
  // pairs of (leaf order index, subtree shape); we rebuild with build-like
  // recursion once the leaf sequence is known to match declaration order.
  struct Shape {
    int var = -1;
    std::unique_ptr<Shape> l, r;
  };

  [[noreturn]] void fail(const std::string& what) {
    throw parse_error("vtree parse error at position " + std::to_string(pos + 1) +
                      ": " + what);
  }

  void skip_ws() {
    while (pos < text.size() && isspace((unsigned char)text[pos])) pos++;
  }

  std::unique_ptr<Shape> node() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of input");
    auto s = std::make_unique<Shape>();
    if (text[pos] == '(') {
      pos++;
      s->l = node();
      s->r = node();
      skip_ws();
      if (pos >= text.size() || text[pos] != ')') fail("expected ')'");
      pos++;
    } else {
      size_t start = pos;
      while (pos < text.size() && text[pos] != '(' && text[pos] != ')' &&
             !isspace((unsigned char)text[pos]))
        pos++;
      if (pos == start) fail("expected variable name");
      std::string name = text.substr(start, pos - start);
      for (size_t i = 0; i < names.size(); i++)
        if (names[i] == name) s->var = int(i);
      if (s->var < 0) fail("unknown variable '" + name + "'");
    }
    return s;
  }
};

}  // namespace

std::string Vtree::to_text(const std::vector<std::string>& names) const {
  std::string out;
  print_node(*this, root_, names, out);
  out += '\n';
  return out;
}

void Vtree::save(const std::string& path, const std::vector<std::string>& names) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write vtree file '" + path + "'");
  out << to_text(names);
}

Vtree Vtree::parse(const std::string& text, const std::vector<std::string>& names) {
  VtreeParser p{text, names};
  auto shape = p.node();
  p.skip_ws();
  if (p.pos < text.size()) p.fail("trailing input");

  // Leaves must be exactly the declared variables, in declaration order.
  std::vector<int> leaf_seq;
  struct Rec {
    std::vector<int>& seq;
    void operator()(const VtreeParser::Shape* s) {
      if (s->var >= 0) {
        seq.push_back(s->var);
        return;
      }
      (*this)(s->l.get());
      (*this)(s->r.get());
    }
  } rec{leaf_seq};
  rec(shape.get());
  if (leaf_seq.size() != names.size())
    throw parse_error("vtree has " + std::to_string(leaf_seq.size()) +
                      " leaves for " + std::to_string(names.size()) + " variables");
  for (size_t i = 0; i < leaf_seq.size(); i++)
    if (leaf_seq[i] != int(i))
      throw parse_error("vtree leaves out of declaration order at leaf " +
                        std::to_string(i + 1));

  Vtree v;
  v.num_vars_ = int(names.size());
  v.nodes_.resize(2 * v.num_vars_ - 1);
  // rebuild positions from the shape; leaves are consecutive so ranges follow
  struct Build {
    Vtree& v;
    int next_var = 0;
    int operator()(const VtreeParser::Shape* s) {
      if (s->var >= 0) {
        int var = next_var++;
        int p = 2 * var;
        v.nodes_[p].var = var;
        v.nodes_[p].lo = var;
        v.nodes_[p].hi = var + 1;
        return p;
      }
      int l = (*this)(s->l.get());
      int r = (*this)(s->r.get());
      int p = 2 * v.nodes_[r].lo - 1;
      v.nodes_[p].left = l;
      v.nodes_[p].right = r;
      v.nodes_[p].lo = v.nodes_[l].lo;
      v.nodes_[p].hi = v.nodes_[r].hi;
      v.nodes_[l].parent = p;
      v.nodes_[r].parent = p;
      return p;
    }
  } build{v};
  v.root_ = build(shape.get());
  return v;
}

Vtree Vtree::load(const std::string& path, const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open vtree file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), names);
}

}  // namespace pblame

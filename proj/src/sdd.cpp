#include "pblame/sdd.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace pblame {

SddManager::SddManager(Vtree vt) : vtree_(std::move(vt)) {
  nodes_.resize(2 + 2 * size_t(vtree_.num_vars()));
  nodes_[kFalseId].neg = kTrueId;
  nodes_[kTrueId].neg = kFalseId;
  for (int v = 0; v < vtree_.num_vars(); v++) {
    NodeId pos = literal(v, true), neg = literal(v, false);
    nodes_[pos].vpos = nodes_[neg].vpos = vtree_.leaf_of(v);
    nodes_[pos].literal = v + 1;
    nodes_[neg].literal = -(v + 1);
    nodes_[pos].neg = neg;
    nodes_[neg].neg = pos;
  }
}

// Compression first (merge equal subs, or-ing their primes), then trimming.
// Elements arrive mutually exclusive and exhaustive; both steps preserve that.
NodeId SddManager::unique_decision(int vpos, std::vector<SddElement> elems) {
  std::vector<SddElement> merged;
  for (const SddElement& e : elems) {
    if (e.prime == kFalseId) continue;
    bool found = false;
    for (SddElement& m : merged) {
      if (m.sub == e.sub) {
        m.prime = apply(m.prime, e.prime, Op::Or);
        found = true;
        break;
      }
    }
    if (!found) merged.push_back(e);
  }

  if (merged.size() == 1) {
    // exhaustive single prime must be valid, i.e. the true terminal
    return merged[0].sub;
  }
  if (merged.size() == 2 && merged[0].sub == kTrueId && merged[1].sub == kFalseId)
    return merged[0].prime;
  if (merged.size() == 2 && merged[0].sub == kFalseId && merged[1].sub == kTrueId)
    return merged[1].prime;

  std::sort(merged.begin(), merged.end(),
            [](const SddElement& a, const SddElement& b) { return a.prime < b.prime; });

  DecisionKey key{vpos, merged};
  auto it = unique_.find(key);
  if (it != unique_.end()) return it->second;
  NodeId id = NodeId(nodes_.size());
  SddNode n;
  n.vpos = vpos;
  n.elements = std::move(merged);
  nodes_.push_back(std::move(n));
  unique_.emplace(std::move(key), id);
  return id;
}

NodeId SddManager::negate(NodeId x) {
  if (nodes_[x].neg != kNoId) return nodes_[x].neg;
  // copy out: recursion grows the arena and would invalidate references
  int vpos = nodes_[x].vpos;
  std::vector<SddElement> src = nodes_[x].elements;
  std::vector<SddElement> elems;
  elems.reserve(src.size());
  for (const SddElement& e : src) elems.push_back({e.prime, negate(e.sub)});
  NodeId r = unique_decision(vpos, std::move(elems));
  nodes_[x].neg = r;
  nodes_[r].neg = x;
  return r;
}

NodeId SddManager::apply(NodeId x, NodeId y, Op op) {
  if (x == y) return x;
  if (op == Op::And) {
    if (x == kFalseId || y == kFalseId) return kFalseId;
    if (x == kTrueId) return y;
    if (y == kTrueId) return x;
  } else {
    if (x == kTrueId || y == kTrueId) return kTrueId;
    if (x == kFalseId) return y;
    if (y == kFalseId) return x;
  }
  if (nodes_[x].neg == y) return op == Op::And ? kFalseId : kTrueId;

  NodeId a = std::min(x, y), b = std::max(x, y);
  uint64_t key = (uint64_t(a) << 32) | b;
  auto& cache = op == Op::And ? and_cache_ : or_cache_;
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  int vx = nodes_[x].vpos, vy = nodes_[y].vpos;
  NodeId result;
  if (vx == vy && vtree_.is_leaf(vx)) {
    // distinct literals on one variable (x == y and x == neg y handled above)
    result = op == Op::And ? kFalseId : kTrueId;
  } else {
    int v = vtree_.lca(vx, vy);
    // expansion of a node relative to v: its own elements if normalized for v,
    // a Shannon split if it lives in the left subtree, a lift if in the right
    auto expand = [&](NodeId n, std::vector<SddElement>& out) {
      int vn = nodes_[n].vpos;
      if (vn == v) {
        out = nodes_[n].elements;
      } else if (vtree_.contains(vtree_.left(v), vn)) {
        out = {{n, kTrueId}, {negate(n), kFalseId}};
      } else {
        out = {{kTrueId, n}};
      }
    };
    std::vector<SddElement> ex, ey, prod;
    expand(x, ex);
    expand(y, ey);
    for (const SddElement& e1 : ex) {
      for (const SddElement& e2 : ey) {
        NodeId p = apply(e1.prime, e2.prime, Op::And);
        if (p == kFalseId) continue;
        prod.push_back({p, apply(e1.sub, e2.sub, op)});
      }
    }
    result = unique_decision(v, std::move(prod));
  }
  cache.emplace(key, result);
  return result;
}

NodeId SddManager::compile(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      return literal(f.var, true);
    case Formula::Kind::Not:
      return negate(compile(f.args[0]));
    case Formula::Kind::And: {
      NodeId r = kTrueId;
      for (const Formula& a : f.args) r = apply(r, compile(a), Op::And);
      return r;
    }
    case Formula::Kind::Or: {
      NodeId r = kFalseId;
      for (const Formula& a : f.args) r = apply(r, compile(a), Op::Or);
      return r;
    }
    case Formula::Kind::Implies:
      return apply(negate(compile(f.args[0])), compile(f.args[1]), Op::Or);
    case Formula::Kind::Iff: {
      NodeId l = compile(f.args[0]), r = compile(f.args[1]);
      return apply(apply(l, r, Op::And), apply(negate(l), negate(r), Op::And), Op::Or);
    }
  }
  return kFalseId;
}

NodeId SddManager::compile(const std::vector<Formula>& conjuncts) {
  NodeId r = kTrueId;
  for (const Formula& f : conjuncts) r = apply(r, compile(f), Op::And);
  return r;
}

// Count over the node's own variable range; callers scale gaps by 2^missing.
uint64_t SddManager::mc_node(NodeId x) {
  auto it = mc_cache_.find(x);
  if (it != mc_cache_.end()) return it->second;
  const SddNode& n = nodes_[x];
  uint64_t total = 0;
  if (n.literal != 0) {
    total = 1;
  } else {
    int lv = vtree_.left(n.vpos), rv = vtree_.right(n.vpos);
    auto scaled = [&](NodeId c, int target) -> uint64_t {
      if (c == kFalseId) return 0;
      if (c == kTrueId) return uint64_t(1) << vtree_.width(target);
      return mc_node(c) << (vtree_.width(target) - vtree_.width(nodes_[c].vpos));
    };
    for (const SddElement& e : n.elements)
      total += scaled(e.prime, lv) * scaled(e.sub, rv);
  }
  mc_cache_.emplace(x, total);
  return total;
}

uint64_t SddManager::model_count(NodeId x) {
  int n = num_vars();
  if (n >= 63) throw query_error("model count overflows past 62 variables");
  if (x == kFalseId) return 0;
  if (x == kTrueId) return uint64_t(1) << n;
  return mc_node(x) << (n - vtree_.width(nodes_[x].vpos));
}

bool SddManager::is_model(NodeId x, Bits w) const {
  if (x == kFalseId) return false;
  if (x == kTrueId) return true;
  const SddNode& n = nodes_[x];
  if (n.literal != 0) {
    int var = std::abs(n.literal) - 1;
    return bit(w, var) == (n.literal > 0);
  }
  for (const SddElement& e : n.elements)
    if (is_model(e.prime, w)) return is_model(e.sub, w);
  return false;
}

void SddManager::free_block(int lo, int hi, Bits evid_mask, Bits evid_val,
                            uint64_t cap, std::vector<Bits>& out) const {
  out.assign(1, 0);
  for (int i = lo; i < hi; i++) {
    if (bit(evid_mask, i)) {
      if (bit(evid_val, i))
        for (Bits& b : out) b = set_bit(b, i, true);
      continue;
    }
    size_t sz = out.size();
    if (2 * sz > cap) throw query_error("model enumeration exceeds cap");
    out.reserve(2 * sz);
    for (size_t k = 0; k < sz; k++) out.push_back(set_bit(out[k], i, true));
  }
}

// Emits partial assignments over range(v), absolute bit positions. x must be
// the false/true terminal or satisfy range(vpos(x)) within range(v); gap
// variables are expanded freely against the evidence.
void SddManager::enum_into(NodeId x, int v, Bits evid_mask, Bits evid_val,
                           uint64_t cap, std::vector<Bits>& out) {
  out.clear();
  if (x == kFalseId) return;
  if (x == kTrueId) {
    free_block(vtree_.lo(v), vtree_.hi(v), evid_mask, evid_val, cap, out);
    return;
  }
  const SddNode& n = nodes_[x];
  if (n.vpos != v) {
    std::vector<Bits> inner, gap_lo, gap_hi;
    enum_into(x, n.vpos, evid_mask, evid_val, cap, inner);
    free_block(vtree_.lo(v), vtree_.lo(n.vpos), evid_mask, evid_val, cap, gap_lo);
    free_block(vtree_.hi(n.vpos), vtree_.hi(v), evid_mask, evid_val, cap, gap_hi);
    uint64_t total = uint64_t(inner.size()) * gap_lo.size() * gap_hi.size();
    if (total > cap) throw query_error("model enumeration exceeds cap");
    out.reserve(total);
    for (Bits a : inner)
      for (Bits b : gap_lo)
        for (Bits c : gap_hi) out.push_back(a | b | c);
    return;
  }
  if (n.literal != 0) {
    int var = std::abs(n.literal) - 1;
    bool val = n.literal > 0;
    if (bit(evid_mask, var) && bit(evid_val, var) != val) return;
    out.push_back(val ? (Bits(1) << var) : 0);
    return;
  }
  for (const SddElement& e : n.elements) {
    if (e.sub == kFalseId || e.prime == kFalseId) continue;
    std::vector<Bits> ls, rs;
    enum_into(e.prime, vtree_.left(v), evid_mask, evid_val, cap, ls);
    if (ls.empty()) continue;
    enum_into(e.sub, vtree_.right(v), evid_mask, evid_val, cap, rs);
    uint64_t add = uint64_t(ls.size()) * rs.size();
    if (out.size() + add > cap) throw query_error("model enumeration exceeds cap");
    for (Bits l : ls)
      for (Bits r : rs) out.push_back(l | r);
  }
}

std::vector<Bits> SddManager::enumerate_models(NodeId x, Bits evid_mask,
                                               Bits evid_val, uint64_t cap) {
  std::vector<Bits> out;
  if (x == kFalseId) return out;
  if (x == kTrueId) {
    free_block(0, num_vars(), evid_mask, evid_val, cap, out);
  } else {
    std::vector<Bits> inner;
    enum_into(x, nodes_[x].vpos, evid_mask, evid_val, cap, inner);
    int lo = vtree_.lo(nodes_[x].vpos), hi = vtree_.hi(nodes_[x].vpos);
    std::vector<Bits> gap_lo, gap_hi;
    free_block(0, lo, evid_mask, evid_val, cap, gap_lo);
    free_block(hi, num_vars(), evid_mask, evid_val, cap, gap_hi);
    uint64_t total = uint64_t(inner.size()) * gap_lo.size() * gap_hi.size();
    if (total > cap) throw query_error("model enumeration exceeds cap");
    out.reserve(total);
    for (Bits a : inner)
      for (Bits b : gap_lo)
        for (Bits c : gap_hi) out.push_back(a | b | c);
  }
  int n = num_vars();
  std::sort(out.begin(), out.end(), [n](Bits a, Bits b) {
    for (int i = 0; i < n; i++) {
      if (bit(a, i) != bit(b, i)) return !bit(a, i);
    }
    return false;
  });
  return out;
}

std::vector<Bits> SddManager::enumerate_models(NodeId x, uint64_t cap) {
  return enumerate_models(x, 0, 0, cap);
}

bool SddManager::check_partition(NodeId id) {
  const SddNode n = nodes_[id];
  if (!n.is_decision()) return true;
  NodeId any = kFalseId;
  for (size_t i = 0; i < n.elements.size(); i++) {
    if (n.elements[i].prime == kFalseId) return false;
    for (size_t j = i + 1; j < n.elements.size(); j++)
      if (apply(n.elements[i].prime, n.elements[j].prime, Op::And) != kFalseId)
        return false;
    any = apply(any, n.elements[i].prime, Op::Or);
  }
  return any == kTrueId;
}

std::string SddManager::to_text(NodeId root) const {
  // Canonical rendering: node ids and element order come from the circuit
  // structure alone (literals by variable, decisions layered by vtree width
  // with lexicographic element keys), never from arena ids. Any manager
  // holding a structurally identical circuit prints identical bytes, so
  // save -> load -> save is a fixpoint.
  std::unordered_map<NodeId, int> rank{{kFalseId, 0}, {kTrueId, 1}};
  std::vector<NodeId> lits;
  std::map<std::pair<int, int>, std::vector<NodeId>> decs;  // (width, vpos)
  std::vector<NodeId> stack;
  if (!rank.count(root)) stack.push_back(root);
  std::unordered_map<NodeId, char> seen{{kFalseId, 1}, {kTrueId, 1}, {root, 1}};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    const SddNode& n = nodes_[id];
    if (n.literal != 0) {
      lits.push_back(id);
    } else {
      decs[{vtree_.width(n.vpos), n.vpos}].push_back(id);
      for (const SddElement& e : n.elements)
        for (NodeId c : {e.prime, e.sub})
          if (!seen.count(c)) {
            seen.emplace(c, 1);
            stack.push_back(c);
          }
    }
  }
  std::sort(lits.begin(), lits.end(), [&](NodeId a, NodeId b) {
    int la = nodes_[a].literal, lb = nodes_[b].literal;
    int va = std::abs(la), vb = std::abs(lb);
    return va != vb ? va < vb : la > lb;
  });
  int next = 2;
  std::ostringstream body;
  for (NodeId id : lits) {
    rank.emplace(id, next);
    body << next++ << " L " << nodes_[id].literal << "\n";
  }
  using Key = std::vector<std::pair<int, int>>;
  for (auto& [layer, ids] : decs) {
    // children live at strictly smaller widths, so their ranks are final
    std::vector<std::pair<Key, NodeId>> keyed;
    for (NodeId id : ids) {
      Key k;
      for (const SddElement& e : nodes_[id].elements)
        k.push_back({rank.at(e.prime), rank.at(e.sub)});
      std::sort(k.begin(), k.end());
      keyed.push_back({std::move(k), id});
    }
    std::sort(keyed.begin(), keyed.end());
    for (auto& [k, id] : keyed) {
      rank.emplace(id, next);
      body << next++ << " D " << nodes_[id].vpos << " " << k.size();
      for (auto& [p, s] : k) body << " " << p << " " << s;
      body << "\n";
    }
  }
  std::ostringstream out;
  out << "sdd " << next << " " << rank.at(root) << "\n";
  out << "0 F\n1 T\n" << body.str();
  return out.str();
}

void SddManager::save(NodeId root, const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write circuit file '" + path + "'");
  out << to_text(root);
}

NodeId SddManager::load_text(const std::string& text) {
  std::istringstream in(text);
  std::string head;
  size_t count = 0;
  long long root_id = -1;
  in >> head >> count >> root_id;
  if (head != "sdd" || count < 2 || root_id < 0)
    throw parse_error("bad circuit header");
  std::unordered_map<long long, NodeId> idmap;
  std::string kind;
  for (size_t i = 0; i < count; i++) {
    long long id;
    if (!(in >> id >> kind)) throw parse_error("truncated circuit file");
    if (idmap.count(id))
      throw parse_error("duplicate node id " + std::to_string(id));
    NodeId built;
    if (kind == "F") {
      built = kFalseId;
    } else if (kind == "T") {
      built = kTrueId;
    } else if (kind == "L") {
      int lit;
      if (!(in >> lit) || lit == 0 || std::abs(lit) > num_vars())
        throw parse_error("bad literal in circuit file");
      built = literal(std::abs(lit) - 1, lit > 0);
    } else if (kind == "D") {
      int vpos;
      size_t k;
      if (!(in >> vpos >> k) || vpos < 0 || vpos >= vtree_.num_nodes() ||
          vtree_.is_leaf(vpos) || k < 1)
        throw parse_error("bad decision node in circuit file");
      std::vector<SddElement> elems;
      for (size_t j = 0; j < k; j++) {
        long long p, s;
        if (!(in >> p >> s)) throw parse_error("truncated decision node");
        auto ip = idmap.find(p), is = idmap.find(s);
        if (ip == idmap.end() || is == idmap.end())
          throw parse_error("node id " + std::to_string(id) +
                            " references an undefined child (ids must be topological)");
        elems.push_back({ip->second, is->second});
      }
      built = unique_decision(vpos, std::move(elems));
    } else {
      throw parse_error("unknown node kind '" + kind + "'");
    }
    idmap.emplace(id, built);
  }
  auto r = idmap.find(root_id);
  if (r == idmap.end()) throw parse_error("root id not defined");
  return r->second;
}

NodeId SddManager::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open circuit file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_text(buf.str());
}

}  // namespace pblame

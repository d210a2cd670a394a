#include "pblame/psdd.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace pblame {

namespace {

bool lex_less(Bits a, Bits b, int n) {
  for (int i = 0; i < n; i++)
    if (bit(a, i) != bit(b, i)) return !bit(a, i);
  return false;
}

Bits range_mask(int lo, int hi) {
  if (hi - lo >= 64) return ~Bits(0);
  return ((Bits(1) << (hi - lo)) - 1) << lo;
}

struct Builder {
  SddManager& m;
  const Vtree& vt;
  const std::vector<Bits>& models;   // sorted support
  const std::vector<double>& counts; // data flow per model
  double s;
  std::vector<Psdd::Node> nodes;
  std::map<std::pair<int, Bits>, uint32_t> term_cache;
  std::map<std::pair<int, bool>, uint32_t> lit_cache;

  uint32_t add(Psdd::Node n) {
    nodes.push_back(std::move(n));
    return uint32_t(nodes.size() - 1);
  }

  uint32_t literal_node(int v, int var, bool sign) {
    auto key = std::make_pair(var, sign);
    auto it = lit_cache.find(key);
    if (it != lit_cache.end()) return it->second;
    Psdd::Node n;
    n.kind = Psdd::Node::Kind::Literal;
    n.vpos = v;
    n.var = var;
    n.sign = sign;
    uint32_t id = add(std::move(n));
    lit_cache.emplace(key, id);
    return id;
  }

  // Pinned chain emitting one complete assignment over range(v). Parameter
  // free, so sharing across contexts is harmless.
  uint32_t term(int v, Bits bits) {
    Bits key_bits = bits & range_mask(vt.lo(v), vt.hi(v));
    auto key = std::make_pair(v, key_bits);
    auto it = term_cache.find(key);
    if (it != term_cache.end()) return it->second;
    uint32_t id;
    if (vt.is_leaf(v)) {
      id = literal_node(v, vt.var_of(v), bit(bits, vt.var_of(v)));
    } else {
      uint32_t l = term(vt.left(v), bits);
      uint32_t r = term(vt.right(v), bits);
      Psdd::Node n;
      n.kind = Psdd::Node::Kind::Decision;
      n.vpos = v;
      n.elements.push_back({l, r, 1.0});
      id = add(std::move(n));
    }
    term_cache.emplace(key, id);
    return id;
  }

  // Distribution over range(v) for support models [b, e), which agree on all
  // variables before lo(v).
  uint32_t build(int v, size_t b, size_t e) {
    if (vt.is_leaf(v)) {
      int var = vt.var_of(v);
      double f[2] = {0, 0};
      size_t c[2] = {0, 0};
      for (size_t i = b; i < e; i++) {
        int val = bit(models[i], var);
        f[val] += counts[i];
        c[val]++;
      }
      if (c[0] == 0 || c[1] == 0) return literal_node(v, var, c[1] > 0);
      double denom = f[0] + f[1] + s * double(c[0] + c[1]);
      Psdd::Node n;
      n.kind = Psdd::Node::Kind::Top;
      n.vpos = v;
      n.var = var;
      if (denom > 0) {
        n.theta_pos = (f[1] + s * double(c[1])) / denom;
        n.theta_neg = (f[0] + s * double(c[0])) / denom;
        // at smoothing 0 a value can get probability 0; drop the dead branch
        // so every stored parameter is positive
        if (n.theta_pos == 0) return literal_node(v, var, false);
        if (n.theta_neg == 0) return literal_node(v, var, true);
      } else {  // no data reaches this context: limit s -> 0+ of the ratio
        n.theta_pos = double(c[1]) / double(c[0] + c[1]);
        n.theta_neg = double(c[0]) / double(c[0] + c[1]);
      }
      return add(std::move(n));
    }

    int lv = vt.left(v), rv = vt.right(v);
    Bits mask = range_mask(vt.lo(lv), vt.hi(lv));
    struct Run {
      size_t b, e;
      double flow;
    };
    std::vector<Run> runs;
    double total_flow = 0;
    size_t i = b;
    while (i < e) {
      size_t j = i;
      double flow = 0;
      while (j < e && (models[j] & mask) == (models[i] & mask))
        flow += counts[j++];
      runs.push_back({i, j, flow});
      total_flow += flow;
      i = j;
    }
    double denom = total_flow + s * double(e - b);
    Psdd::Node n;
    n.kind = Psdd::Node::Kind::Decision;
    n.vpos = v;
    for (const Run& r : runs) {
      double mc = double(r.e - r.b);
      double theta =
          denom > 0 ? (r.flow + s * mc) / denom : mc / double(e - b);
      if (theta == 0) continue;  // dead branch at smoothing 0: omit it
      uint32_t prime = term(lv, models[r.b]);
      uint32_t sub = build(rv, r.b, r.e);
      n.elements.push_back({prime, sub, theta});
    }
    return add(std::move(n));
  }
};

}  // namespace

Psdd Psdd::fit(SddManager& m, NodeId root, const std::vector<Bits>& rows,
               double smoothing) {
  if (smoothing < 0) throw fit_error("smoothing must be nonnegative");
  if (root == kFalseId)
    throw fit_error("cannot fit parameters: the circuit is unsatisfiable");
  std::vector<Bits> models;
  try {
    models = m.enumerate_models(root);
  } catch (const Error&) {
    throw fit_error("constraint support too large to fit (cap 2^21 models)");
  }

  std::unordered_map<Bits, size_t> index;
  index.reserve(models.size() * 2);
  for (size_t i = 0; i < models.size(); i++) index.emplace(models[i], i);
  std::vector<double> counts(models.size(), 0.0);
  for (size_t r = 0; r < rows.size(); r++) {
    auto it = index.find(rows[r]);
    if (it == index.end())
      throw fit_error("data row " + std::to_string(r + 1) +
                      " violates the scenario constraints");
    counts[it->second] += 1.0;
  }

  Psdd p;
  p.vtree_ = m.vtree();
  p.smoothing_ = smoothing;
  Builder builder{m, p.vtree_, models, counts, smoothing, {}, {}, {}};
  p.root_ = builder.build(p.vtree_.root(), 0, models.size());
  p.nodes_ = std::move(builder.nodes);
  p.support_ = std::move(models);
  p.validate();
  return p;
}

double Psdd::marginal(Bits mask, Bits val) const {
  std::vector<LogProb> v(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); i++) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case Node::Kind::Literal:
        v[i] = !bit(mask, n.var) ? LogProb::one()
               : bit(val, n.var) == n.sign ? LogProb::one()
                                           : LogProb::zero();
        break;
      case Node::Kind::Top:
        v[i] = !bit(mask, n.var)
                   ? LogProb::one()
                   : LogProb::from_linear(bit(val, n.var) ? n.theta_pos
                                                          : n.theta_neg);
        break;
      case Node::Kind::Decision: {
        LogProb sum;
        for (const Element& e : n.elements)
          sum = sum + LogProb::from_linear(e.theta) * v[e.prime] * v[e.sub];
        v[i] = sum;
        break;
      }
    }
  }
  last_visits_ = nodes_.size();
  return v[root_].linear();
}

double Psdd::evaluate(Bits w) const {
  Bits all = num_vars() >= 64 ? ~Bits(0) : (Bits(1) << num_vars()) - 1;
  return marginal(all, w);
}

double Psdd::conditional(Bits qmask, Bits qval, Bits emask, Bits eval) const {
  for (int i = 0; i < num_vars(); i++)
    if (bit(qmask, i) && bit(emask, i) && bit(qval, i) != bit(eval, i))
      return 0.0;
  double pe = marginal(emask, eval);
  if (pe <= 0)
    throw query_error("conditioning event has probability zero");
  double pq = marginal(qmask | emask, (qval & qmask) | (eval & emask));
  return pq / pe;
}

std::pair<Bits, double> Psdd::mpe(Bits emask, Bits eval) const {
  struct Best {
    LogProb score;
    Bits bits = 0;
  };
  int n = num_vars();
  std::vector<Best> v(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); i++) {
    const Node& nd = nodes_[i];
    switch (nd.kind) {
      case Node::Kind::Literal: {
        bool blocked = bit(emask, nd.var) && bit(eval, nd.var) != nd.sign;
        v[i].score = blocked ? LogProb::zero() : LogProb::one();
        v[i].bits = nd.sign ? (Bits(1) << nd.var) : 0;
        break;
      }
      case Node::Kind::Top: {
        bool can0 = !bit(emask, nd.var) || !bit(eval, nd.var);
        bool can1 = !bit(emask, nd.var) || bit(eval, nd.var);
        Best b;
        if (can0) {
          b.score = LogProb::from_linear(nd.theta_neg);
          b.bits = 0;
        }
        if (can1) {
          LogProb s1 = LogProb::from_linear(nd.theta_pos);
          if (!can0 || s1 > b.score) {
            b.score = s1;
            b.bits = Bits(1) << nd.var;
          }
        }
        v[i] = b;
        break;
      }
      case Node::Kind::Decision: {
        Best b;
        for (const Element& e : nd.elements) {
          if (v[e.prime].score.is_zero() || v[e.sub].score.is_zero()) continue;
          LogProb sc = LogProb::from_linear(e.theta) * v[e.prime].score *
                       v[e.sub].score;
          if (sc.is_zero()) continue;
          Bits bits = v[e.prime].bits | v[e.sub].bits;
          if (b.score.is_zero() || sc > b.score ||
              (!(sc < b.score) && !(b.score < sc) && lex_less(bits, b.bits, n))) {
            b.score = sc;
            b.bits = bits;
          }
        }
        v[i] = b;
        break;
      }
    }
  }
  last_visits_ = nodes_.size();
  if (v[root_].score.is_zero())
    throw query_error("evidence has probability zero");
  return {v[root_].bits, v[root_].score.linear()};
}

void Psdd::validate() const {
  for (size_t i = 0; i < nodes_.size(); i++) {
    const Node& n = nodes_[i];
    if (n.kind == Node::Kind::Top) {
      if (n.theta_pos <= 0 || n.theta_neg <= 0)
        throw fit_error("zero-probability branch stored in circuit");
      if (std::abs(n.theta_pos + n.theta_neg - 1.0) > 1e-9)
        throw fit_error("terminal bias does not sum to one");
    } else if (n.kind == Node::Kind::Decision) {
      KahanSum sum;
      for (const Element& e : n.elements) {
        if (e.theta <= 0 || e.theta > 1)
          throw fit_error("element parameter outside (0,1]");
        if (e.prime >= i || e.sub >= i)
          throw fit_error("circuit is not topologically ordered");
        sum.add(e.theta);
      }
      if (std::abs(sum.value() - 1.0) > 1e-9)
        throw fit_error("decision parameters do not sum to one");
    }
  }
}

// Support models follow from structure alone: every stored element denotes a
// nonempty block of support. Recursion order matches lexicographic order.
void Psdd::walk_support() {
  support_.clear();
  struct Rec {
    const Psdd& p;
    std::vector<std::vector<Bits>> memo;
    const std::vector<Bits>& operator()(uint32_t id) {
      if (!memo[id].empty()) return memo[id];
      const Node& n = p.nodes_[id];
      std::vector<Bits> out;
      switch (n.kind) {
        case Node::Kind::Literal:
          out.push_back(n.sign ? (Bits(1) << n.var) : 0);
          break;
        case Node::Kind::Top:
          out.push_back(0);
          out.push_back(Bits(1) << n.var);
          break;
        case Node::Kind::Decision:
          for (const Element& e : n.elements) {
            const std::vector<Bits>& ls = (*this)(e.prime);
            std::vector<Bits> rs = (*this)(e.sub);  // copy: memo may grow
            for (Bits l : ls)
              for (Bits r : rs) out.push_back(l | r);
          }
          break;
      }
      memo[id] = std::move(out);
      return memo[id];
    }
  } rec{*this, std::vector<std::vector<Bits>>(nodes_.size())};
  support_ = rec(root_);
  int n = num_vars();
  std::sort(support_.begin(), support_.end(),
            [n](Bits a, Bits b) { return lex_less(a, b, n); });
}

std::string Psdd::to_text() const {
  std::ostringstream out;
  out << "psdd " << nodes_.size() << " " << root_ << "\n";
  for (size_t i = 0; i < nodes_.size(); i++) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case Node::Kind::Literal:
        out << i << " L " << (n.sign ? n.var + 1 : -(n.var + 1)) << "\n";
        break;
      case Node::Kind::Top:
        out << i << " T " << n.var + 1 << " " << format_double(n.theta_pos)
            << " " << format_double(n.theta_neg) << "\n";
        break;
      case Node::Kind::Decision:
        out << i << " D " << n.vpos << " " << n.elements.size();
        for (const Element& e : n.elements)
          out << " " << e.prime << " " << e.sub << " " << format_double(e.theta);
        out << "\n";
        break;
    }
  }
  return out.str();
}

void Psdd::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write model file '" + path + "'");
  out << to_text();
}

Psdd Psdd::load_text(const std::string& text, Vtree vt) {
  std::istringstream in(text);
  std::string head;
  size_t count = 0;
  uint32_t root = 0;
  if (!(in >> head >> count >> root) || head != "psdd" || count == 0 || root >= count)
    throw parse_error("bad psdd header");
  Psdd p;
  p.vtree_ = std::move(vt);
  p.nodes_.resize(count);
  std::vector<bool> seen(count, false);
  for (size_t i = 0; i < count; i++) {
    size_t id;
    std::string kind;
    if (!(in >> id >> kind) || id >= count || seen[id] || id != i)
      throw parse_error("psdd node lines must be 0..count-1 in order");
    seen[id] = true;
    Node& n = p.nodes_[id];
    if (kind == "L") {
      int lit;
      if (!(in >> lit) || lit == 0 || std::abs(lit) > p.num_vars())
        throw parse_error("malformed literal line in psdd file");
      n.kind = Node::Kind::Literal;
      n.var = std::abs(lit) - 1;
      n.sign = lit > 0;
      n.vpos = p.vtree_.leaf_of(n.var);
    } else if (kind == "T") {
      int var;
      if (!(in >> var >> n.theta_pos >> n.theta_neg) || var < 1 ||
          var > p.num_vars())
        throw parse_error("malformed terminal line in psdd file");
      if (n.theta_pos <= 0 || n.theta_pos >= 1 || n.theta_neg <= 0 ||
          n.theta_neg >= 1)
        throw parse_error("terminal bias outside (0,1)");
      n.kind = Node::Kind::Top;
      n.var = var - 1;
      n.vpos = p.vtree_.leaf_of(n.var);
    } else if (kind == "D") {
      int vpos;
      size_t k;
      if (!(in >> vpos >> k) || vpos < 0 || vpos >= p.vtree_.num_nodes() || k < 1)
        throw parse_error("malformed decision line in psdd file");
      n.kind = Node::Kind::Decision;
      n.vpos = vpos;
      for (size_t j = 0; j < k; j++) {
        Element e;
        if (!(in >> e.prime >> e.sub >> e.theta))
          throw parse_error("malformed parameter line in psdd file");
        if (e.prime >= id || e.sub >= id)
          throw parse_error("psdd children must precede parents");
        if (e.theta <= 0 || e.theta > 1)
          throw parse_error("probability outside (0,1] in psdd file");
        n.elements.push_back(e);
      }
    } else {
      throw parse_error("unknown psdd node kind '" + kind + "'");
    }
  }
  p.root_ = root;
  p.validate();
  p.walk_support();
  return p;
}

Psdd Psdd::load(const std::string& path, Vtree vt) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_text(buf.str(), std::move(vt));
}

}  // namespace pblame

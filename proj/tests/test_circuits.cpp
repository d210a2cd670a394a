#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <random>
#include <set>

#include "helpers.h"
#include "pblame/data.h"
#include "pblame/sdd.h"
#include "pblame/vtree.h"

using namespace pblame;

namespace {

std::vector<std::string> names(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; i++) v.push_back("v" + std::to_string(i));
  return v;
}

// model set of a formula by filtering all 2^n assignments
std::set<Bits> brute_models(const Formula& f, int n) {
  std::set<Bits> out;
  std::vector<bool> t = th::truth_set(f, n);
  for (Bits w = 0; w < (Bits(1) << n); w++)
    if (t[w]) out.insert(w);
  return out;
}

std::set<Bits> circuit_models(SddManager& m, NodeId x) {
  std::vector<Bits> v = m.enumerate_models(x);
  return std::set<Bits>(v.begin(), v.end());
}

}  // namespace

TEST_CASE("vtree shapes") {
  Vtree one = Vtree::build(1, VtreeStrategy::Balanced);
  CHECK(one.num_nodes() == 1);
  CHECK(one.is_leaf(one.root()));
  CHECK(one.depth() == 0);

  Vtree bal = Vtree::build(4, VtreeStrategy::Balanced);
  CHECK(bal.depth() == 2);
  CHECK(bal.num_nodes() == 7);
  for (int v = 0; v < 4; v++) {
    CHECK(bal.is_leaf(bal.leaf_of(v)));
    CHECK(bal.var_of(bal.leaf_of(v)) == v);
    CHECK(bal.leaf_of(v) == 2 * v);
  }
  CHECK(bal.lo(bal.root()) == 0);
  CHECK(bal.hi(bal.root()) == 4);

  Vtree rl = Vtree::build(12, VtreeStrategy::RightLinear);
  CHECK(rl.depth() == 11);
  CHECK(rl.left(rl.root()) == rl.leaf_of(0));  // leftmost leaf is variable 0
  int spine = 0;
  for (int p = 0; p < rl.num_nodes(); p++)
    if (!rl.is_leaf(p)) spine++;
  CHECK(spine == 11);
}

TEST_CASE("vtree lca and containment") {
  Vtree bal = Vtree::build(4, VtreeStrategy::Balanced);
  CHECK(bal.lca(bal.leaf_of(0), bal.leaf_of(1)) == 1);
  CHECK(bal.lca(bal.leaf_of(2), bal.leaf_of(3)) == 5);
  CHECK(bal.lca(bal.leaf_of(0), bal.leaf_of(3)) == bal.root());
  CHECK(bal.lca(1, 1) == 1);
  CHECK(bal.contains(bal.root(), 1));
  CHECK_FALSE(bal.contains(1, 5));
}

TEST_CASE("vtree serialization round trip") {
  std::vector<std::string> nm = names(5);
  for (VtreeStrategy st : {VtreeStrategy::Balanced, VtreeStrategy::RightLinear}) {
    Vtree vt = Vtree::build(5, st);
    std::string text = vt.to_text(nm);
    Vtree back = Vtree::parse(text, nm);
    CHECK(back.to_text(nm) == text);
    CHECK(back.num_vars() == 5);
    CHECK(back.depth() == vt.depth());
  }

  CHECK(Vtree::build(2, VtreeStrategy::Balanced).to_text({"A", "B"}) ==
        "(A B)\n");

  // leaves must appear in declaration order
  CHECK_THROWS_WITH_AS(
      Vtree::parse("(B A)\n", {"A", "B"}),
      "vtree leaves out of declaration order at leaf 1", Error);
  CHECK_THROWS_WITH_AS(Vtree::parse("(A B)\n", {"A", "B", "C"}),
                       "vtree has 2 leaves for 3 variables", Error);
  CHECK_THROWS_AS(Vtree::parse("((A B)", {"A", "B"}), Error);
  CHECK_THROWS_AS(Vtree::parse("(A Q)", {"A", "B"}), Error);
}

TEST_CASE("compile fixture theories to exact model counts") {
  auto start = std::chrono::steady_clock::now();
  struct Row {
    const char* name;
    int vars;
    uint64_t count;
  };
  for (Row r : {Row{"lung_cancer", 12, 52}, Row{"teamwork", 21, 4800},
                Row{"trolley", 23, 180}}) {
    Scenario s = builtin_scenario(r.name);
    CHECK(s.num_vars() == r.vars);
    th::Compiled c = th::compile_scenario(s);
    CHECK(c.m.model_count(c.root) == r.count);
    // every enumerated model satisfies every constraint
    std::vector<Bits> models = c.m.enumerate_models(c.root);
    CHECK(models.size() == r.count);
    for (Bits w : models)
      for (const Formula& f : s.constraints) CHECK(f.eval(w));
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  CHECK(secs < 15.0);
}

TEST_CASE("compile basics") {
  Scenario s = Scenario::parse(
      "scenario t\ncontext A B\ndecision D\noutcome O\naction D\n");
  SddManager m(Vtree::build(4, VtreeStrategy::Balanced));

  CHECK(m.model_count(m.compile(std::vector<Formula>{})) == 16);  // tautology
  CHECK(m.model_count(m.literal(0, true)) == 8);                  // 2^(n-1)
  CHECK(m.model_count(kFalseId) == 0);
  CHECK(m.model_count(kTrueId) == 16);

  NodeId f = m.compile(parse_formula("=(&(A,B),D)", s));
  CHECK(m.apply(f, kTrueId, Op::And) == f);
  CHECK(m.apply(f, kFalseId, Op::Or) == f);
  CHECK(m.apply(f, m.negate(f), Op::And) == kFalseId);
  CHECK(m.apply(f, m.negate(f), Op::Or) == kTrueId);
  CHECK(m.negate(m.negate(f)) == f);
}

TEST_CASE("apply matches the truth-table oracle on random 8-var formulas") {
  std::mt19937_64 rng(21);
  std::ostringstream t;
  t << "scenario r\ncontext";
  for (int i = 0; i < 8; i++) t << " v" << i;
  t << "\ndecision d\naction d\n";
  // d is a 9th variable nothing mentions; keep formulas over the first 8
  Scenario s = Scenario::parse(t.str());
  SddManager m(Vtree::build(9, VtreeStrategy::Balanced));
  for (int trial = 0; trial < 40; trial++) {
    Formula f = th::random_formula(rng, 8, 3);
    Formula g = th::random_formula(rng, 8, 3);
    NodeId cf = m.compile(f);
    NodeId cg = m.compile(g);
    std::set<Bits> mf = brute_models(f, 9);
    std::set<Bits> mg = brute_models(g, 9);

    std::set<Bits> want;
    std::set_intersection(mf.begin(), mf.end(), mg.begin(), mg.end(),
                          std::inserter(want, want.begin()));
    CHECK(circuit_models(m, m.apply(cf, cg, Op::And)) == want);

    want.clear();
    std::set_union(mf.begin(), mf.end(), mg.begin(), mg.end(),
                   std::inserter(want, want.begin()));
    CHECK(circuit_models(m, m.apply(cf, cg, Op::Or)) == want);

    std::set<Bits> all;
    for (Bits w = 0; w < (Bits(1) << 9); w++) all.insert(w);
    want.clear();
    std::set_difference(all.begin(), all.end(), mf.begin(), mf.end(),
                        std::inserter(want, want.begin()));
    CHECK(circuit_models(m, m.negate(cf)) == want);

    // commutativity at the node-identity level
    CHECK(m.apply(cf, cg, Op::And) == m.apply(cg, cf, Op::And));
    CHECK(m.apply(cf, cg, Op::Or) == m.apply(cg, cf, Op::Or));
  }
}

TEST_CASE("canonicity: equivalent formulas compile to the same node") {
  Scenario s = Scenario::parse(
      "scenario t\ncontext A B C\ndecision D\noutcome O\naction D\n");
  SddManager m(Vtree::build(5, VtreeStrategy::Balanced));

  // De Morgan
  CHECK(m.compile(parse_formula("!(&(A,B))", s)) ==
        m.compile(parse_formula("|(!(A),!(B))", s)));
  // commuted arguments
  CHECK(m.compile(parse_formula("&(A,B,C)", s)) ==
        m.compile(parse_formula("&(C,B,A)", s)));
  // double negation
  CHECK(m.compile(parse_formula("!(!(>(A,C)))", s)) ==
        m.compile(parse_formula(">(A,C)", s)));
  // implication as disjunction
  CHECK(m.compile(parse_formula(">(A,B)", s)) ==
        m.compile(parse_formula("|(!(A),B)", s)));
  // iff expansion
  CHECK(m.compile(parse_formula("=(A,B)", s)) ==
        m.compile(parse_formula("|(&(A,B),&(!(A),!(B)))", s)));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; trial++) {
    Formula f = th::random_formula(rng, 5, 3);
    Formula neg;
    neg.kind = Formula::Kind::Not;
    neg.args.push_back(f);
    CHECK(m.compile(neg) == m.negate(m.compile(f)));
  }
}

TEST_CASE("model_count equals brute force on random instances") {
  std::mt19937_64 rng(31);
  SddManager m(Vtree::build(8, VtreeStrategy::Balanced));
  for (int trial = 0; trial < 30; trial++) {
    Formula f = th::random_formula(rng, 8, 3);
    CHECK(m.model_count(m.compile(f)) == brute_models(f, 8).size());
  }
}

TEST_CASE("enumerate_models is lexicographic over declaration order") {
  Scenario s = builtin_scenario("lung_cancer");
  th::Compiled c = th::compile_scenario(s);
  std::vector<Bits> models = c.m.enumerate_models(c.root);
  int n = s.num_vars();
  auto lex_less = [n](Bits a, Bits b) {
    for (int i = 0; i < n; i++)
      if (bit(a, i) != bit(b, i)) return !bit(a, i);
    return false;
  };
  for (size_t i = 1; i < models.size(); i++)
    CHECK(lex_less(models[i - 1], models[i]));
}

TEST_CASE("enumerate_models with evidence filters the model list") {
  Scenario s = builtin_scenario("lung_cancer");
  th::Compiled c = th::compile_scenario(s);
  std::vector<Bits> all = c.m.enumerate_models(c.root);
  int ct = s.var_index("CT");
  Bits mask = Bits(1) << ct;

  std::vector<Bits> got = c.m.enumerate_models(c.root, mask, mask);
  std::vector<Bits> want;
  for (Bits w : all)
    if (bit(w, ct)) want.push_back(w);
  CHECK(got == want);

  // full-assignment evidence on a model yields exactly that model
  Bits w0 = all[7];
  Bits full = (Bits(1) << s.num_vars()) - 1;
  std::vector<Bits> one = c.m.enumerate_models(c.root, full, w0);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == w0);

  // inconsistent evidence yields the empty stream
  int sdp = s.var_index("S_DP"), mvar = s.var_index("M");
  Bits m2 = (Bits(1) << sdp) | (Bits(1) << mvar);
  // !S_DP requires M; evidence !S_DP, !M contradicts the theory
  CHECK(c.m.enumerate_models(c.root, m2, 0).empty());

  for (Bits w : got) CHECK(c.m.is_model(c.root, w));
  CHECK_FALSE(c.m.is_model(c.root, 0));  // all-false violates one-hot
}

TEST_CASE("enumeration cap") {
  SddManager m(Vtree::build(10, VtreeStrategy::Balanced));
  CHECK_THROWS_WITH_AS(m.enumerate_models(kTrueId, 100),
                       "model enumeration exceeds cap", Error);
  CHECK(m.enumerate_models(kTrueId, 1024).size() == 1024);
}

TEST_CASE("partition property holds at every decision node") {
  std::mt19937_64 rng(5);
  SddManager m(Vtree::build(7, VtreeStrategy::Balanced));
  std::vector<NodeId> roots;
  for (int trial = 0; trial < 10; trial++)
    roots.push_back(m.compile(th::random_formula(rng, 7, 3)));
  Scenario s = builtin_scenario("trolley");
  th::Compiled c = th::compile_scenario(s);
  for (NodeId r : roots) CHECK(m.check_partition(r));
  CHECK(c.m.check_partition(c.root));
}

TEST_CASE("circuit serialization") {
  Scenario s = builtin_scenario("lung_cancer");
  th::Compiled c = th::compile_scenario(s);
  std::string text = c.m.to_text(c.root);

  SddManager m2(Vtree::build(s.num_vars(), VtreeStrategy::Balanced));
  NodeId back = m2.load_text(text);
  CHECK(m2.to_text(back) == text);
  CHECK(m2.model_count(back) == 52);
  CHECK(circuit_models(m2, back) == circuit_models(c.m, c.root));

  // determinism: a fresh manager compiling the same theory prints the same
  SddManager m3(Vtree::build(s.num_vars(), VtreeStrategy::Balanced));
  CHECK(m3.to_text(m3.compile(s.constraints)) == text);

  CHECK_THROWS_WITH_AS(m2.load_text("nonsense\n"), "bad circuit header", Error);
  CHECK_THROWS_WITH_AS(m2.load_text("sdd 3 2\n0 F\n1 T\n2 D 1 1 5 0\n"),
                       "node id 2 references an undefined child (ids must be "
                       "topological)",
                       Error);
  CHECK_THROWS_AS(m2.load_text("sdd 2 3\n3 L 1\n3 L 2\n"), Error);
  CHECK_THROWS_AS(m2.load_text("sdd 1 3\n3 Q 1\n"), Error);
}

TEST_CASE("right-linear vtree compiles the same model sets") {
  Scenario s = builtin_scenario("lung_cancer");
  th::Compiled bal = th::compile_scenario(s, VtreeStrategy::Balanced);
  th::Compiled rl = th::compile_scenario(s, VtreeStrategy::RightLinear);
  CHECK(rl.m.model_count(rl.root) == 52);
  CHECK(circuit_models(rl.m, rl.root) == circuit_models(bal.m, bal.root));
}

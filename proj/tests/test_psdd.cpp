#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "helpers.h"
#include "pblame/data.h"
#include "pblame/psdd.h"

using namespace pblame;

namespace {

bool lex_less(Bits a, Bits b, int n) {
  for (int i = 0; i < n; i++)
    if (bit(a, i) != bit(b, i)) return !bit(a, i);
  return false;
}

// closed-form smoothed frequency over the enumerated support
double smoothed_freq(const std::map<Bits, double>& counts, double n, Bits m,
                     double s, double mc) {
  auto it = counts.find(m);
  double c = it == counts.end() ? 0.0 : it->second;
  return (c + s) / (n + s * mc);
}

Scenario two_free_vars() {
  return Scenario::parse(
      "scenario ab\ncontext A\ndecision B\noutcome C\naction B\n");
}

}  // namespace

TEST_CASE("fit matches the smoothed-frequency oracle on trolley data") {
  Scenario sc = builtin_scenario("trolley");
  th::Compiled c = th::compile_scenario(sc);
  Dataset d = generate_trolley_standin(sc, 400, 23);
  std::map<Bits, double> counts;
  for (Bits w : d.rows) counts[w] += 1.0;

  for (double s : {1.0, 0.5, 2.5}) {
    Psdd p = Psdd::fit(c.m, c.root, d.rows, s);
    REQUIRE(p.support().size() == 180);
    for (Bits m : p.support()) {
      double want = smoothed_freq(counts, double(d.size()), m, s, 180);
      CHECK(std::abs(p.evaluate(m) - want) < 1e-9);
    }
  }

  // smoothing 0 reproduces the empirical distribution exactly
  Psdd p0 = Psdd::fit(c.m, c.root, d.rows, 0.0);
  for (Bits m : p0.support()) {
    double want = smoothed_freq(counts, double(d.size()), m, 0.0, 180);
    CHECK(std::abs(p0.evaluate(m) - want) <= 1e-12);
  }
}

TEST_CASE("degenerate fits") {
  Scenario sc = two_free_vars();
  th::Compiled c = th::compile_scenario(sc);

  // four identical rows, smoothing 0: that model takes all the mass
  std::vector<Bits> rows(4, 0b101);
  Psdd p = Psdd::fit(c.m, c.root, rows, 0.0);
  CHECK(p.evaluate(0b101) == 1.0);
  for (Bits w = 0; w < 8; w++)
    if (w != 0b101) CHECK(p.evaluate(w) == 0.0);

  // counts {AB:2, A!B:1, !AB:1} over two unconstrained variables
  Scenario s2 = Scenario::parse(
      "scenario ab\ncontext A\ndecision B\naction B\n");
  th::Compiled c2 = th::compile_scenario(s2);
  std::vector<Bits> rows2 = {0b11, 0b11, 0b01, 0b10};
  Psdd p2 = Psdd::fit(c2.m, c2.root, rows2, 0.0);
  CHECK(p2.evaluate(0b11) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p2.evaluate(0b01) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p2.evaluate(0b10) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p2.evaluate(0b00) == 0.0);

  // empty dataset: the smoothed fit is uniform over the support
  Psdd pu = Psdd::fit(c2.m, c2.root, {}, 1.0);
  for (Bits w = 0; w < 4; w++)
    CHECK(pu.evaluate(w) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("parameter structure after any fit") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 12; trial++) {
    th::Instance in = th::random_instance(rng);
    const Psdd& p = in.p;
    for (size_t i = 0; i < p.num_nodes(); i++) {
      const Psdd::Node& n = p.node(i);
      if (n.kind == Psdd::Node::Kind::Top) {
        CHECK(n.theta_pos > 0);
        CHECK(n.theta_neg > 0);
        CHECK(std::abs(n.theta_pos + n.theta_neg - 1.0) <= 1e-12);
      } else if (n.kind == Psdd::Node::Kind::Decision) {
        KahanSum sum;
        for (const Psdd::Element& e : n.elements) {
          CHECK(e.theta > 0);  // dead branches are dropped, never stored
          sum.add(e.theta);
        }
        CHECK(std::abs(sum.value() - 1.0) <= 1e-12);
      }
    }
    // total support probability
    KahanSum total;
    for (Bits m : p.support()) total.add(p.evaluate(m));
    CHECK(std::abs(total.value() - 1.0) <= 1e-9);
  }
}

TEST_CASE("smoothing 0 drops dead branches instead of storing zeros") {
  Scenario sc = two_free_vars();
  th::Compiled c = th::compile_scenario(sc);
  std::vector<Bits> rows = {0b001, 0b001, 0b011};
  Psdd p = Psdd::fit(c.m, c.root, rows, 0.0);
  for (size_t i = 0; i < p.num_nodes(); i++) {
    const Psdd::Node& n = p.node(i);
    if (n.kind == Psdd::Node::Kind::Top) {
      CHECK(n.theta_pos > 0);
      CHECK(n.theta_neg > 0);
    }
    if (n.kind == Psdd::Node::Kind::Decision)
      for (const Psdd::Element& e : n.elements) CHECK(e.theta > 0);
  }
  CHECK(p.evaluate(0b001) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(p.evaluate(0b011) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(p.evaluate(0b111) == 0.0);
}

TEST_CASE("marginal equals support summation") {
  Scenario sc = builtin_scenario("trolley");
  th::Compiled c = th::compile_scenario(sc);
  Dataset d = generate_trolley_standin(sc, 600, 5);
  Psdd p = Psdd::fit(c.m, c.root, d.rows, 1.0);

  CHECK(p.marginal(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(9);
  int n = sc.num_vars();
  for (int trial = 0; trial < 50; trial++) {
    Bits mask = 0, val = 0;
    for (int v = 0; v < n; v++)
      if (th::pick(rng, 3) == 0) {
        mask |= Bits(1) << v;
        if (th::pick(rng, 2)) val |= Bits(1) << v;
      }
    KahanSum sum;
    for (Bits m : p.support())
      if ((m & mask) == (val & mask)) sum.add(p.evaluate(m));
    CHECK(std::abs(p.marginal(mask, val) - sum.value()) < 1e-9);
    CHECK(p.last_visits() <= p.num_nodes());
  }

  // evidence inconsistent with the constraints
  int i5 = sc.var_index("I"), f5 = sc.var_index("F");
  Bits both = (Bits(1) << i5) | (Bits(1) << f5);
  CHECK(p.marginal(both, both) == 0.0);
}

TEST_CASE("conditional semantics") {
  Scenario sc = two_free_vars();
  th::Compiled c = th::compile_scenario(sc);
  std::vector<Bits> rows = {0b011, 0b001, 0b001, 0b110};
  Psdd p = Psdd::fit(c.m, c.root, rows, 0.5);

  Bits q = 0b010, e = 0b001;
  double joint = p.marginal(q | e, q | e);
  double pe = p.marginal(e, e);
  CHECK(p.conditional(q, q, e, e) == doctest::Approx(joint / pe).epsilon(1e-12));
  CHECK(p.conditional(e, e, e, e) == 1.0);
  CHECK(p.conditional(q, 0, q, q) == 0.0);  // query contradicts evidence

  Psdd p0 = Psdd::fit(c.m, c.root, {0b001}, 0.0);
  CHECK_THROWS_WITH_AS(p0.conditional(q, q, 0b100, 0b100),
                       "conditioning event has probability zero", Error);
}

TEST_CASE("mpe equals brute-force argmax with lexicographic ties") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; trial++) {
    th::Instance in = th::random_instance(rng);
    const Psdd& p = in.p;
    int n = p.num_vars();

    Bits mask = 0, val = 0;
    for (int v = 0; v < n && trial % 3; v++)
      if (th::pick(rng, 4) == 0) {
        mask |= Bits(1) << v;
        if (th::pick(rng, 2)) val |= Bits(1) << v;
      }

    Bits best = 0;
    double best_p = -1;
    for (Bits m : p.support()) {
      if ((m & mask) != (val & mask)) continue;
      double pm = p.evaluate(m);
      if (pm > best_p || (pm == best_p && lex_less(m, best, n))) {
        best_p = pm;
        best = m;
      }
    }
    if (best_p <= 0) continue;  // evidence has zero probability

    auto [w, pw] = p.mpe(mask, val);
    CHECK(w == best);
    CHECK(pw == doctest::Approx(best_p).epsilon(1e-9));
    CHECK(p.last_visits() <= p.num_nodes());

    // mpe dominates every consistent model
    for (int k = 0; k < 20; k++) {
      Bits m = p.support()[th::pick(rng, int(p.support().size()))];
      if ((m & mask) == (val & mask)) CHECK(pw >= p.evaluate(m));
    }
  }
}

TEST_CASE("mpe edge cases") {
  Scenario sc = two_free_vars();
  th::Compiled c = th::compile_scenario(sc);
  Psdd p = Psdd::fit(c.m, c.root, {0b001, 0b011, 0b001}, 0.0);

  // full-assignment evidence on a model returns it with its probability
  Bits full = 0b111;
  auto [w, pw] = p.mpe(full, 0b011);
  CHECK(w == 0b011);
  CHECK(pw == p.evaluate(0b011));

  CHECK_THROWS_WITH_AS(p.mpe(full, 0b111), "evidence has probability zero",
                       Error);

  // single-model circuit: mpe is that model
  Scenario pinned = Scenario::parse(
      "scenario pin\ncontext A\ndecision B\noutcome C\naction B\n"
      "constraint A\nconstraint B\nconstraint !(C)\n");
  th::Compiled cp = th::compile_scenario(pinned);
  Psdd p1 = Psdd::fit(cp.m, cp.root, {0b011}, 1.0);
  auto [w1, pw1] = p1.mpe(0, 0);
  CHECK(w1 == 0b011);
  CHECK(pw1 == 1.0);
}

TEST_CASE("psdd serialization round trip") {
  Scenario sc = builtin_scenario("lung_cancer");
  th::Compiled c = th::compile_scenario(sc);
  Dataset d = generate_lung_cancer(sc, 300, 2, 0.9);
  Psdd p = Psdd::fit(c.m, c.root, d.rows, 1.0);

  std::string text = p.to_text();
  Psdd back = Psdd::load_text(text, p.vtree());
  CHECK(back.to_text() == text);
  CHECK(back.support() == p.support());
  for (Bits m : p.support()) CHECK(back.evaluate(m) == p.evaluate(m));

  std::string path = "/tmp/pblame_test_psdd.pmdl";
  p.save(path);
  Psdd loaded = Psdd::load(path, p.vtree());
  CHECK(loaded.to_text() == text);
  std::remove(path.c_str());

  // a second fit of the same data prints the same bytes
  Psdd p2 = Psdd::fit(c.m, c.root, d.rows, 1.0);
  CHECK(p2.to_text() == text);
}

TEST_CASE("psdd load rejections") {
  Vtree vt = Vtree::build(2, VtreeStrategy::Balanced);
  CHECK_THROWS_WITH_AS(Psdd::load_text("bogus\n", vt), "bad psdd header",
                       Error);
  CHECK_THROWS_WITH_AS(
      Psdd::load_text("psdd 1 0\n0 T 1 0 1\n", vt),
      "terminal bias outside (0,1)", Error);
  CHECK_THROWS_WITH_AS(
      Psdd::load_text("psdd 3 2\n0 L 1\n1 L 2\n2 D 1 1 0 1 0\n", vt),
      "probability outside (0,1] in psdd file", Error);
  CHECK_THROWS_WITH_AS(
      Psdd::load_text("psdd 3 2\n0 L 1\n1 L 2\n2 D 1 1 5 1 1\n", vt),
      "psdd children must precede parents", Error);
  CHECK_THROWS_WITH_AS(
      Psdd::load_text("psdd 1 0\n0 Q 1\n", vt),
      "unknown psdd node kind 'Q'", Error);
  CHECK_THROWS_WITH_AS(
      Psdd::load_text("psdd 2 1\n1 L 1\n0 L 2\n", vt),
      "psdd node lines must be 0..count-1 in order", Error);
  // decision parameters must sum to one
  CHECK_THROWS_WITH_AS(
      Psdd::load_text("psdd 3 2\n0 L 1\n1 L 2\n2 D 1 1 0 1 0.5\n", vt),
      "decision parameters do not sum to one", Error);
}

TEST_CASE("fit rejections") {
  Scenario sc = two_free_vars();
  th::Compiled c = th::compile_scenario(sc);
  CHECK_THROWS_WITH_AS(Psdd::fit(c.m, c.root, {}, -1.0),
                       "smoothing must be nonnegative", Error);
  CHECK_THROWS_WITH_AS(
      Psdd::fit(c.m, kFalseId, {}, 1.0),
      "cannot fit parameters: the circuit is unsatisfiable", Error);

  Scenario pinned = Scenario::parse(
      "scenario pin\ncontext A\ndecision B\noutcome C\naction B\n"
      "constraint A\n");
  th::Compiled cp = th::compile_scenario(pinned);
  CHECK_THROWS_WITH_AS(
      Psdd::fit(cp.m, cp.root, {0b001, 0b011, 0b010}, 1.0),
      "data row 3 violates the scenario constraints", Error);

  // 22 unconstrained variables: support exceeds the enumeration cap
  std::string big = "scenario big\ncontext";
  for (int i = 0; i < 21; i++) big += " v" + std::to_string(i);
  big += "\ndecision d\naction d\n";
  Scenario sb = Scenario::parse(big);
  th::Compiled cb = th::compile_scenario(sb);
  CHECK_THROWS_WITH_AS(
      Psdd::fit(cb.m, cb.root, {}, 1.0),
      "constraint support too large to fit (cap 2^21 models)", Error);
}

TEST_CASE("support order is lexicographic") {
  std::mt19937_64 rng(3);
  th::Instance in = th::random_instance(rng);
  const std::vector<Bits>& sup = in.p.support();
  for (size_t i = 1; i < sup.size(); i++)
    CHECK(lex_less(sup[i - 1], sup[i], in.p.num_vars()));
}

#include "pblame/blame.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace pblame {

namespace {

Bits mask_of(const std::vector<int>& vars) {
  Bits m = 0;
  for (int v : vars) m |= Bits(1) << v;
  return m;
}

std::string bits_string(Bits b, const std::vector<int>& vars) {
  std::string s;
  for (int v : vars) s += bit(b, v) ? '1' : '0';
  return s;
}

// declaration-order lexicographic comparison restricted to `vars`
bool lex_less_on(Bits a, Bits b, const std::vector<int>& vars) {
  for (int v : vars) {
    bool av = bit(a, v), bv = bit(b, v);
    if (av != bv) return !av;
  }
  return false;
}

const ActionGroup& find_group(const Scenario& s, ActionRef a) {
  for (const ActionGroup& g : s.action_groups)
    for (int v : g.indicators)
      if (v == a.var) return g;
  std::string name = a.var >= 0 && a.var < s.num_vars() ? s.vars[a.var] : "?";
  throw query_error("'" + name + "' is not an action variable");
}

void validate_action(const Scenario& s, ActionRef a) {
  const ActionGroup& g = find_group(s, a);
  if (!g.boolean() && !a.positive)
    throw query_error("'" + action_label(s, a) +
                      "' is not an action: only the positive indicators of a "
                      "one-hot group name actions");
}

bool action_matches(Bits m, ActionRef a) { return bit(m, a.var) == a.positive; }

void add_note(std::vector<std::string>* notes, std::string msg) {
  if (!notes) return;
  if (std::find(notes->begin(), notes->end(), msg) == notes->end())
    notes->push_back(std::move(msg));
}

}  // namespace

ContextDistribution ContextDistribution::table(
    std::vector<std::pair<Bits, double>> entries) {
  ContextDistribution c;
  c.from_model_ = false;
  KahanSum sum;
  for (const auto& [b, w] : entries) {
    if (w < 0 || !std::isfinite(w))
      throw query_error("context weights must be nonnegative");
    sum.add(w);
  }
  if (std::abs(sum.value() - 1.0) > 1e-9)
    throw query_error("context weights sum to " + format_double(sum.value()) +
                      ", expected 1");
  c.entries_ = std::move(entries);
  return c;
}

ContextDistribution ContextDistribution::parse(const std::string& text,
                                               const Scenario& s) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      (line != "contexts" && line != "contexts\r"))
    throw parse_error("context file must start with a 'contexts' line");
  std::vector<int> ctx_vars = s.cell_vars(Cell::Context);
  std::vector<std::pair<Bits, double>> entries;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string bs, ws;
    ls >> bs >> ws;
    if (bs.size() != ctx_vars.size())
      throw parse_error("line " + std::to_string(lineno) + ": bitstring '" +
                        bs + "' must have " + std::to_string(ctx_vars.size()) +
                        " bits");
    Bits b = 0;
    for (size_t i = 0; i < bs.size(); i++) {
      if (bs[i] == '1')
        b = set_bit(b, ctx_vars[i], true);
      else if (bs[i] != '0')
        throw parse_error("line " + std::to_string(lineno) +
                          ": bitstring must be 0/1 only");
    }
    double w;
    try {
      size_t used = 0;
      w = std::stod(ws, &used);
      if (used != ws.size() || ws.empty()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw parse_error("line " + std::to_string(lineno) + ": bad weight '" +
                        ws + "'");
    }
    entries.emplace_back(b, w);
  }
  return table(std::move(entries));
}

ContextDistribution ContextDistribution::load(const std::string& path,
                                              const Scenario& s) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open context file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), s);
}

ActionRef parse_action(const std::string& token, const Scenario& s) {
  ActionRef a;
  std::string name = token;
  if (!name.empty() && name[0] == '!') {
    a.positive = false;
    name = name.substr(1);
  }
  a.var = s.var_index(name);
  if (a.var < 0) throw query_error("unknown action '" + token + "'");
  validate_action(s, a);
  return a;
}

std::string action_label(const Scenario& s, ActionRef a) {
  return (a.positive ? "" : "!") + s.vars[a.var];
}

std::vector<ActionRef> group_actions(const Scenario& s, ActionRef a) {
  const ActionGroup& g = find_group(s, a);
  if (g.boolean()) return {{a.var, true}, {a.var, false}};
  std::vector<int> vars = g.indicators;
  std::sort(vars.begin(), vars.end());
  std::vector<ActionRef> out;
  for (int v : vars) out.push_back({v, true});
  return out;
}

BlameQuery parse_query(const std::string& text, const Scenario& s) {
  BlameQuery q;
  bool have_action = false, have_event = false;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t sp = line.find(' ');
    std::string key = line.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    while (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
    if (key == "action") {
      if (have_action) throw parse_error("duplicate 'action' field");
      q.action = parse_action(rest, s);
      have_action = true;
    } else if (key == "alternative") {
      q.alternatives.push_back(parse_action(rest, s));
    } else if (key == "event") {
      if (have_event) throw parse_error("duplicate 'event' field");
      q.event = parse_formula(rest, s);
      q.event_text = rest;
      have_event = true;
    } else if (key == "N") {
      try {
        size_t used = 0;
        q.N = std::stod(rest, &used);
        if (used != rest.size() || rest.empty()) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw parse_error("bad N value '" + rest + "'");
      }
    } else {
      throw parse_error("line " + std::to_string(lineno) +
                        ": unknown query field '" + key + "'");
    }
  }
  if (!have_action) throw parse_error("query is missing the 'action' field");
  if (!have_event) throw parse_error("query is missing the 'event' field");
  for (ActionRef alt : q.alternatives)
    if (alt == q.action)
      throw parse_error("alternative equals the queried action");
  return q;
}

BlameQuery load_query(const std::string& path, const Scenario& s) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open query file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_query(buf.str(), s);
}

namespace {

// Shared per-call state for the back-door sums: support probabilities and
// the support grouped by context assignment.
struct Engine {
  const Psdd& p;
  const Scenario& s;
  const std::vector<Bits>& support;
  std::vector<double> pm;
  std::vector<int> ctx_vars;
  Bits cmask;
  std::vector<Bits> ctx_keys;               // lex order over context vars
  std::vector<std::vector<int>> ctx_models;
  std::vector<std::pair<Bits, double>> prior;  // effective Pr'(X)
  size_t max_sweep = 0;

  Engine(const Psdd& p_, const Scenario& s_, const ContextDistribution& ctx)
      : p(p_), s(s_), support(p_.support()) {
    pm.resize(support.size());
    for (size_t i = 0; i < support.size(); i++) pm[i] = p.evaluate(support[i]);
    ctx_vars = s.cell_vars(Cell::Context);
    cmask = mask_of(ctx_vars);
    std::map<Bits, int> index;
    for (size_t i = 0; i < support.size(); i++) {
      Bits key = support[i] & cmask;
      auto [it, fresh] = index.emplace(key, int(ctx_keys.size()));
      if (fresh) {
        ctx_keys.push_back(key);
        ctx_models.emplace_back();
      }
      ctx_models[it->second].push_back(int(i));
    }
    // map order is by raw Bits; reorder into declaration-lex order
    std::vector<int> order(ctx_keys.size());
    for (size_t i = 0; i < order.size(); i++) order[i] = int(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return lex_less_on(ctx_keys[a], ctx_keys[b], ctx_vars);
    });
    std::vector<Bits> keys;
    std::vector<std::vector<int>> models;
    for (int i : order) {
      keys.push_back(ctx_keys[i]);
      models.push_back(std::move(ctx_models[i]));
    }
    ctx_keys = std::move(keys);
    ctx_models = std::move(models);

    if (ctx.from_model()) {
      for (size_t c = 0; c < ctx_keys.size(); c++) {
        KahanSum px;
        for (int i : ctx_models[c]) px.add(pm[i]);
        prior.emplace_back(ctx_keys[c], px.value());
      }
    } else {
      for (const auto& [key, w] : ctx.entries()) {
        if (!std::binary_search(
                ctx_keys.begin(), ctx_keys.end(), key, [&](Bits a, Bits b) {
                  return lex_less_on(a, b, ctx_vars);
                }))
          throw query_error("context " + bits_string(key, ctx_vars) +
                            " is inconsistent with the constraints");
        prior.emplace_back(key, w);
      }
    }
  }

  int ctx_index(Bits key) const {
    auto it = std::lower_bound(
        ctx_keys.begin(), ctx_keys.end(), key,
        [&](Bits a, Bits b) { return lex_less_on(a, b, ctx_vars); });
    return int(it - ctx_keys.begin());
  }

  // Pr(event | do(a)) by back-door adjustment over the support.
  double prob_do(ActionRef a, const Formula& event,
                 std::vector<std::string>* skipped) {
    validate_action(s, a);
    KahanSum acc;
    size_t visits = 0;
    for (const auto& [key, w] : prior) {
      if (w <= 0) continue;
      int c = ctx_index(key);
      KahanSum num, den;
      for (int i : ctx_models[c]) {
        visits++;
        if (!action_matches(support[i], a)) continue;
        den.add(pm[i]);
        if (event.eval(support[i])) num.add(pm[i]);
      }
      if (den.value() <= 0) {
        add_note(skipped, "context " + bits_string(key, ctx_vars) +
                              " skipped for do(" + action_label(s, a) +
                              "): zero probability");
        continue;
      }
      acc.add(w * (num.value() / den.value()));
    }
    max_sweep = std::max(max_sweep, visits);
    return acc.value();
  }

  bool has_support(ActionRef a) const {
    for (const auto& [key, w] : prior) {
      if (w <= 0) continue;
      int c = ctx_index(key);
      for (int i : ctx_models[c])
        if (action_matches(support[i], a) && pm[i] > 0) return true;
    }
    return false;
  }

  double cost(const UtilityFunction& u, ActionRef a,
              std::vector<std::string>* skipped) {
    validate_action(s, a);
    KahanSum acc;
    bool any = false;
    size_t visits = 0;
    for (const auto& [key, w] : prior) {
      if (w <= 0) continue;
      int c = ctx_index(key);
      KahanSum num, den;
      for (int i : ctx_models[c]) {
        visits++;
        if (!action_matches(support[i], a)) continue;
        den.add(pm[i]);
        num.add(u.eval_world(support[i]) * pm[i]);
      }
      if (den.value() <= 0) {
        add_note(skipped, "context " + bits_string(key, ctx_vars) +
                              " skipped for do(" + action_label(s, a) +
                              "): zero probability");
        continue;
      }
      any = true;
      acc.add(w * (num.value() / den.value()));
    }
    max_sweep = std::max(max_sweep, visits);
    if (!any)
      throw query_error("action '" + action_label(s, a) +
                        "' has zero probability under every context");
    return -acc.value();
  }
};

void check_event_excludes_group(const Scenario& s, const Formula& event,
                                ActionRef a) {
  const ActionGroup& g = find_group(s, a);
  std::vector<bool> used(s.vars.size(), false);
  event.collect_vars(used);
  for (int v : g.indicators)
    if (used[v])
      throw query_error("event formula mentions action-group variable '" +
                        s.vars[v] + "'");
}

}  // namespace

double prob_do(const Psdd& p, const Scenario& s, ActionRef a,
               const Formula& event, const ContextDistribution& ctx,
               std::vector<std::string>* skipped, size_t* terms) {
  check_event_excludes_group(s, event, a);
  Engine e(p, s, ctx);
  double v = e.prob_do(a, event, skipped);
  if (terms) *terms = e.max_sweep;
  return v;
}

double delta(const Psdd& p, const Scenario& s, ActionRef a, ActionRef alt,
             const Formula& event, const ContextDistribution& ctx) {
  const ActionGroup& g = find_group(s, a);
  const ActionGroup& g2 = find_group(s, alt);
  if (&g != &g2)
    throw query_error("actions '" + action_label(s, a) + "' and '" +
                      action_label(s, alt) + "' are not in the same group");
  check_event_excludes_group(s, event, a);
  Engine e(p, s, ctx);
  double pa = e.prob_do(a, event, nullptr);
  double pb = e.prob_do(alt, event, nullptr);
  return std::max(pa - pb, 0.0);
}

double cost(const Psdd& p, const Scenario& s, const UtilityFunction& u,
            ActionRef a, const ContextDistribution& ctx,
            std::vector<std::string>* skipped) {
  Engine e(p, s, ctx);
  return e.cost(u, a, skipped);
}

double db_formula(double delta, double cost_a, double cost_alt, double N) {
  if (delta <= 0) return 0;
  double diff = std::max(cost_alt - cost_a, 0.0);
  return delta * (N - diff) / N;
}

BlameReport blameworthiness(const Psdd& p, const Scenario& s,
                            const UtilityFunction& u, const BlameQuery& q) {
  validate_action(s, q.action);
  check_event_excludes_group(s, q.event, q.action);
  const ActionGroup& g = find_group(s, q.action);
  for (ActionRef alt : q.alternatives) {
    if (alt == q.action)
      throw query_error("alternative equals the queried action");
    if (&find_group(s, alt) != &g)
      throw query_error("alternative '" + action_label(s, alt) +
                        "' is not in the action's group");
  }

  BlameReport r;
  r.action_label = action_label(s, q.action);
  r.event_text =
      q.event_text.empty() ? print_formula(q.event, s) : q.event_text;
  r.N = q.N;

  Engine e(p, s, q.contexts);

  // every group action's cost feeds the admissibility floor for N
  std::vector<ActionRef> all = group_actions(s, q.action);
  std::map<int, double> costs;  // index into `all`
  for (size_t i = 0; i < all.size(); i++) {
    if (!e.has_support(all[i])) {
      bool explicit_alt = false;
      for (ActionRef alt : q.alternatives)
        if (alt == all[i]) explicit_alt = true;
      if (all[i] == q.action || explicit_alt)
        throw query_error("action '" + action_label(s, all[i]) +
                          "' has zero probability under every context");
      r.skipped.push_back("alternative '" + action_label(s, all[i]) +
                          "' has zero probability under every context; excluded");
      continue;
    }
    costs[int(i)] = e.cost(u, all[i], &r.skipped);
  }
  double min_cost = 0;
  bool first = true;
  for (const auto& [i, c] : costs) {
    if (first || c < min_cost) min_cost = c;
    first = false;
  }
  r.n_floor = -min_cost;
  if (!(q.N > r.n_floor))
    throw nbound_error("N = " + format_double(q.N) +
                       " is not admissible; N must exceed " +
                       format_double(r.n_floor));

  auto index_of = [&](ActionRef a) {
    for (size_t i = 0; i < all.size(); i++)
      if (all[i] == a) return int(i);
    return -1;
  };
  int ai = index_of(q.action);
  r.cost_action = costs.at(ai);
  r.prob_do_action = e.prob_do(q.action, q.event, &r.skipped);

  std::vector<ActionRef> alts = q.alternatives;
  if (alts.empty()) {
    for (ActionRef a : all)
      if (!(a == q.action) && costs.count(index_of(a))) alts.push_back(a);
  }
  if (alts.empty())
    throw query_error("no admissible alternative action exists");

  for (ActionRef alt : alts) {
    PairwiseBlame pb;
    pb.alternative = alt;
    pb.cost_alt = costs.at(index_of(alt));
    pb.prob_do_alt = e.prob_do(alt, q.event, &r.skipped);
    pb.delta = std::max(r.prob_do_action - pb.prob_do_alt, 0.0);
    pb.db = db_formula(pb.delta, r.cost_action, pb.cost_alt, q.N);
    r.pairs.push_back(pb);
  }
  r.overall_index = 0;
  for (size_t i = 1; i < r.pairs.size(); i++)
    if (r.pairs[i].db > r.pairs[r.overall_index].db) r.overall_index = int(i);
  r.overall_db = r.pairs[r.overall_index].db;
  r.terms_visited = e.max_sweep;
  return r;
}

std::pair<double, ActionRef> overall_blame(const Psdd& p, const Scenario& s,
                                           const UtilityFunction& u,
                                           ActionRef a, const Formula& event,
                                           const std::string& event_text,
                                           double N,
                                           const ContextDistribution& ctx) {
  BlameQuery q;
  q.action = a;
  q.event = event;
  q.event_text = event_text;
  q.N = N;
  q.contexts = ctx;
  BlameReport r = blameworthiness(p, s, u, q);
  return {r.overall_db, r.pairs[r.overall_index].alternative};
}

namespace {

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::string BlameReport::to_text(const Scenario& s) const {
  std::ostringstream out;
  out << "Blame report for action " << action_label << " on event "
      << event_text << "\n";
  out << "  N = " << format_double(N)
      << " (minimum admissible N: " << format_double(n_floor) << ")\n";
  out << "  Pr(event | do(" << action_label
      << ")) = " << format_double(prob_do_action) << "\n";
  out << "  c(" << action_label << ") = " << format_double(cost_action) << "\n";
  for (const PairwiseBlame& pb : pairs) {
    std::string alt = pblame::action_label(s, pb.alternative);
    out << "  alternative " << alt << ": Pr(event | do(" << alt
        << ")) = " << format_double(pb.prob_do_alt)
        << ", delta = " << format_double(pb.delta)
        << ", c(" << alt << ") = " << format_double(pb.cost_alt)
        << ", db = " << format_double(pb.db) << "\n";
  }
  std::string best = pblame::action_label(s, pairs[overall_index].alternative);
  out << "  overall blameworthiness: " << format_double(overall_db) << " via "
      << best << "\n";
  out << "  terms visited: " << terms_visited << "\n";
  if (skipped.empty()) {
    out << "  notes: none\n";
  } else {
    for (const std::string& m : skipped) out << "  note: " << m << "\n";
  }
  if (overall_db > 0)
    out << "Agent is blameworthy to degree " << short_double(overall_db)
        << " for " << event_text << ", relative to alternative " << best
        << ".\n";
  else
    out << "Agent is not blameworthy for " << event_text << ".\n";
  return out.str();
}

std::string BlameReport::to_json(const Scenario& s) const {
  nlohmann::json j;
  j["action"] = action_label;
  j["event"] = event_text;
  j["N"] = N;
  j["min_admissible_N"] = n_floor;
  j["prob_do"] = prob_do_action;
  j["cost"] = cost_action;
  j["alternatives"] = nlohmann::json::array();
  for (const PairwiseBlame& pb : pairs) {
    nlohmann::json a;
    a["action"] = pblame::action_label(s, pb.alternative);
    a["prob_do"] = pb.prob_do_alt;
    a["delta"] = pb.delta;
    a["cost"] = pb.cost_alt;
    a["db"] = pb.db;
    j["alternatives"].push_back(a);
  }
  j["overall"] = {{"db", overall_db},
                  {"alternative",
                   pblame::action_label(s, pairs[overall_index].alternative)}};
  j["notes"] = skipped;
  j["terms_visited"] = terms_visited;
  return j.dump(2) + "\n";
}

}  // namespace pblame

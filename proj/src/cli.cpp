#include "pblame/cli.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "pblame/blame.h"
#include "pblame/data.h"
#include "pblame/logic.h"
#include "pblame/oracle.h"
#include "pblame/psdd.h"
#include "pblame/sdd.h"
#include "pblame/utility.h"
#include "pblame/vtree.h"

namespace fs = std::filesystem;

namespace pblame {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << content;
}

std::string strip_extension(const std::string& path) {
  fs::path p(path);
  return (p.parent_path() / p.stem()).string();
}

// Results directory shared across commands: each invocation claims the next
// sequence number and files its outputs under it.
class Session {
 public:
  void open(const std::string& dir) {
    dir_ = dir;
    fs::create_directories(dir_);
    int max_seq = 0;
    for (const auto& entry : fs::directory_iterator(dir_)) {
      std::string name = entry.path().filename().string();
      if (name.size() > 4 && isdigit(name[0]) && isdigit(name[1]) &&
          isdigit(name[2]) && name[3] == '-')
        max_seq = std::max(max_seq, std::stoi(name.substr(0, 3)));
    }
    seq_ = max_seq + 1;
  }
  bool active() const { return !dir_.empty(); }
  void write(const std::string& tag, const std::string& content) const {
    if (!active()) return;
    char prefix[8];
    std::snprintf(prefix, sizeof prefix, "%03d-", seq_);
    write_file((fs::path(dir_) / (prefix + tag)).string(), content);
  }

 private:
  std::string dir_;
  int seq_ = 0;
};

// Self-contained model file: the scenario, the vtree, and the fitted
// circuit, as the concatenation of their own text formats.
struct Bundle {
  Scenario scenario;
  Vtree vt{Vtree::build(1, VtreeStrategy::Balanced)};
  Psdd psdd;
};

std::string bundle_text(const Scenario& s, const Psdd& p) {
  return "pblame-model 1\n[scenario]\n" + s.to_text() + "[vtree]\n" +
         p.vtree().to_text(s.vars) + "[psdd]\n" + p.to_text();
}

Bundle load_bundle(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "pblame-model 1")
    throw parse_error("'" + path + "' is not a model file");
  std::map<std::string, std::string> sections;
  std::string current;
  while (std::getline(in, line)) {
    if (line == "[scenario]" || line == "[vtree]" || line == "[psdd]") {
      current = line.substr(1, line.size() - 2);
      if (sections.count(current))
        throw parse_error("duplicate section [" + current + "]");
      sections[current];
      continue;
    }
    if (current.empty())
      throw parse_error("content before the first section in '" + path + "'");
    sections[current] += line + "\n";
  }
  for (const char* need : {"scenario", "vtree", "psdd"})
    if (!sections.count(need))
      throw parse_error("model file is missing the [" + std::string(need) +
                        "] section");
  Scenario s = Scenario::parse(sections["scenario"]);
  Vtree vt = Vtree::parse(sections["vtree"], s.vars);
  Psdd p = Psdd::load_text(sections["psdd"], vt);
  return Bundle{std::move(s), std::move(vt), std::move(p)};
}

struct Options {
  Session session;

  std::string scenario_path, vtree_kind = "balanced", out;
  std::string prefix, data_path;
  double smoothing = 1.0;
  std::string model_path, utility_path, query_path, contexts_path;
  bool tabular = false, context_relative = false;
  double lambda = 1e-3;
  double N = 1.0;
  bool n_set = false;
  uint64_t seed = 7;
  size_t trials = 25;
  size_t n = 1000;
  double adherence = 0.9;
  std::vector<std::string> params;
  std::string domain;
};

VtreeStrategy parse_strategy(const std::string& s) {
  if (s == "balanced") return VtreeStrategy::Balanced;
  if (s == "right-linear") return VtreeStrategy::RightLinear;
  throw parse_error("unknown vtree strategy '" + s +
                    "' (balanced, right-linear)");
}

int cmd_compile(Options& o) {
  Scenario s = Scenario::load(o.scenario_path);
  Vtree vt = Vtree::build(s.num_vars(), parse_strategy(o.vtree_kind));
  SddManager m(vt);
  NodeId root = m.compile(s.constraints);
  uint64_t mc = m.model_count(root);
  std::string prefix = o.out.empty() ? strip_extension(o.scenario_path) : o.out;
  write_file(prefix + ".scn", s.to_text());
  vt.save(prefix + ".vtree", s.vars);
  m.save(root, prefix + ".sdd");
  std::ostringstream msg;
  msg << "model count: " << mc << "\n";
  std::cout << msg.str();
  o.session.write("compile.txt", msg.str());
  o.session.write("compiled.sdd", m.to_text(root));
  return 0;
}

int cmd_fit(Options& o) {
  Scenario s = Scenario::load(o.prefix + ".scn");
  Vtree vt = Vtree::load(o.prefix + ".vtree", s.vars);
  SddManager m(vt);
  NodeId root = m.load(o.prefix + ".sdd");
  Dataset d = Dataset::load(o.data_path, s);
  Psdd p = Psdd::fit(m, root, d.rows, o.smoothing);
  std::string out = o.out.empty() ? o.prefix + ".pmdl" : o.out;
  std::string text = bundle_text(s, p);
  write_file(out, text);
  std::ostringstream msg;
  msg << "fit: " << d.size() << " rows, " << p.support().size()
      << " support models, smoothing " << format_double(o.smoothing) << "\n";
  std::cout << msg.str();
  o.session.write("fit.txt", msg.str());
  o.session.write("model.pmdl", text);
  return 0;
}

int cmd_learn_utility(Options& o) {
  Bundle b = load_bundle(o.model_path);
  UtilitySpec spec{o.context_relative, !o.tabular, o.lambda};
  UtilityFunction u = learn_utility(b.psdd, b.scenario, spec);
  std::string out =
      o.out.empty() ? strip_extension(o.model_path) + ".utility" : o.out;
  std::string text = u.to_text(b.scenario);
  write_file(out, text);
  std::ostringstream msg;
  msg << "learned " << (u.linear ? "linear" : "tabular") << " utility over "
      << u.outcome_vars.size() << " outcome variables";
  if (!u.uniform_contexts.empty())
    msg << " (uniform fallback in " << u.uniform_contexts.size()
        << (u.uniform_contexts.size() == 1 ? " context)" : " contexts)");
  msg << "\n";
  std::cout << msg.str();
  o.session.write("learn-utility.txt", msg.str());
  o.session.write("utility.txt", text);
  return 0;
}

int run_blame_query(const Bundle& b, const UtilityFunction& u, BlameQuery& q,
                    Options& o) {
  if (!o.contexts_path.empty())
    q.contexts = ContextDistribution::load(o.contexts_path, b.scenario);
  if (o.n_set) q.N = o.N;
  BlameReport r = blameworthiness(b.psdd, b.scenario, u, q);
  std::string text = r.to_text(b.scenario);
  std::cout << text;
  o.session.write("blame.txt", text);
  o.session.write("blame.json", r.to_json(b.scenario));
  return 0;
}

int cmd_blame(Options& o) {
  Bundle b = load_bundle(o.model_path);
  UtilityFunction u = UtilityFunction::load(o.utility_path, b.scenario);
  BlameQuery q = load_query(o.query_path, b.scenario);
  return run_blame_query(b, u, q, o);
}

// Random event formula over variables outside the action group: an OR of
// one to three literals.
Formula random_event(std::mt19937_64& rng, const Scenario& s,
                     const std::vector<int>& group) {
  std::vector<int> eligible;
  for (int v = 0; v < s.num_vars(); v++)
    if (std::find(group.begin(), group.end(), v) == group.end())
      eligible.push_back(v);
  size_t k = 1 + size_t(next_unit(rng) * 3);
  if (k > 3) k = 3;
  Formula f;
  f.kind = Formula::Kind::Or;
  for (size_t i = 0; i < k; i++) {
    int v = eligible[size_t(next_unit(rng) * eligible.size()) % eligible.size()];
    Formula atom;
    atom.kind = Formula::Kind::Atom;
    atom.var = v;
    if (next_unit(rng) < 0.5) {
      Formula neg;
      neg.kind = Formula::Kind::Not;
      neg.args.push_back(atom);
      f.args.push_back(neg);
    } else {
      f.args.push_back(atom);
    }
  }
  return f;
}

int cmd_verify(Options& o) {
  Bundle b = load_bundle(o.model_path);
  UtilityFunction u = o.utility_path.empty()
                          ? learn_utility(b.psdd, b.scenario, UtilitySpec{})
                          : UtilityFunction::load(o.utility_path, b.scenario);
  JointTable t = build_joint(b.psdd);
  std::mt19937_64 rng(o.seed);
  int nv = b.scenario.num_vars();
  const std::vector<Bits>& support = b.psdd.support();

  auto random_mask = [&](double density) {
    Bits m = 0;
    for (int v = 0; v < nv; v++)
      if (next_unit(rng) < density) m = set_bit(m, v, true);
    return m;
  };
  auto support_model = [&] {
    return support[size_t(next_unit(rng) * support.size()) % support.size()];
  };

  double d_marg = 0, d_cond = 0, d_mpe = 0, d_delta = 0, d_cost = 0, d_db = 0;
  for (size_t i = 0; i < o.trials; i++) {
    Bits mask = random_mask(0.4);
    Bits val = support_model() & mask;
    d_marg = std::max(
        d_marg, std::abs(b.psdd.marginal(mask, val) - oracle_marginal(t, mask, val)));

    Bits emask = random_mask(0.3);
    Bits eval = support_model() & emask;
    Bits qmask = random_mask(0.3) & ~emask;
    Bits qval = support_model() & qmask;
    if (oracle_marginal(t, emask, eval) > 0) {
      d_cond = std::max(d_cond,
                        std::abs(b.psdd.conditional(qmask, qval, emask, eval) -
                                 oracle_conditional(t, qmask, qval, emask, eval)));
      auto [w1, p1] = b.psdd.mpe(emask, eval);
      auto [w2, p2] = oracle_mpe(t, emask, eval);
      d_mpe = std::max(d_mpe, std::abs(p1 - p2) + (w1 == w2 ? 0.0 : 1.0));
    }
  }

  ContextDistribution ctx = ContextDistribution::model();
  for (const ActionGroup& g : b.scenario.action_groups) {
    ActionRef seed_action{g.indicators[0], true};
    std::vector<ActionRef> actions = group_actions(b.scenario, seed_action);
    std::vector<ActionRef> live;
    double min_cost = 0;
    bool first = true;
    for (ActionRef a : actions) {
      bool supported = false;
      for (size_t i = 0; i < t.models.size(); i++)
        if (bit(t.models[i], a.var) == a.positive && t.probs[i] > 0)
          supported = true;
      if (!supported) continue;
      double c1 = cost(b.psdd, b.scenario, u, a, ctx);
      double c2 = oracle_cost(t, b.scenario, u, a, ctx);
      d_cost = std::max(d_cost, std::abs(c1 - c2));
      if (first || c2 < min_cost) min_cost = c2;
      first = false;
      live.push_back(a);
    }
    if (live.size() < 2) continue;
    double N = 1.1 * std::max(-min_cost, 0.0) + 1.0;
    Formula event = random_event(rng, b.scenario, g.indicators);
    for (ActionRef a : live)
      for (ActionRef alt : live) {
        if (a == alt) continue;
        double dl1 = delta(b.psdd, b.scenario, a, alt, event, ctx);
        double dl2 = oracle_delta(t, b.scenario, a, alt, event, ctx);
        d_delta = std::max(d_delta, std::abs(dl1 - dl2));
        double db1 =
            db_formula(dl1, cost(b.psdd, b.scenario, u, a, ctx),
                       cost(b.psdd, b.scenario, u, alt, ctx), N);
        double db2 = oracle_db(t, b.scenario, u, a, alt, event, N, ctx);
        d_db = std::max(d_db, std::abs(db1 - db2));
      }
  }

  std::ostringstream msg;
  msg << "marginals: max deviation " << format_double(d_marg) << "\n"
      << "conditionals: max deviation " << format_double(d_cond) << "\n"
      << "mpe: max deviation " << format_double(d_mpe) << "\n"
      << "delta: max deviation " << format_double(d_delta) << "\n"
      << "cost: max deviation " << format_double(d_cost) << "\n"
      << "db: max deviation " << format_double(d_db) << "\n";
  double worst = std::max({d_marg, d_cond, d_mpe, d_delta, d_cost, d_db});
  bool ok = worst <= 1e-9;
  msg << "overall max deviation " << format_double(worst)
      << ", tolerance 1e-9: " << (ok ? "PASS" : "FAIL") << "\n";
  std::cout << msg.str();
  o.session.write("verify.txt", msg.str());
  return ok ? 0 : 1;
}

int cmd_gen_data(Options& o) {
  Scenario s;
  std::string name = o.domain;
  bool is_builtin = false;
  for (const std::string& b : builtin_scenario_names())
    if (b == o.domain) is_builtin = true;
  if (is_builtin) {
    s = builtin_scenario(o.domain);
  } else {
    s = Scenario::load(o.domain);
    name = s.name;
  }
  Dataset d;
  if (name == "lung_cancer") {
    LungParams params;
    std::map<std::string, double LungParams::*> fields = {
        {"prevalence", &LungParams::prevalence},
        {"ct-sens", &LungParams::ct_sens},
        {"ct-spec", &LungParams::ct_spec},
        {"m-sens", &LungParams::m_sens},
        {"m-spec", &LungParams::m_spec},
        {"diag-survival", &LungParams::diag_survival},
        {"surv-thor-mm", &LungParams::surv_thor_mm},
        {"surv-thor-clear", &LungParams::surv_thor_clear},
        {"surv-rad-mm", &LungParams::surv_rad_mm},
        {"surv-rad-clear", &LungParams::surv_rad_clear},
        {"no-test-thor", &LungParams::no_test_thor},
    };
    for (const std::string& kv : o.params) {
      size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw parse_error("--param expects key=value, got '" + kv + "'");
      std::string key = kv.substr(0, eq);
      auto it = fields.find(key);
      if (it == fields.end())
        throw parse_error("unknown generator parameter '" + key + "'");
      try {
        params.*(it->second) = std::stod(kv.substr(eq + 1));
      } catch (const std::exception&) {
        throw parse_error("bad value in '" + kv + "'");
      }
    }
    d = generate_lung_cancer(s, o.n, o.seed, o.adherence, params);
  } else if (name == "trolley") {
    d = generate_trolley_standin(s, o.n, o.seed);
  } else if (name == "teamwork") {
    d = generate_teamwork_standin(s, o.n, o.seed);
  } else {
    throw query_error("no generator for scenario '" + name + "'");
  }

  // every emitted row must satisfy the theory
  Vtree vt = Vtree::build(s.num_vars(), VtreeStrategy::Balanced);
  SddManager m(vt);
  NodeId root = m.compile(s.constraints);
  for (size_t i = 0; i < d.rows.size(); i++)
    if (!m.is_model(root, d.rows[i]))
      throw fit_error("generated row " + std::to_string(i + 1) +
                      " violates the scenario constraints");

  std::string out = o.out.empty() ? name + ".csv" : o.out;
  d.save(out);
  std::ostringstream msg;
  msg << "generated " << d.size() << " rows for scenario '" << name
      << "' (seed " << o.seed << ")\n";
  std::cout << msg.str();
  o.session.write("gen-data.txt", msg.str());
  return 0;
}

int cmd_interactive(Options& o) {
  auto prompt = [](const std::string& p) {
    std::cout << p << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) return std::pair(false, std::string());
    return std::pair(true, line);
  };
  auto [ok_m, model_path] = prompt("model file> ");
  if (!ok_m || model_path.empty()) return 0;
  Bundle b = load_bundle(model_path);
  auto [ok_u, upath] = prompt("utility file (blank to learn)> ");
  if (!ok_u) return 0;
  UtilityFunction u = upath.empty()
                          ? learn_utility(b.psdd, b.scenario, UtilitySpec{})
                          : UtilityFunction::load(upath, b.scenario);
  while (true) {
    auto [ok_a, action] = prompt("action> ");
    if (!ok_a || action.empty()) return 0;
    try {
      BlameQuery q;
      q.action = parse_action(action, b.scenario);
      auto [ok_alt, alt] = prompt("alternative (blank for all)> ");
      if (!ok_alt) return 0;
      if (!alt.empty()) q.alternatives.push_back(parse_action(alt, b.scenario));
      auto [ok_e, etext] = prompt("event> ");
      if (!ok_e) return 0;
      q.event = parse_formula(etext, b.scenario);
      q.event_text = etext;
      auto [ok_n, ntext] = prompt("N (blank for 1)> ");
      if (!ok_n) return 0;
      q.N = ntext.empty() ? 1.0 : std::stod(ntext);
      BlameReport r = blameworthiness(b.psdd, b.scenario, u, q);
      std::string text = r.to_text(b.scenario);
      std::cout << text;
      o.session.write("blame.txt", text);
      o.session.write("blame.json", r.to_json(b.scenario));
    } catch (const Error& e) {
      std::cout << "error: " << e.what() << "\n";
    } catch (const std::exception& e) {
      std::cout << "error: " << e.what() << "\n";
    }
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  Options o;
  CLI::App app{"PSDD-based blameworthiness toolkit"};
  app.require_subcommand(1);
  std::string session_dir;
  if (const char* env = std::getenv("PBLAME_SESSION_DIR")) session_dir = env;
  app.add_option("--session", session_dir,
                 "directory collecting every command's outputs");

  CLI::App* compile = app.add_subcommand(
      "compile", "compile a scenario's constraints into a circuit");
  compile->add_option("scenario", o.scenario_path, "scenario file")->required();
  compile->add_option("--vtree", o.vtree_kind, "balanced|right-linear");
  compile->add_option("--out", o.out, "output prefix");

  CLI::App* fit = app.add_subcommand(
      "fit", "fit circuit parameters to a dataset");
  fit->add_option("prefix", o.prefix, "compiled circuit prefix")->required();
  fit->add_option("data", o.data_path, "dataset csv")->required();
  fit->add_option("--smoothing", o.smoothing, "virtual copies of the support");
  fit->add_option("--out", o.out, "model file");

  CLI::App* learn = app.add_subcommand(
      "learn-utility", "learn a utility function from a fitted model");
  learn->add_option("model", o.model_path, "model file")->required();
  learn->add_flag("--tabular", o.tabular, "one value per outcome assignment");
  learn->add_flag("--context-relative", o.context_relative,
                  "separate weights per context");
  learn->add_option("--lambda", o.lambda, "L2 regularization");
  learn->add_option("--out", o.out, "utility file");

  CLI::App* blame = app.add_subcommand(
      "blame", "compute a blameworthiness report");
  blame->add_option("model", o.model_path, "model file")->required();
  blame->add_option("utility", o.utility_path, "utility file")->required();
  blame->add_option("query", o.query_path, "query file")->required();
  blame->add_option("--contexts", o.contexts_path,
                    "alternative context distribution file");
  blame->add_option("--N", o.N, "cost importance")->trigger_on_parse();
  blame->parse_complete_callback([&] {
    if (blame->count("--N")) o.n_set = true;
  });

  CLI::App* verify = app.add_subcommand(
      "verify", "check circuit answers against brute-force sums");
  verify->add_option("model", o.model_path, "model file")->required();
  verify->add_option("utility", o.utility_path, "utility file (learned if absent)");
  verify->add_option("--seed", o.seed, "rng seed");
  verify->add_option("--trials", o.trials, "random queries per quantity");

  CLI::App* gen = app.add_subcommand(
      "gen-data", "generate a synthetic dataset");
  gen->add_option("scenario", o.domain,
                  "builtin scenario name or scenario file")->required();
  gen->add_option("--n", o.n, "row count");
  gen->add_option("--seed", o.seed, "rng seed");
  gen->add_option("--adherence", o.adherence,
                  "probability of following the recommended decision");
  gen->add_option("--param", o.params, "generator parameter key=value");
  gen->add_option("--out", o.out, "output csv");

  CLI::App* inter = app.add_subcommand(
      "interactive", "prompt-driven blame queries");

  try {
    app.parse(argc, argv);
    if (!session_dir.empty()) o.session.open(session_dir);
    if (compile->parsed()) return cmd_compile(o);
    if (fit->parsed()) return cmd_fit(o);
    if (learn->parsed()) return cmd_learn_utility(o);
    if (blame->parsed()) return cmd_blame(o);
    if (verify->parsed()) return cmd_verify(o);
    if (gen->parsed()) return cmd_gen_data(o);
    if (inter->parsed()) return cmd_interactive(o);
    return 0;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pblame

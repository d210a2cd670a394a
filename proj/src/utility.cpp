#include "pblame/utility.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pblame {

namespace {

Bits mask_of(const std::vector<int>& vars) {
  Bits m = 0;
  for (int v : vars) m |= Bits(1) << v;
  return m;
}

// Cholesky solve of G z = b for a symmetric positive definite G (n x n,
// row-major). Returns false if a pivot collapses.
bool spd_solve(std::vector<double> G, std::vector<double> b, size_t n,
               std::vector<double>& z) {
  for (size_t i = 0; i < n; i++) {
    for (size_t j = 0; j <= i; j++) {
      double sum = G[i * n + j];
      for (size_t k = 0; k < j; k++) sum -= G[i * n + k] * G[j * n + k];
      if (i == j) {
        if (sum <= 0) return false;
        G[i * n + i] = std::sqrt(sum);
      } else {
        G[i * n + j] = sum / G[j * n + j];
      }
    }
  }
  for (size_t i = 0; i < n; i++) {
    double sum = b[i];
    for (size_t k = 0; k < i; k++) sum -= G[i * n + k] * z[k];
    z[i] = sum / G[i * n + i];
  }
  for (size_t ii = n; ii-- > 0;) {
    double sum = z[ii];
    for (size_t k = ii + 1; k < n; k++) sum -= G[k * n + ii] * z[k];
    z[ii] = sum / G[ii * n + ii];
  }
  return true;
}

}  // namespace

std::vector<double> nnls_ridge(const std::vector<double>& F, size_t rows,
                               size_t cols, const std::vector<double>& y,
                               double lambda) {
  if (lambda < 0) throw fit_error("regularization must be nonnegative");
  if (F.size() != rows * cols || y.size() != rows)
    throw fit_error("regression system dimensions disagree");

  // Normal-equation form: the ridge term only adds lambda to the diagonal.
  std::vector<double> G(cols * cols, 0.0), b(cols, 0.0);
  for (size_t i = 0; i < cols; i++) {
    for (size_t j = 0; j <= i; j++) {
      KahanSum s;
      for (size_t r = 0; r < rows; r++) s.add(F[r * cols + i] * F[r * cols + j]);
      G[i * cols + j] = G[j * cols + i] = s.value();
    }
    G[i * cols + i] += lambda;
    KahanSum s;
    for (size_t r = 0; r < rows; r++) s.add(F[r * cols + i] * y[r]);
    b[i] = s.value();
  }

  std::vector<double> w(cols, 0.0);
  std::vector<bool> passive(cols, false);
  double scale = 0;
  for (size_t i = 0; i < cols; i++) scale = std::max(scale, std::abs(b[i]));
  if (scale == 0) return w;
  const double tol = 1e-10 * scale;

  auto objective = [&] {
    // 0.5 w'Gw - b'w, equal to the residual objective up to a constant
    double obj = 0;
    for (size_t i = 0; i < cols; i++) {
      if (w[i] == 0) continue;
      double gw = 0;
      for (size_t j = 0; j < cols; j++) gw += G[i * cols + j] * w[j];
      obj += 0.5 * w[i] * gw - b[i] * w[i];
    }
    return obj;
  };

  double prev_obj = 0;
  for (int iter = 0; iter < 10000; iter++) {
    // Dual feasibility: gradient of the residual at the active coordinates.
    int best = -1;
    double best_g = tol;
    for (size_t i = 0; i < cols; i++) {
      if (passive[i]) continue;
      double g = b[i];
      for (size_t j = 0; j < cols; j++) g -= G[i * cols + j] * w[j];
      if (g > best_g) {
        best_g = g;
        best = int(i);
      }
    }
    if (best < 0) break;
    passive[best] = true;

    for (int inner = 0; inner < 10000; inner++) {
      std::vector<int> idx;
      for (size_t i = 0; i < cols; i++)
        if (passive[i]) idx.push_back(int(i));
      size_t k = idx.size();
      std::vector<double> Gp(k * k), bp(k), z(k);
      for (size_t i = 0; i < k; i++) {
        bp[i] = b[idx[i]];
        for (size_t j = 0; j < k; j++) Gp[i * k + j] = G[idx[i] * cols + idx[j]];
      }
      if (!spd_solve(std::move(Gp), std::move(bp), k, z)) {
        // singular passive block: drop the variable just admitted
        passive[best] = false;
        w[best] = 0;
        break;
      }
      bool all_pos = true;
      for (size_t i = 0; i < k; i++)
        if (z[i] <= 0) all_pos = false;
      if (all_pos) {
        for (size_t i = 0; i < cols; i++) w[i] = 0;
        for (size_t i = 0; i < k; i++) w[idx[i]] = z[i];
        break;
      }
      double alpha = 1;
      for (size_t i = 0; i < k; i++)
        if (z[i] <= 0) {
          double wi = w[idx[i]];
          double a = wi / (wi - z[i]);
          alpha = std::min(alpha, a);
        }
      for (size_t i = 0; i < k; i++) {
        double wi = w[idx[i]];
        double nw = wi + alpha * (z[i] - wi);
        w[idx[i]] = nw;
      }
      for (size_t i = 0; i < k; i++)
        if (w[idx[i]] <= 1e-14) {
          w[idx[i]] = 0;
          passive[idx[i]] = false;
        }
    }

    double obj = objective();
    if (iter > 0 && prev_obj - obj < 1e-10 * (1 + std::abs(prev_obj))) break;
    prev_obj = obj;
  }
  return w;
}

double UtilityFunction::eval_world(Bits w) const {
  Bits key = 0;
  if (context_relative) key = w & mask_of(context_vars);
  if (linear) {
    auto it = weights.find(key);
    if (it == weights.end())
      throw query_error("no utility weights for the given context");
    double v = 0;
    for (size_t i = 0; i < outcome_vars.size(); i++)
      if (bit(w, outcome_vars[i])) v += it->second[i];
    return v;
  }
  auto it = table.find(key);
  if (it == table.end())
    throw query_error("no utility table for the given context");
  Bits o = w & mask_of(outcome_vars);
  auto jt = it->second.find(o);
  return jt == it->second.end() ? 0.0 : jt->second;
}

double eval_utility(const UtilityFunction& u, Bits outcome,
                    const std::optional<Bits>& context) {
  if (u.context_relative && !context)
    throw query_error("context-relative utility requires a context assignment");
  if (!u.context_relative && context)
    throw query_error("utility is not context-relative; no context expected");
  Bits w = outcome;
  if (context) w |= *context;
  return u.eval_world(w);
}

void UtilityFunction::validate() const {
  for (const auto& [ctx, ws] : weights) {
    if (ws.size() != outcome_vars.size())
      throw parse_error("utility weight vector length mismatch");
    for (double v : ws)
      if (v < 0 || !std::isfinite(v)) throw parse_error("negative utility weight");
  }
  for (const auto& [ctx, tab] : table)
    for (const auto& [o, v] : tab)
      if (v < 0 || !std::isfinite(v)) throw parse_error("negative utility value");
  if (!context_relative && ((linear && weights.size() != 1) ||
                            (!linear && table.size() != 1)))
    throw parse_error("utility without context sections must have exactly one block");
}

namespace {

std::string context_key_string(Bits key, const std::vector<int>& ctx_vars) {
  std::string s;
  for (int v : ctx_vars) s += bit(key, v) ? '1' : '0';
  return s;
}

Bits parse_context_key(const std::string& s, const std::vector<int>& ctx_vars) {
  if (s.size() != ctx_vars.size())
    throw parse_error("context bitstring '" + s + "' must have " +
                      std::to_string(ctx_vars.size()) + " bits");
  Bits key = 0;
  for (size_t i = 0; i < s.size(); i++) {
    if (s[i] == '1')
      key = set_bit(key, ctx_vars[i], true);
    else if (s[i] != '0')
      throw parse_error("context bitstring '" + s + "' must be 0/1 only");
  }
  return key;
}

}  // namespace

std::string UtilityFunction::to_text(const Scenario& s) const {
  std::ostringstream out;
  out << "utility " << (linear ? "linear" : "tabular");
  if (context_relative) out << " context-relative";
  out << "\n# normalization: max support utility anchored to 1\n";
  auto emit_block = [&](Bits key) {
    if (context_relative)
      out << "context " << context_key_string(key, context_vars) << "\n";
    if (std::find(uniform_contexts.begin(), uniform_contexts.end(), key) !=
        uniform_contexts.end())
      out << "uniform\n";
    if (linear) {
      const std::vector<double>& ws = weights.at(key);
      for (size_t i = 0; i < outcome_vars.size(); i++)
        out << s.vars[outcome_vars[i]] << " " << format_double(ws[i]) << "\n";
    } else {
      for (const auto& [o, v] : table.at(key)) {
        for (int ov : outcome_vars) out << (bit(o, ov) ? '1' : '0');
        out << " " << format_double(v) << "\n";
      }
    }
  };
  if (linear)
    for (const auto& [key, ws] : weights) emit_block(key);
  else
    for (const auto& [key, tab] : table) emit_block(key);
  return out.str();
}

void UtilityFunction::save(const std::string& path, const Scenario& s) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write utility file '" + path + "'");
  out << to_text(s);
}

UtilityFunction UtilityFunction::parse(const std::string& text,
                                       const Scenario& s) {
  UtilityFunction u;
  u.outcome_vars = s.cell_vars(Cell::Outcome);
  if (u.outcome_vars.empty()) u.outcome_vars = s.cell_vars(Cell::Decision);
  u.context_vars = s.cell_vars(Cell::Context);

  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw parse_error("empty utility file");
  std::istringstream head(line);
  std::string tag, form, rel;
  head >> tag >> form >> rel;
  if (tag != "utility" || (form != "linear" && form != "tabular"))
    throw parse_error("utility file must start with 'utility linear|tabular'");
  u.linear = form == "linear";
  if (rel == "context-relative")
    u.context_relative = true;
  else if (!rel.empty())
    throw parse_error("unknown utility qualifier '" + rel + "'");

  std::vector<size_t> name_index(s.vars.size(), SIZE_MAX);
  for (size_t i = 0; i < u.outcome_vars.size(); i++)
    name_index[u.outcome_vars[i]] = i;

  bool block_open = !u.context_relative;
  Bits key = 0;
  auto ensure_block = [&] {
    if (!block_open)
      throw parse_error("weight line before any 'context' section header");
    if (u.linear && !u.weights.count(key))
      u.weights[key] = std::vector<double>(u.outcome_vars.size(), 0.0);
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, bs;
    ls >> a >> bs;
    if (a == "context") {
      if (!u.context_relative)
        throw parse_error("context section in a non-context-relative utility");
      key = parse_context_key(bs, u.context_vars);
      if (u.weights.count(key) || u.table.count(key))
        throw parse_error("duplicate context section '" + bs + "'");
      if (u.linear)
        u.weights[key] = std::vector<double>(u.outcome_vars.size(), 0.0);
      else
        u.table[key];
      block_open = true;
      continue;
    }
    if (a == "uniform") {
      ensure_block();
      u.uniform_contexts.push_back(key);
      continue;
    }
    ensure_block();
    double v;
    try {
      size_t used = 0;
      v = std::stod(bs, &used);
      if (used != bs.size() || bs.empty()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw parse_error("bad weight value '" + bs + "' for '" + a + "'");
    }
    if (v < 0) throw parse_error("negative weight for '" + a + "'");
    if (u.linear) {
      int vi = s.var_index(a);
      if (vi < 0 || name_index[vi] == SIZE_MAX)
        throw parse_error("unknown outcome variable '" + a + "'");
      u.weights[key][name_index[vi]] = v;
    } else {
      if (a.size() != u.outcome_vars.size())
        throw parse_error("outcome bitstring '" + a + "' must have " +
                          std::to_string(u.outcome_vars.size()) + " bits");
      Bits o = 0;
      for (size_t i = 0; i < a.size(); i++) {
        if (a[i] == '1')
          o = set_bit(o, u.outcome_vars[i], true);
        else if (a[i] != '0')
          throw parse_error("outcome bitstring '" + a + "' must be 0/1 only");
      }
      u.table[key][o] = v;
    }
  }
  if (!u.context_relative) {
    if (u.linear && u.weights.empty())
      u.weights[0] = std::vector<double>(u.outcome_vars.size(), 0.0);
    if (!u.linear) u.table[0];
  }
  u.validate();
  return u;
}

UtilityFunction UtilityFunction::load(const std::string& path,
                                      const Scenario& s) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open utility file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), s);
}

UtilityFunction learn_utility(const Psdd& p, const Scenario& s,
                              const UtilitySpec& spec) {
  if (spec.lambda < 0) throw fit_error("regularization must be nonnegative");
  UtilityFunction u;
  u.context_relative = spec.context_relative;
  u.linear = spec.linear;
  u.outcome_vars = s.cell_vars(Cell::Outcome);
  if (u.outcome_vars.empty()) u.outcome_vars = s.cell_vars(Cell::Decision);
  u.context_vars = s.cell_vars(Cell::Context);
  if (u.outcome_vars.empty())
    throw fit_error("scenario has no outcome or decision variables");

  const std::vector<Bits>& support = p.support();
  if (support.empty()) throw fit_error("cannot learn a utility from an empty support");
  std::vector<double> pm(support.size());
  for (size_t i = 0; i < support.size(); i++) pm[i] = p.evaluate(support[i]);

  Bits cmask = mask_of(u.context_vars);
  Bits dmask = mask_of(s.cell_vars(Cell::Decision));
  Bits omask = mask_of(u.outcome_vars);

  // (context, decision) cells of the support with their outcome statistics
  struct CellStat {
    double total = 0;                     // Pr(X, D)
    std::vector<double> feat;             // Pr(X, D, O_i = 1), linear
    std::map<Bits, double> out;           // Pr(X, D, O = o), tabular
  };
  std::map<Bits, double> ctx_total;
  std::map<Bits, std::map<Bits, CellStat>> cells;  // context -> decision -> stat
  std::map<Bits, std::vector<Bits>> ctx_outcomes;  // support outcomes per context
  for (size_t i = 0; i < support.size(); i++) {
    Bits m = support[i];
    Bits cx = m & cmask, dx = m & dmask, ox = m & omask;
    ctx_total[cx] += pm[i];
    CellStat& st = cells[cx][dx];
    if (u.linear && st.feat.empty()) st.feat.assign(u.outcome_vars.size(), 0.0);
    st.total += pm[i];
    if (u.linear) {
      for (size_t k = 0; k < u.outcome_vars.size(); k++)
        if (bit(m, u.outcome_vars[k])) st.feat[k] += pm[i];
    } else {
      st.out[ox] += pm[i];
    }
    ctx_outcomes[cx].push_back(ox);
  }

  // tabular feature columns: distinct support outcome assignments
  std::vector<Bits> all_outcomes;
  std::map<Bits, size_t> out_col;
  if (!u.linear) {
    for (const auto& [cx, os] : ctx_outcomes)
      for (Bits o : os) all_outcomes.push_back(o);
    std::sort(all_outcomes.begin(), all_outcomes.end());
    all_outcomes.erase(std::unique(all_outcomes.begin(), all_outcomes.end()),
                       all_outcomes.end());
    for (size_t i = 0; i < all_outcomes.size(); i++) out_col[all_outcomes[i]] = i;
  }

  auto solve_block = [&](const std::vector<std::pair<Bits, const CellStat*>>& rows,
                         double px_of_rows_ctx,
                         const std::map<Bits, double>* per_row_px)
      -> std::vector<double> {
    size_t cols = u.linear ? u.outcome_vars.size() : all_outcomes.size();
    std::vector<double> F, y;
    for (const auto& [cx, st] : rows) {
      if (st->total <= 0) continue;
      double px = per_row_px ? per_row_px->at(cx) : px_of_rows_ctx;
      if (px <= 0) continue;
      y.push_back(st->total / px);
      if (u.linear) {
        for (size_t k = 0; k < cols; k++) F.push_back(st->feat[k] / st->total);
      } else {
        std::vector<double> row(cols, 0.0);
        for (const auto& [o, v] : st->out) row[out_col.at(o)] = v / st->total;
        F.insert(F.end(), row.begin(), row.end());
      }
    }
    if (y.empty()) return {};
    bool any_feature = false;
    for (double f : F)
      if (f != 0) any_feature = true;
    if (!any_feature) return {};
    return nnls_ridge(F, y.size(), cols, y, spec.lambda);
  };

  auto store = [&](Bits key, std::vector<double> w, bool degenerate) {
    if (degenerate) {
      u.uniform_contexts.push_back(key);
      if (u.linear)
        w.assign(u.outcome_vars.size(), 1.0);
      else
        w.assign(all_outcomes.size(), 1.0);
    }
    if (u.linear) {
      u.weights[key] = std::move(w);
    } else {
      std::map<Bits, double> tab;
      for (size_t i = 0; i < all_outcomes.size(); i++)
        if (w[i] != 0) tab[all_outcomes[i]] = w[i];
      u.table[key] = std::move(tab);
    }
  };

  if (spec.context_relative) {
    for (const auto& [cx, dcells] : cells) {
      std::vector<std::pair<Bits, const CellStat*>> rows;
      for (const auto& [dx, st] : dcells) rows.emplace_back(cx, &st);
      std::vector<double> w;
      if (ctx_total[cx] > 0) w = solve_block(rows, ctx_total[cx], nullptr);
      bool degenerate = w.empty();
      store(cx, std::move(w), degenerate);
    }
  } else {
    std::vector<std::pair<Bits, const CellStat*>> rows;
    for (const auto& [cx, dcells] : cells)
      for (const auto& [dx, st] : dcells) rows.emplace_back(cx, &st);
    std::vector<double> w = solve_block(rows, 0, &ctx_total);
    bool degenerate = w.empty();
    store(0, std::move(w), degenerate);
  }

  // anchor: the best support outcome gets utility 1
  double max_u = 0;
  for (Bits m : support) max_u = std::max(max_u, u.eval_world(m));
  if (max_u <= 0) {
    // everything zero: fall back to uniform weights globally
    for (auto& [key, ws] : u.weights) {
      ws.assign(u.outcome_vars.size(), 1.0);
      if (std::find(u.uniform_contexts.begin(), u.uniform_contexts.end(), key) ==
          u.uniform_contexts.end())
        u.uniform_contexts.push_back(key);
    }
    for (auto& [key, tab] : u.table) {
      for (Bits o : all_outcomes) tab[o] = 1.0;
      if (std::find(u.uniform_contexts.begin(), u.uniform_contexts.end(), key) ==
          u.uniform_contexts.end())
        u.uniform_contexts.push_back(key);
    }
    for (Bits m : support) max_u = std::max(max_u, u.eval_world(m));
  }
  // max_u can stay 0 when every outcome variable is constrained false over
  // the whole support; the uniform weights are then left unscaled.
  if (max_u > 0) {
    for (auto& [key, ws] : u.weights)
      for (double& v : ws) v /= max_u;
    for (auto& [key, tab] : u.table)
      for (auto& [o, v] : tab) v /= max_u;
  }

  u.validate();
  return u;
}

}  // namespace pblame

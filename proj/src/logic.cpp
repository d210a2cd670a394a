#include "pblame/logic.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace pblame {

bool Formula::eval(Bits w) const {
  switch (kind) {
    case Kind::Atom:
      return bit(w, var);
    case Kind::Not:
      return !args[0].eval(w);
    case Kind::And:
      for (const Formula& a : args)
        if (!a.eval(w)) return false;
      return true;
    case Kind::Or:
      for (const Formula& a : args)
        if (a.eval(w)) return true;
      return false;
    case Kind::Implies:
      return !args[0].eval(w) || args[1].eval(w);
    case Kind::Iff:
      return args[0].eval(w) == args[1].eval(w);
  }
  return false;
}

void Formula::collect_vars(std::vector<bool>& used) const {
  if (kind == Kind::Atom) {
    used[var] = true;
    return;
  }
  for (const Formula& a : args) a.collect_vars(used);
}

namespace {

bool is_name_char(char c) {
  return !(c == '(' || c == ')' || c == ',' || c == '!' || c == '&' ||
           c == '|' || c == '>' || c == '=' || c == '#' ||
           c == ' ' || c == '\t' || c == '\r' || c == '\n');
}

class FormulaParser {
 public:
  FormulaParser(const std::string& text, const Scenario& s) : text_(text), s_(s) {}

  Formula parse() {
    Formula f = expr();
    skip_ws();
    if (pos_ < text_.size()) fail("trailing input");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw parse_error("parse error at position " + std::to_string(pos_ + 1) +
                      ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r' ||
            text_[pos_] == '\n'))
      pos_++;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c)
      fail(std::string("expected '") + c + "'");
    pos_++;
  }

  bool peek_is(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  Formula expr() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    switch (c) {
      case '!':
        pos_++;
        return connective(Formula::Kind::Not, 1, 1);
      case '&':
        pos_++;
        return connective(Formula::Kind::And, 1, -1);
      case '|':
        pos_++;
        return connective(Formula::Kind::Or, 1, -1);
      case '>':
        pos_++;
        return connective(Formula::Kind::Implies, 2, 2);
      case '=':
        pos_++;
        return connective(Formula::Kind::Iff, 2, 2);
      default:
        return atom();
    }
  }

  Formula connective(Formula::Kind k, int min_args, int max_args) {
    expect('(');
    Formula f;
    f.kind = k;
    f.args.push_back(expr());
    while (peek_is(',')) {
      pos_++;
      f.args.push_back(expr());
    }
    expect(')');
    int n = int(f.args.size());
    if (n < min_args || (max_args > 0 && n > max_args))
      fail("wrong arity for connective");
    return f;
  }

  Formula atom() {
    size_t start = pos_;
    while (pos_ < text_.size() && is_name_char(text_[pos_])) pos_++;
    if (pos_ == start) fail("expected formula");
    std::string name = text_.substr(start, pos_ - start);
    int ix = s_.var_index(name);
    if (ix < 0) {
      pos_ = start;
      fail("undeclared atom '" + name + "'");
    }
    Formula f;
    f.kind = Formula::Kind::Atom;
    f.var = ix;
    return f;
  }

  const std::string& text_;
  const Scenario& s_;
  size_t pos_ = 0;
};

void print_rec(const Formula& f, const Scenario& s, std::string& out) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      out += s.vars[f.var];
      return;
    case Formula::Kind::Not:
      out += '!';
      break;
    case Formula::Kind::And:
      out += '&';
      break;
    case Formula::Kind::Or:
      out += '|';
      break;
    case Formula::Kind::Implies:
      out += '>';
      break;
    case Formula::Kind::Iff:
      out += '=';
      break;
  }
  out += '(';
  for (size_t i = 0; i < f.args.size(); i++) {
    if (i) out += ',';
    print_rec(f.args[i], s, out);
  }
  out += ')';
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

const char* cell_name(Cell c) {
  switch (c) {
    case Cell::Context: return "context";
    case Cell::Decision: return "decision";
    case Cell::Outcome: return "outcome";
  }
  return "?";
}

}  // namespace

Formula parse_formula(const std::string& text, const Scenario& s) {
  return FormulaParser(text, s).parse();
}

std::string print_formula(const Formula& f, const Scenario& s) {
  std::string out;
  print_rec(f, s, out);
  return out;
}

int Scenario::var_index(const std::string& name) const {
  for (size_t i = 0; i < vars.size(); i++)
    if (vars[i] == name) return int(i);
  return -1;
}

std::vector<int> Scenario::cell_vars(Cell c) const {
  std::vector<int> out;
  for (size_t i = 0; i < vars.size(); i++)
    if (cells[i] == c) out.push_back(int(i));
  return out;
}

void Scenario::validate() const {
  if (vars.empty()) throw parse_error("scenario declares no variables");
  if (int(vars.size()) > kMaxVars)
    throw parse_error("scenario exceeds " + std::to_string(kMaxVars) + " variables");
  std::set<std::string> seen;
  for (const std::string& v : vars)
    if (!seen.insert(v).second)
      throw parse_error("duplicate variable '" + v + "'");

  for (const std::vector<int>& g : onehot_groups) {
    if (g.size() < 2) throw parse_error("one-hot group needs at least two variables");
    Cell c = cells[g[0]];
    for (int v : g)
      if (cells[v] != c)
        throw parse_error("one-hot group crosses partition cells (variable '" +
                          vars[v] + "')");
  }

  std::set<int> in_action;
  for (const ActionGroup& a : action_groups) {
    if (a.indicators.empty()) throw parse_error("empty action group");
    for (int v : a.indicators) {
      if (cells[v] != Cell::Decision)
        throw parse_error("action variable '" + vars[v] + "' is not a decision");
      if (!in_action.insert(v).second)
        throw parse_error("variable '" + vars[v] + "' appears in two action groups");
    }
    if (!a.boolean()) {
      bool found = false;
      for (const std::vector<int>& g : onehot_groups)
        if (g == a.indicators) found = true;
      if (!found)
        throw parse_error("multi-indicator action group must be a declared one-hot group");
    }
  }
}

Scenario Scenario::parse(const std::string& text) {
  Scenario s;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto err = [&](const std::string& what) {
    return parse_error("scenario line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(is, line)) {
    lineno++;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::vector<std::string> toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string& key = toks[0];
    if (key == "scenario") {
      if (toks.size() != 2) throw err("expected: scenario NAME");
      s.name = toks[1];
    } else if (key == "context" || key == "decision" || key == "outcome") {
      Cell c = key == "context" ? Cell::Context
             : key == "decision" ? Cell::Decision : Cell::Outcome;
      if (toks.size() < 2) throw err("expected at least one variable name");
      for (size_t i = 1; i < toks.size(); i++) {
        if (s.var_index(toks[i]) >= 0) throw err("duplicate variable '" + toks[i] + "'");
        s.vars.push_back(toks[i]);
        s.cells.push_back(c);
      }
    } else if (key == "onehot" || key == "action") {
      std::vector<int> g;
      for (size_t i = 1; i < toks.size(); i++) {
        int ix = s.var_index(toks[i]);
        if (ix < 0) throw err("undeclared variable '" + toks[i] + "'");
        g.push_back(ix);
      }
      if (key == "onehot") {
        if (g.size() < 2) throw err("one-hot group needs at least two variables");
        s.onehot_groups.push_back(g);
      } else {
        if (g.empty()) throw err("action needs at least one variable");
        s.action_groups.push_back(ActionGroup{g});
      }
    } else if (key == "constraint") {
      size_t at = line.find("constraint");
      std::string body = line.substr(at + 10);
      size_t b = body.find_first_not_of(" \t");
      if (b == std::string::npos) throw err("empty constraint");
      size_t e = body.find_last_not_of(" \t");
      s.constraint_texts.push_back(body.substr(b, e - b + 1));
    } else {
      throw err("unknown directive '" + key + "'");
    }
  }
  for (const std::string& c : s.constraint_texts) {
    try {
      s.constraints.push_back(parse_formula(c, s));
    } catch (const Error& e) {
      throw parse_error("in constraint '" + c + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Scenario::to_text() const {
  std::ostringstream out;
  if (!name.empty()) out << "scenario " << name << "\n";
  // Keep declaration order: emit a new directive whenever the cell changes.
  for (size_t i = 0; i < vars.size(); i++) {
    if (i == 0 || cells[i] != cells[i - 1]) {
      if (i) out << "\n";
      out << cell_name(cells[i]);
    }
    out << " " << vars[i];
  }
  out << "\n";
  for (const std::vector<int>& g : onehot_groups) {
    out << "onehot";
    for (int v : g) out << " " << vars[v];
    out << "\n";
  }
  for (const ActionGroup& a : action_groups) {
    out << "action";
    for (int v : a.indicators) out << " " << vars[v];
    out << "\n";
  }
  for (const std::string& c : constraint_texts) out << "constraint " << c << "\n";
  return out.str();
}

}  // namespace pblame

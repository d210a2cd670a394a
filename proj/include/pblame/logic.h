#ifndef PBLAME_LOGIC_H
#define PBLAME_LOGIC_H

#include <iosfwd>
#include <string>
#include <vector>

#include "pblame/common.h"

namespace pblame {

// Propositional formula over scenario variables. Immutable after parsing.
// Concrete syntax is prefix: atoms, !(f), &(f,...), |(f,...), >(f,g), =(f,g).
struct Formula {
  enum class Kind { Atom, Not, And, Or, Implies, Iff };
  Kind kind = Kind::Atom;
  int var = -1;  // Atom only: index into Scenario::vars
  std::vector<Formula> args;

  bool eval(Bits w) const;
  void collect_vars(std::vector<bool>& used) const;
};

enum class Cell { Context, Decision, Outcome };

// An action group is the range of one HK action variable: either a one-hot
// group of indicator decisions (do(a) pins one true, siblings false), or a
// single boolean decision whose two actions are the variable and its negation.
struct ActionGroup {
  std::vector<int> indicators;
  bool boolean() const { return indicators.size() == 1; }
};

// A compiled scenario: variable declarations partitioned into context,
// decision, and outcome cells, one-hot groups, action groups, constraints.
class Scenario {
 public:
  std::string name;
  std::vector<std::string> vars;  // declaration order
  std::vector<Cell> cells;        // per variable
  std::vector<std::vector<int>> onehot_groups;
  std::vector<ActionGroup> action_groups;
  std::vector<std::string> constraint_texts;
  std::vector<Formula> constraints;

  int num_vars() const { return int(vars.size()); }
  int var_index(const std::string& name) const;  // -1 if unknown
  std::vector<int> cell_vars(Cell c) const;

  // Full validation of the partition, group, and constraint invariants.
  void validate() const;

  static Scenario parse(const std::string& text);
  static Scenario load(const std::string& path);
  std::string to_text() const;
};

// Parses the prefix grammar. Errors carry 1-based character positions.
Formula parse_formula(const std::string& text, const Scenario& s);
std::string print_formula(const Formula& f, const Scenario& s);

}  // namespace pblame

#endif

#ifndef PBLAME_UTILITY_H
#define PBLAME_UTILITY_H

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pblame/common.h"
#include "pblame/logic.h"
#include "pblame/psdd.h"

namespace pblame {

struct UtilitySpec {
  bool context_relative = false;
  bool linear = true;
  double lambda = 1e-3;
};

// Normalized utility over outcome assignments, optionally per context.
// Linear form: dot product of per-variable weights with outcome indicators.
// Tabular form: one value per complete outcome assignment. Learned weights
// are stored post-normalization (max support utility 1); loading enforces
// nonnegativity only, so shifted utilities stay representable.
class UtilityFunction {
 public:
  bool context_relative = false;
  bool linear = true;
  std::vector<int> outcome_vars;  // scenario indices, declaration order
  std::vector<int> context_vars;  // filled when context_relative
  // Keyed by context bits masked to context_vars; single key 0 otherwise.
  std::map<Bits, std::vector<double>> weights;   // linear, per outcome var
  std::map<Bits, std::map<Bits, double>> table;  // tabular, per outcome bits
  std::vector<Bits> uniform_contexts;  // fell back to uniform weights

  // Reads the outcome (and, when context-relative, context) bits out of a
  // complete assignment.
  double eval_world(Bits w) const;
  void validate() const;

  std::string to_text(const Scenario& s) const;
  void save(const std::string& path, const Scenario& s) const;
  static UtilityFunction parse(const std::string& text, const Scenario& s);
  static UtilityFunction load(const std::string& path, const Scenario& s);
};

// `context` must be supplied exactly when u is context-relative; bits are at
// the original variable positions in both arguments.
double eval_utility(const UtilityFunction& u, Bits outcome,
                    const std::optional<Bits>& context = std::nullopt);

// Fits weights so that Pr(D|X) tracks the expected utility of D in X over
// the support, by L2-regularized nonnegative least squares; one regression
// per context when context-relative, pooled otherwise. Degenerate systems
// fall back to uniform weights and are flagged on the result.
UtilityFunction learn_utility(const Psdd& p, const Scenario& s,
                              const UtilitySpec& spec);

// min ||F w - y||^2 + lambda ||w||^2 subject to w >= 0, for a row-major F.
// Active-set iteration, 1e-10 objective tolerance, 10k iteration cap.
std::vector<double> nnls_ridge(const std::vector<double>& F, size_t rows,
                               size_t cols, const std::vector<double>& y,
                               double lambda);

}  // namespace pblame

#endif

#ifndef PBLAME_DATA_H
#define PBLAME_DATA_H

#include <string>
#include <vector>

#include "pblame/common.h"
#include "pblame/logic.h"

namespace pblame {

// Complete-assignment dataset. CSV on disk: header of variable names in
// declaration order, rows of 0/1, optionally a trailing real-valued
// `utility` column.
struct Dataset {
  std::vector<std::string> header;
  std::vector<Bits> rows;
  std::vector<double> utilities;  // parallel to rows when has_utilities
  bool has_utilities = false;

  size_t size() const { return rows.size(); }
  static Dataset load(const std::string& path, const Scenario& s);
  static Dataset parse(const std::string& text, const Scenario& s);
  void save(const std::string& path) const;
  std::string to_text() const;
};

// Configuration of the staged diagnosis process behind the regenerated
// lung-cancer data. These are artifact configuration constants, not sourced
// clinical values; the fixture tests treat them as ground truth.
struct LungParams {
  double prevalence = 0.46;        // mediastinal metastases prior
  double ct_sens = 0.82;           // CT scan sensitivity
  double ct_spec = 0.89;           // CT scan specificity
  double m_sens = 0.82;            // mediastinoscopy sensitivity
  double m_spec = 0.98;            // mediastinoscopy specificity
  double diag_survival = 0.995;    // surviving the mediastinoscopy itself
  double surv_thor_mm = 0.30;      // thoractomy survival with metastases
  double surv_thor_clear = 0.95;   // thoractomy survival without
  double surv_rad_mm = 0.70;       // radiation survival with metastases
  double surv_rad_clear = 0.85;    // radiation survival without
  double no_test_thor = 0.98;      // thoractomy rate when no test was run
};

// Staged generator: strategy recommends CT, then mediastinoscopy iff the CT
// came back positive (always, if no CT was run); each decision follows the
// recommendation with probability `adherence`. Test results, diagnostic
// survival, forced treatment, and treatment survival follow LungParams.
Dataset generate_lung_cancer(const Scenario& s, size_t n, uint64_t seed,
                             double adherence, const LungParams& p = {});

// Hand-specified stand-in distributions for pipeline tests.
Dataset generate_trolley_standin(const Scenario& s, size_t n, uint64_t seed);
Dataset generate_teamwork_standin(const Scenario& s, size_t n, uint64_t seed);

// The three shipped scenario descriptions. Names: lung_cancer, teamwork,
// trolley. The fixtures/ copies must stay byte-identical to these.
const std::string& builtin_scenario_text(const std::string& name);
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

}  // namespace pblame

#endif

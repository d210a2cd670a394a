#include "pblame/data.h"

#include <array>
#include <fstream>
#include <sstream>

namespace pblame {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string group_label(const Scenario& s, const std::vector<int>& g) {
  std::string out = "{";
  for (size_t i = 0; i < g.size(); i++) {
    if (i) out += ", ";
    out += s.vars[g[i]];
  }
  return out + "}";
}

}  // namespace

Dataset Dataset::parse(const std::string& text, const Scenario& s) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw parse_error("empty dataset");
  std::vector<std::string> head = split_csv(line);
  size_t nv = s.vars.size();
  d.has_utilities = head.size() == nv + 1 && head.back() == "utility";
  if (head.size() != nv && !d.has_utilities)
    throw parse_error("dataset header does not match the scenario variables");
  for (size_t i = 0; i < nv; i++)
    if (head[i] != s.vars[i])
      throw parse_error("dataset header mismatch at column " +
                        std::to_string(i + 1) + ": expected '" + s.vars[i] +
                        "', got '" + head[i] + "'");
  d.header = std::vector<std::string>(s.vars);

  size_t rowno = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rowno++;
    std::vector<std::string> cells = split_csv(line);
    if (cells.size() != head.size())
      throw parse_error("row " + std::to_string(rowno) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(head.size()));
    Bits b = 0;
    for (size_t i = 0; i < nv; i++) {
      if (cells[i] == "1")
        b = set_bit(b, int(i), true);
      else if (cells[i] != "0")
        throw parse_error("row " + std::to_string(rowno) + ", column '" +
                          s.vars[i] + "': expected 0 or 1, got '" + cells[i] + "'");
    }
    for (const std::vector<int>& g : s.onehot_groups) {
      int set = 0;
      for (int v : g) set += bit(b, v);
      if (set != 1)
        throw parse_error("row " + std::to_string(rowno) +
                          " violates one-hot group " + group_label(s, g));
    }
    d.rows.push_back(b);
    if (d.has_utilities) {
      try {
        size_t used = 0;
        double u = std::stod(cells[nv], &used);
        if (used != cells[nv].size()) throw std::invalid_argument("");
        d.utilities.push_back(u);
      } catch (const std::exception&) {
        throw parse_error("row " + std::to_string(rowno) +
                          ": bad utility value '" + cells[nv] + "'");
      }
    }
  }
  return d;
}

Dataset Dataset::load(const std::string& path, const Scenario& s) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open dataset '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), s);
}

std::string Dataset::to_text() const {
  std::ostringstream out;
  for (size_t i = 0; i < header.size(); i++) {
    if (i) out << ",";
    out << header[i];
  }
  if (has_utilities) out << ",utility";
  out << "\n";
  for (size_t r = 0; r < rows.size(); r++) {
    for (size_t i = 0; i < header.size(); i++) {
      if (i) out << ",";
      out << (bit(rows[r], int(i)) ? "1" : "0");
    }
    if (has_utilities) out << "," << format_double(utilities[r]);
    out << "\n";
  }
  return out.str();
}

void Dataset::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write dataset '" + path + "'");
  out << to_text();
}

namespace {

const char* kLungText = R"(scenario lung_cancer
context MM CT_pos CT_neg CT_na M_pos M_neg M_na
decision CT M
outcome T S_DP S_T
onehot CT_pos CT_neg CT_na
onehot M_pos M_neg M_na
action CT
action M
constraint =(|(CT_pos,CT_neg),CT)
constraint =(CT_na,!(CT))
constraint =(|(M_pos,M_neg),M)
constraint =(M_na,!(M))
constraint >(M_neg,T)
constraint >(M_pos,!(T))
constraint >(&(CT_neg,!(M)),T)
constraint >(&(CT_pos,!(M)),!(T))
constraint >(!(S_DP),M)
constraint !(&(CT_pos,CT_neg))
constraint !(&(M_pos,M_neg))
constraint >(!(S_DP),!(S_T))
)";

const char* kTeamworkText = R"(scenario teamwork
context LV_1 LV_2 LV_3 LV_4 LV_5 LV_6
decision O L U S R
outcome T_1 T_2 T_3 T_4 T_5 Q_1 Q_2 Q_3 Q_4 Q_5
onehot LV_1 LV_2 LV_3 LV_4 LV_5 LV_6
onehot T_1 T_2 T_3 T_4 T_5
onehot Q_1 Q_2 Q_3 Q_4 Q_5
action O
action L
action U
action S
action R
constraint |(LV_1,LV_2,LV_3,LV_4,LV_5,LV_6)
constraint >(LV_1,!(|(LV_2,LV_3,LV_4,LV_5,LV_6)))
constraint >(LV_2,!(|(LV_1,LV_3,LV_4,LV_5,LV_6)))
constraint >(LV_3,!(|(LV_1,LV_2,LV_4,LV_5,LV_6)))
constraint >(LV_4,!(|(LV_1,LV_2,LV_3,LV_5,LV_6)))
constraint >(LV_5,!(|(LV_1,LV_2,LV_3,LV_4,LV_6)))
constraint >(LV_6,!(|(LV_1,LV_2,LV_3,LV_4,LV_5)))
constraint |(T_1,T_2,T_3,T_4,T_5)
constraint >(T_1,!(|(T_2,T_3,T_4,T_5)))
constraint >(T_2,!(|(T_1,T_3,T_4,T_5)))
constraint >(T_3,!(|(T_1,T_2,T_4,T_5)))
constraint >(T_4,!(|(T_1,T_2,T_3,T_5)))
constraint >(T_5,!(|(T_1,T_2,T_3,T_4)))
constraint |(Q_1,Q_2,Q_3,Q_4,Q_5)
constraint >(Q_1,!(|(Q_2,Q_3,Q_4,Q_5)))
constraint >(Q_2,!(|(Q_1,Q_3,Q_4,Q_5)))
constraint >(Q_3,!(|(Q_1,Q_2,Q_4,Q_5)))
constraint >(Q_4,!(|(Q_1,Q_2,Q_3,Q_5)))
constraint >(Q_5,!(|(Q_1,Q_2,Q_3,Q_4)))
)";

const char* kTrolleyText = R"(scenario trolley
context A_1 A_5 A_100 A_Pet A_BF A_Fa B_1 B_5 B_100 B_Pet B_BF B_Fa
decision I F P S
outcome L_1 L_5 L_100 L_Pet L_BF L_Fa L_Y
onehot A_1 A_5 A_100 A_Pet A_BF A_Fa
onehot B_1 B_5 B_100 B_Pet B_BF B_Fa
onehot I F P S
action I F P S
constraint |(A_1,A_5,A_100,A_Pet,A_BF,A_Fa)
constraint |(B_1,B_5,B_100,B_Pet,B_BF,B_Fa)
constraint !(&(A_1,B_1))
constraint !(&(A_5,B_5))
constraint !(&(A_100,B_100))
constraint !(&(A_Pet,B_Pet))
constraint !(&(A_BF,B_BF))
constraint !(&(A_Fa,B_Fa))
constraint >(A_1,!(|(A_5,A_100,A_Pet,A_BF,A_Fa)))
constraint >(A_5,!(|(A_1,A_100,A_Pet,A_BF,A_Fa)))
constraint >(A_100,!(|(A_1,A_5,A_Pet,A_BF,A_Fa)))
constraint >(A_Pet,!(|(A_1,A_5,A_100,A_BF,A_Fa)))
constraint >(A_BF,!(|(A_1,A_5,A_100,A_Pet,A_Fa)))
constraint >(A_Fa,!(|(A_1,A_5,A_100,A_Pet,A_BF)))
constraint >(B_1,!(|(B_5,B_100,B_Pet,B_BF,B_Fa)))
constraint >(B_5,!(|(B_1,B_100,B_Pet,B_BF,B_Fa)))
constraint >(B_100,!(|(B_1,B_5,B_Pet,B_BF,B_Fa)))
constraint >(B_Pet,!(|(B_1,B_5,B_100,B_BF,B_Fa)))
constraint >(B_BF,!(|(B_1,B_5,B_100,B_Pet,B_Fa)))
constraint >(B_Fa,!(|(B_1,B_5,B_100,B_Pet,B_BF)))
constraint |(I,F,P,S)
constraint >(I,!(|(F,P,S)))
constraint >(F,!(|(I,P,S)))
constraint >(P,!(|(I,F,S)))
constraint >(S,!(|(I,F,P)))
constraint >(&(A_1,I),!(L_1))
constraint >(&(A_5,I),!(L_5))
constraint >(&(A_100,I),!(L_100))
constraint >(&(A_Pet,I),!(L_Pet))
constraint >(&(A_BF,I),!(L_BF))
constraint >(&(A_Fa,I),!(L_Fa))
constraint >(&(B_1,I),L_1)
constraint >(&(B_5,I),L_5)
constraint >(&(B_100,I),L_100)
constraint >(&(B_Pet,I),L_Pet)
constraint >(&(B_BF,I),L_BF)
constraint >(&(B_Fa,I),L_Fa)
constraint >(L_1,|(A_1,B_1))
constraint >(L_5,|(A_5,B_5))
constraint >(L_100,|(A_100,B_100))
constraint >(L_Pet,|(A_Pet,B_Pet))
constraint >(L_BF,|(A_BF,B_BF))
constraint >(L_Fa,|(A_Fa,B_Fa))
constraint >(&(S,|(A_1,B_1)),L_1)
constraint >(&(S,|(A_5,B_5)),L_5)
constraint >(&(S,|(A_100,B_100)),L_100)
constraint >(&(S,|(A_Pet,B_Pet)),L_Pet)
constraint >(&(S,|(A_BF,B_BF)),L_BF)
constraint >(&(S,|(A_Fa,B_Fa)),L_Fa)
constraint =(L_Y,!(S))
constraint >(&(L_1,|(P,F)),!(|(L_5,L_100,L_Pet,L_BF,L_Fa)))
constraint >(&(L_5,|(P,F)),!(|(L_1,L_100,L_Pet,L_BF,L_Fa)))
constraint >(&(L_100,|(P,F)),!(|(L_1,L_5,L_Pet,L_BF,L_Fa)))
constraint >(&(L_Pet,|(P,F)),!(|(L_1,L_5,L_100,L_BF,L_Fa)))
constraint >(&(L_BF,|(P,F)),!(|(L_1,L_5,L_100,L_Pet,L_Fa)))
constraint >(&(L_Fa,|(P,F)),!(|(L_1,L_5,L_100,L_Pet,L_BF)))
constraint >(&(!(L_1),|(P,F),|(A_1,B_1)),|(L_5,L_100,L_Pet,L_BF,L_Fa))
constraint >(&(!(L_5),|(P,F),|(A_5,B_5)),|(L_1,L_100,L_Pet,L_BF,L_Fa))
constraint >(&(!(L_100),|(P,F),|(A_100,B_100)),|(L_1,L_5,L_Pet,L_BF,L_Fa))
constraint >(&(!(L_Pet),|(P,F),|(A_Pet,B_Pet)),|(L_1,L_5,L_100,L_BF,L_Fa))
constraint >(&(!(L_BF),|(P,F),|(A_BF,B_BF)),|(L_1,L_5,L_100,L_Pet,L_Fa))
constraint >(&(!(L_Fa),|(P,F),|(A_Fa,B_Fa)),|(L_1,L_5,L_100,L_Pet,L_BF))
)";

}  // namespace

const std::string& builtin_scenario_text(const std::string& name) {
  static const std::string lung = kLungText;
  static const std::string teamwork = kTeamworkText;
  static const std::string trolley = kTrolleyText;
  if (name == "lung_cancer") return lung;
  if (name == "teamwork") return teamwork;
  if (name == "trolley") return trolley;
  throw query_error("unknown builtin scenario '" + name +
                    "' (known: lung_cancer, teamwork, trolley)");
}

Scenario builtin_scenario(const std::string& name) {
  return Scenario::parse(builtin_scenario_text(name));
}

std::vector<std::string> builtin_scenario_names() {
  return {"lung_cancer", "teamwork", "trolley"};
}

Dataset generate_lung_cancer(const Scenario& s, size_t n, uint64_t seed,
                             double adherence, const LungParams& p) {
  if (!(adherence > 0) || adherence > 1)
    throw query_error("adherence must lie in (0,1]");
  for (double q : {p.prevalence, p.ct_sens, p.ct_spec, p.m_sens, p.m_spec,
                   p.diag_survival, p.surv_thor_mm, p.surv_thor_clear,
                   p.surv_rad_mm, p.surv_rad_clear, p.no_test_thor})
    if (!(q >= 0) || q > 1)
      throw query_error("invalid probabilities: every rate must lie in [0,1]");
  std::mt19937_64 rng(seed);
  auto u = [&] { return next_unit(rng); };
  int MM = s.var_index("MM"), CTp = s.var_index("CT_pos"),
      CTn = s.var_index("CT_neg"), CTna = s.var_index("CT_na"),
      Mp = s.var_index("M_pos"), Mn = s.var_index("M_neg"),
      Mna = s.var_index("M_na"), CT = s.var_index("CT"), M = s.var_index("M"),
      T = s.var_index("T"), SDP = s.var_index("S_DP"), ST = s.var_index("S_T");
  if (MM < 0 || CTp < 0 || ST < 0)
    throw query_error("scenario is not the lung_cancer scenario");
  Dataset d;
  d.header = s.vars;
  d.rows.reserve(n);
  for (size_t i = 0; i < n; i++) {
    Bits b = 0;
    bool mm = u() < p.prevalence;
    b = set_bit(b, MM, mm);

    bool ct = u() < adherence;  // the strategy always recommends the CT scan
    b = set_bit(b, CT, ct);
    bool ct_pos = false;
    if (ct) {
      ct_pos = mm ? u() < p.ct_sens : u() >= p.ct_spec;
      b = set_bit(b, CTp, ct_pos);
      b = set_bit(b, CTn, !ct_pos);
    } else {
      b = set_bit(b, CTna, true);
    }

    bool rec_m = ct ? ct_pos : true;  // no scan: test before treating
    bool m = (u() < adherence) == rec_m;
    b = set_bit(b, M, m);
    bool m_pos = false;
    if (m) {
      m_pos = mm ? u() < p.m_sens : u() >= p.m_spec;
      b = set_bit(b, Mp, m_pos);
      b = set_bit(b, Mn, !m_pos);
    } else {
      b = set_bit(b, Mna, true);
    }

    bool sdp = m ? u() < p.diag_survival : true;
    b = set_bit(b, SDP, sdp);

    bool t;
    if (m)
      t = !m_pos;  // negative result: no metastases found, so operate
    else if (ct)
      t = !ct_pos;
    else
      t = u() < p.no_test_thor;
    b = set_bit(b, T, t);

    bool st = false;
    if (sdp) {
      double surv = t ? (mm ? p.surv_thor_mm : p.surv_thor_clear)
                      : (mm ? p.surv_rad_mm : p.surv_rad_clear);
      st = u() < surv;
    }
    b = set_bit(b, ST, st);
    d.rows.push_back(b);
  }
  return d;
}

Dataset generate_trolley_standin(const Scenario& s, size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&] { return next_unit(rng); };
  int I = s.var_index("I"), F = s.var_index("F"), P = s.var_index("P"),
      S = s.var_index("S"), LY = s.var_index("L_Y");
  std::array<int, 6> A{}, B{}, L{};
  const char* chars[6] = {"1", "5", "100", "Pet", "BF", "Fa"};
  for (int c = 0; c < 6; c++) {
    A[c] = s.var_index("A_" + std::string(chars[c]));
    B[c] = s.var_index("B_" + std::string(chars[c]));
    L[c] = s.var_index("L_" + std::string(chars[c]));
  }
  if (I < 0 || LY < 0 || A[0] < 0)
    throw query_error("scenario is not the trolley scenario");
  // how strongly the agent protects whoever stands on the main track
  const double protect[6] = {0.3, 0.8, 2.0, 0.1, 3.0, 4.0};
  Dataset d;
  d.header = s.vars;
  d.rows.reserve(n);
  for (size_t r = 0; r < n; r++) {
    int a = int(u() * 6);
    if (a > 5) a = 5;
    int b_off = int(u() * 5);
    if (b_off > 4) b_off = 4;
    int b = (a + 1 + b_off) % 6;

    double w[4] = {0.5, 3.0, 1.0, protect[a]};  // I F P S
    double total = w[0] + w[1] + w[2] + w[3];
    double pick = u() * total;
    int dec = 0;
    while (dec < 3 && pick >= w[dec]) pick -= w[dec], dec++;

    Bits row = 0;
    row = set_bit(row, A[a], true);
    row = set_bit(row, B[b], true);
    row = set_bit(row, dec == 0 ? I : dec == 1 ? F : dec == 2 ? P : S, true);
    bool la, lb;
    switch (dec) {
      case 0: la = false; lb = true; break;           // inaction
      case 1: la = u() < 0.6; lb = !la; break;        // the switch works 0.6
      case 2: la = u() < 0.8; lb = !la; break;        // the push works 0.8
      default: la = true; lb = true; break;           // self-sacrifice
    }
    row = set_bit(row, L[a], la);
    row = set_bit(row, L[b], lb);
    row = set_bit(row, LY, dec != 3);
    d.rows.push_back(row);
  }
  return d;
}

Dataset generate_teamwork_standin(const Scenario& s, size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&] { return next_unit(rng); };
  std::array<int, 6> LV{};
  std::array<int, 5> T{}, Q{};
  for (int i = 0; i < 6; i++) LV[i] = s.var_index("LV_" + std::to_string(i + 1));
  for (int i = 0; i < 5; i++) {
    T[i] = s.var_index("T_" + std::to_string(i + 1));
    Q[i] = s.var_index("Q_" + std::to_string(i + 1));
  }
  int O = s.var_index("O"), L = s.var_index("L"), U = s.var_index("U"),
      S = s.var_index("S"), R = s.var_index("R");
  if (LV[0] < 0 || O < 0 || Q[4] < 0)
    throw query_error("scenario is not the teamwork scenario");
  Dataset d;
  d.header = s.vars;
  d.rows.reserve(n);
  for (size_t r = 0; r < n; r++) {
    int lv = int(u() * 6);
    if (lv > 5) lv = 5;
    Bits row = 0;
    row = set_bit(row, LV[lv], true);
    double base[5] = {0.2, 0.5, 0.4, 0.6, 0.3};  // O L U S R
    int dvs[5] = {O, L, U, S, R};
    bool dv[5];
    for (int k = 0; k < 5; k++) {
      dv[k] = u() < base[k] + 0.04 * lv;
      row = set_bit(row, dvs[k], dv[k]);
    }
    // timeliness peaks higher with load balancing and uniform splitting
    double t_peak = 1.0 + 1.2 * dv[1] + 0.8 * dv[2] + 0.3 * lv / 5.0;
    // quality peaks higher with skill-based allocation, lower with random
    double q_peak = 1.5 + 1.8 * dv[3] - 0.8 * dv[4] + 0.5 * dv[1];
    auto pick5 = [&](double peak) {
      double w[5], tot = 0;
      for (int k = 0; k < 5; k++) {
        double dist = k - peak;
        w[k] = 1.0 / (1.0 + dist * dist);
        tot += w[k];
      }
      double x = u() * tot;
      int k = 0;
      while (k < 4 && x >= w[k]) x -= w[k], k++;
      return k;
    };
    row = set_bit(row, T[pick5(t_peak)], true);
    row = set_bit(row, Q[pick5(q_peak)], true);
    d.rows.push_back(row);
  }
  return d;
}

}  // namespace pblame

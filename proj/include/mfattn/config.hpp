#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mfattn/diagnostics.hpp"
#include "mfattn/dynamics.hpp"
#include "mfattn/error.hpp"
#include "mfattn/jko.hpp"
#include "mfattn/linalg.hpp"
#include "mfattn/weights.hpp"

namespace mfattn {

/// Scenario configuration: flat key-value text with bracketed sections.
/// Unknown keys are rejected; every value is validated at parse time.
struct ScenarioConfig {
  // Problem size and grid.
  int n = 64;
  int d = 3;
  std::vector<int> h_list{1};
  double dt = 0.01;
  double t_final = 1.0;
  int n_mc = 2;
  std::uint64_t seed = 1;
  int record_stride = 0;  // 0 -> max(1, floor(0.1/dt))
  std::string update_order = "weights_first";
  bool g2_weighted = false;  // which G^2 series headlines reports and fits
  std::string out_dir = "out";
  int threads = 0;  // 0 -> hardware
  double g2_avg_t0 = -1.0, g2_avg_t1 = -1.0;  // -1 -> full [0, T]
  std::string ledger_dissipation = "pairing";
  std::string dissipation_sign = "auto";  // auto | plus | minus

  // [weights]
  std::string weights_kind = "frozen";  // frozen | ou | oscillating | custom
  std::string weights_f = "identity";   // identity | zero | identity*s | diag:... | dense:...
  double sigma2 = 0.0;
  bool phase_spread = true;
  std::string weights_init = "gaussian";  // zero | gaussian | target
  double weights_init_scale = 1.0;
  std::string schedule_file;

  // [jko]
  std::vector<double> jko_tau_list{0.05};
  int jko_inner_iters = 50;
  double jko_inner_lr = 0.0;
  std::string jko_coupling = "identity";       // identity | assignment
  std::string jko_mobility = "constant";       // constant | softmax
  double jko_ref_dt = 1e-4;

  // [gronwall]
  std::vector<double> gronwall_eta_list{1e-3, 1e-2, 1e-1};
  int gronwall_w2_stride = 10;  // grid stride between W2 evaluations

  // [stability]
  std::vector<int> stability_h_list{1, 4, 16, 64};
  int stability_reference_h = 256;

  int resolved_record_stride() const {
    return record_stride > 0 ? record_stride : std::max(1, static_cast<int>(0.1 / dt));
  }

  UpdateOrder parsed_update_order() const {
    return update_order == "tokens_first" ? UpdateOrder::TokensFirst
                                          : UpdateOrder::WeightsFirst;
  }

  DissipationMode parsed_dissipation_mode() const {
    if (ledger_dissipation == "g2_unweighted") return DissipationMode::G2Unweighted;
    if (ledger_dissipation == "g2_weighted") return DissipationMode::G2Weighted;
    return DissipationMode::Pairing;
  }

  int parsed_dissipation_sign() const {
    if (dissipation_sign == "plus") return +1;
    if (dissipation_sign == "minus") return -1;
    return 0;  // calibrated
  }

  SymMatrix parse_f_matrix() const;
  WeightProcessSpec weight_spec() const;
  JkoConfig jko_config(double tau) const;

  std::string echo() const;
  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

inline double to_double(const std::string& v, const std::string& key, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("value of '" + key + "' is not a number: '" + v + "'", line);
  }
}

inline long long to_int(const std::string& v, const std::string& key, int line) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("value of '" + key + "' is not an integer: '" + v + "'", line);
  }
}

inline bool to_bool(const std::string& v, const std::string& key, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("value of '" + key + "' is not a boolean: '" + v + "'", line);
}

}  // namespace detail

inline SymMatrix ScenarioConfig::parse_f_matrix() const {
  const std::string& f = weights_f;
  if (f == "identity") return SymMatrix::identity(d);
  if (f == "zero") return SymMatrix::zero(d);
  if (f.rfind("identity*", 0) == 0)
    return SymMatrix::identity(d, detail::to_double(f.substr(9), "weights.F", 0));
  if (f.rfind("diag:", 0) == 0) {
    const auto parts = detail::split(f.substr(5), ',');
    if (static_cast<int>(parts.size()) != d)
      throw ConfigError("weights.F diag needs exactly d entries");
    SymMatrix m(d);
    for (int i = 0; i < d; ++i) m(i, i) = detail::to_double(parts[i], "weights.F", 0);
    return m;
  }
  if (f.rfind("dense:", 0) == 0) {
    const auto parts = detail::split(f.substr(6), ',');
    if (static_cast<int>(parts.size()) != d * d)
      throw ConfigError("weights.F dense needs exactly d*d entries");
    SymMatrix m(d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        m(i, j) = detail::to_double(parts[static_cast<std::size_t>(i) * d + j], "weights.F", 0);
    if (!m.is_symmetric(1e-9)) throw ConfigError("weights.F dense matrix is not symmetric");
    return m;
  }
  throw ConfigError("unrecognized weights.F spec: '" + f + "'");
}

inline WeightProcessSpec ScenarioConfig::weight_spec() const {
  WeightProcessSpec spec;
  if (weights_kind == "frozen")
    spec.kind = WeightKind::Frozen;
  else if (weights_kind == "ou")
    spec.kind = WeightKind::OU;
  else if (weights_kind == "oscillating")
    spec.kind = WeightKind::Oscillating;
  else if (weights_kind == "custom")
    spec.kind = WeightKind::CustomSchedule;
  else
    throw ConfigError("unrecognized weights.kind: '" + weights_kind + "'");
  if (spec.kind == WeightKind::OU || spec.kind == WeightKind::CustomSchedule)
    spec.target = parse_f_matrix();
  spec.sigma2 = spec.kind == WeightKind::Frozen ? 0.0 : sigma2;
  spec.phase_spread = phase_spread;
  if (weights_init == "zero")
    spec.init = WeightInit::Zero;
  else if (weights_init == "gaussian")
    spec.init = WeightInit::Gaussian;
  else if (weights_init == "target")
    spec.init = WeightInit::Target;
  else
    throw ConfigError("unrecognized weights.init: '" + weights_init + "'");
  spec.init_scale = weights_init_scale;
  if (spec.kind == WeightKind::CustomSchedule) {
    if (schedule_file.empty())
      throw ConfigError("weights.kind = custom requires weights.schedule_file");
    std::ifstream in(schedule_file);
    if (!in) throw ConfigError("cannot open schedule file: " + schedule_file);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = detail::trim(line);
      if (line.empty() || line[0] == '#') continue;
      const auto parts = detail::split(line, ',');
      if (static_cast<int>(parts.size()) != 1 + d * d)
        throw ConfigError("schedule row needs 1 + d*d values", lineno);
      spec.schedule.times.push_back(detail::to_double(parts[0], "schedule.t", lineno));
      SymMatrix m(d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          m(i, j) = detail::to_double(parts[1 + static_cast<std::size_t>(i) * d + j],
                                      "schedule.value", lineno);
      if (!m.is_symmetric(1e-9)) throw ConfigError("schedule matrix is not symmetric", lineno);
      spec.schedule.values.push_back(std::move(m));
    }
    if (spec.schedule.times.empty()) throw ConfigError("schedule file is empty");
  }
  return spec;
}

inline JkoConfig ScenarioConfig::jko_config(double tau) const {
  JkoConfig cfg;
  cfg.tau = tau;
  cfg.inner_iters = jko_inner_iters;
  cfg.inner_lr = jko_inner_lr;
  cfg.coupling = jko_coupling == "assignment" ? JkoCoupling::Assignment : JkoCoupling::Identity;
  cfg.mobility_mode = jko_mobility == "softmax" ? MobilityMode::Softmax : MobilityMode::Constant;
  return cfg;
}

inline void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid value for '" + field + "': " + why);
  };
  if (n < 1) fail("n", "need at least one token");
  if (d < 2) fail("d", "need dimension >= 2");
  if (h_list.empty()) fail("H_list", "need at least one head count");
  for (int h : h_list)
    if (h < 1) fail("H_list", "head counts must be positive");
  if (dt <= 0.0) fail("dt", "must be positive");
  if (t_final <= 0.0) fail("T", "must be positive");
  if (dt > t_final) fail("dt", "must not exceed T");
  if (n_mc < 2) fail("N_MC", "need at least 2 trajectories");
  if (record_stride < 0) fail("record_stride", "must be >= 1 (or 0 for auto)");
  if (update_order != "weights_first" && update_order != "tokens_first")
    fail("update_order", "must be weights_first or tokens_first");
  if (sigma2 < 0.0) fail("weights.sigma2", "must be nonnegative");
  if (weights_init_scale < 0.0) fail("weights.init_scale", "must be nonnegative");
  if (ledger_dissipation != "pairing" && ledger_dissipation != "g2_unweighted" &&
      ledger_dissipation != "g2_weighted")
    fail("ledger_dissipation", "must be pairing, g2_unweighted or g2_weighted");
  if (dissipation_sign != "auto" && dissipation_sign != "plus" && dissipation_sign != "minus")
    fail("dissipation_sign", "must be auto, plus or minus");
  if (weights_kind == "oscillating" && d != 3)
    fail("weights.kind", "oscillating targets are defined for d = 3 only");
  for (double tau : jko_tau_list)
    if (tau <= 0.0) fail("jko.tau_list", "tau values must be positive");
  if (jko_inner_iters < 1) fail("jko.inner_iters", "must be >= 1");
  if (jko_ref_dt <= 0.0) fail("jko.ref_dt", "must be positive");
  for (double eta : gronwall_eta_list)
    if (eta < 0.0) fail("gronwall.eta_list", "eta must be nonnegative");
  if (gronwall_w2_stride < 1) fail("gronwall.w2_stride", "must be >= 1");
  if (stability_reference_h < 1) fail("stability.reference_H", "must be >= 1");
  for (int h : stability_h_list) {
    if (h < 1) fail("stability.H_list", "head counts must be positive");
    if (h > stability_reference_h)
      fail("stability.H_list", "approximating H must not exceed reference_H");
  }
  (void)parse_f_matrix();  // validates the F spec
}

namespace detail {

/// Assigns one dotted key; throws ConfigError (with the line) for unknown
/// keys or malformed values.
inline void assign_config_key(ScenarioConfig& cfg, const std::string& full,
                              const std::string& val, int lineno) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_int;

  {
    if (full == "n") cfg.n = static_cast<int>(to_int(val, full, lineno));
    else if (full == "d") cfg.d = static_cast<int>(to_int(val, full, lineno));
    else if (full == "H" || full == "H_list") {
      cfg.h_list.clear();
      for (const auto& p : detail::split(val, ','))
        cfg.h_list.push_back(static_cast<int>(to_int(p, full, lineno)));
    }
    else if (full == "dt") cfg.dt = to_double(val, full, lineno);
    else if (full == "T") cfg.t_final = to_double(val, full, lineno);
    else if (full == "N_MC") cfg.n_mc = static_cast<int>(to_int(val, full, lineno));
    else if (full == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(val, full, lineno));
    else if (full == "record_stride")
      cfg.record_stride = static_cast<int>(to_int(val, full, lineno));
    else if (full == "update_order") cfg.update_order = val;
    else if (full == "g2_weighted") cfg.g2_weighted = to_bool(val, full, lineno);
    else if (full == "out_dir") cfg.out_dir = val;
    else if (full == "threads") cfg.threads = static_cast<int>(to_int(val, full, lineno));
    else if (full == "g2_avg_t0") cfg.g2_avg_t0 = to_double(val, full, lineno);
    else if (full == "g2_avg_t1") cfg.g2_avg_t1 = to_double(val, full, lineno);
    else if (full == "ledger_dissipation") cfg.ledger_dissipation = val;
    else if (full == "dissipation_sign") cfg.dissipation_sign = val;
    else if (full == "weights.kind") cfg.weights_kind = val;
    else if (full == "weights.F") cfg.weights_f = val;
    else if (full == "weights.sigma2") cfg.sigma2 = to_double(val, full, lineno);
    else if (full == "weights.phase_spread") cfg.phase_spread = to_bool(val, full, lineno);
    else if (full == "weights.init") cfg.weights_init = val;
    else if (full == "weights.init_scale")
      cfg.weights_init_scale = to_double(val, full, lineno);
    else if (full == "weights.schedule_file") cfg.schedule_file = val;
    else if (full == "jko.tau_list") {
      cfg.jko_tau_list.clear();
      for (const auto& p : detail::split(val, ','))
        cfg.jko_tau_list.push_back(to_double(p, full, lineno));
    }
    else if (full == "jko.inner_iters")
      cfg.jko_inner_iters = static_cast<int>(to_int(val, full, lineno));
    else if (full == "jko.inner_lr") cfg.jko_inner_lr = to_double(val, full, lineno);
    else if (full == "jko.coupling") cfg.jko_coupling = val;
    else if (full == "jko.mobility_mode") cfg.jko_mobility = val;
    else if (full == "jko.ref_dt") cfg.jko_ref_dt = to_double(val, full, lineno);
    else if (full == "gronwall.eta_list") {
      cfg.gronwall_eta_list.clear();
      for (const auto& p : detail::split(val, ','))
        cfg.gronwall_eta_list.push_back(to_double(p, full, lineno));
    }
    else if (full == "gronwall.w2_stride")
      cfg.gronwall_w2_stride = static_cast<int>(to_int(val, full, lineno));
    else if (full == "stability.H_list") {
      cfg.stability_h_list.clear();
      for (const auto& p : detail::split(val, ','))
        cfg.stability_h_list.push_back(static_cast<int>(to_int(p, full, lineno)));
    }
    else if (full == "stability.reference_H")
      cfg.stability_reference_h = static_cast<int>(to_int(val, full, lineno));
    else
      throw ConfigError("unknown key '" + full + "'", lineno, 1);
  }
}

}  // namespace detail

/// Parses the documented key-value format.  Unknown keys are rejected with
/// their line number; values are validated as they are read.
inline ScenarioConfig parse_config_text(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("unterminated section header", lineno,
                                             static_cast<int>(line.find('[')) + 1);
      section = detail::trim(t.substr(1, t.size() - 2));
      if (section != "weights" && section != "jko" && section != "gronwall" &&
          section != "stability")
        throw ConfigError("unknown section '[" + section + "]'", lineno);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value'", lineno, static_cast<int>(line.size()));
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    detail::assign_config_key(cfg, full, val, lineno);
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Applies a single key=value override (dotted section names), then
/// revalidates the whole configuration.
inline void apply_override(ScenarioConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = detail::trim(assignment.substr(0, eq));
  const std::string val = detail::trim(assignment.substr(eq + 1));
  detail::assign_config_key(cfg, key, val, 0);
  cfg.validate();
}

inline std::string ScenarioConfig::echo() const {
  std::ostringstream o;
  o.precision(17);
  o << "n = " << n << "\n";
  o << "d = " << d << "\n";
  o << "H_list = ";
  for (std::size_t i = 0; i < h_list.size(); ++i) o << (i ? "," : "") << h_list[i];
  o << "\n";
  o << "dt = " << dt << "\n";
  o << "T = " << t_final << "\n";
  o << "N_MC = " << n_mc << "\n";
  o << "seed = " << seed << "\n";
  o << "record_stride = " << record_stride << "\n";
  o << "update_order = " << update_order << "\n";
  o << "g2_weighted = " << (g2_weighted ? "true" : "false") << "\n";
  o << "out_dir = " << out_dir << "\n";
  o << "threads = " << threads << "\n";
  o << "g2_avg_t0 = " << g2_avg_t0 << "\n";
  o << "g2_avg_t1 = " << g2_avg_t1 << "\n";
  o << "ledger_dissipation = " << ledger_dissipation << "\n";
  o << "dissipation_sign = " << dissipation_sign << "\n";
  o << "[weights]\n";
  o << "kind = " << weights_kind << "\n";
  o << "F = " << weights_f << "\n";
  o << "sigma2 = " << sigma2 << "\n";
  o << "phase_spread = " << (phase_spread ? "true" : "false") << "\n";
  o << "init = " << weights_init << "\n";
  o << "init_scale = " << weights_init_scale << "\n";
  if (!schedule_file.empty()) o << "schedule_file = " << schedule_file << "\n";
  o << "[jko]\n";
  o << "tau_list = ";
  for (std::size_t i = 0; i < jko_tau_list.size(); ++i) o << (i ? "," : "") << jko_tau_list[i];
  o << "\n";
  o << "inner_iters = " << jko_inner_iters << "\n";
  o << "inner_lr = " << jko_inner_lr << "\n";
  o << "coupling = " << jko_coupling << "\n";
  o << "mobility_mode = " << jko_mobility << "\n";
  o << "ref_dt = " << jko_ref_dt << "\n";
  o << "[gronwall]\n";
  o << "eta_list = ";
  for (std::size_t i = 0; i < gronwall_eta_list.size(); ++i)
    o << (i ? "," : "") << gronwall_eta_list[i];
  o << "\n";
  o << "w2_stride = " << gronwall_w2_stride << "\n";
  o << "[stability]\n";
  o << "H_list = ";
  for (std::size_t i = 0; i < stability_h_list.size(); ++i)
    o << (i ? "," : "") << stability_h_list[i];
  o << "\n";
  o << "reference_H = " << stability_reference_h << "\n";
  return o.str();
}

}  // namespace mfattn

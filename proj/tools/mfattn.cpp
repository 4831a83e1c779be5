/// Command-line front end.
///
/// Subcommands: simulate, mc, jko, fit, gronwall, stability, validate.
/// Common flags: --config PATH, --seed N, --out DIR, --set key=value,
/// --threads N (falls back to MFATTN_THREADS, then hardware).

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfattn/config.hpp"
#include "mfattn/diagnostics.hpp"
#include "mfattn/dynamics.hpp"
#include "mfattn/experiments.hpp"
#include "mfattn/fit.hpp"
#include "mfattn/io.hpp"
#include "mfattn/jko.hpp"
#include "mfattn/report_json.hpp"
#include "mfattn/validate.hpp"
#include "mfattn/version.hpp"

namespace {

using namespace mfattn;

struct CliArgs {
  std::string subcommand;
  std::string config_path;
  std::string in_path;
  std::vector<std::string> overrides;
  bool seed_set = false;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = -1;
};

void usage(std::ostream& os) {
  os << "usage: mfattn <subcommand> [options]\n"
     << "subcommands:\n"
     << "  simulate   one trajectory -> .traj archive + ledger CSV\n"
     << "  mc         Monte Carlo sweep over H -> report JSON + series CSVs\n"
     << "  jko        minimizing-movement vs forward-Euler comparison CSV\n"
     << "  fit        power-law fit JSON from a (H, value) CSV\n"
     << "  gronwall   input-perturbation robustness report\n"
     << "  stability  weight-perturbation stability report\n"
     << "  validate   run the invariant suite, exit 0 when green\n"
     << "options:\n"
     << "  --config PATH     scenario config file\n"
     << "  --seed N          override the root seed\n"
     << "  --out DIR         override the output directory\n"
     << "  --set key=value   override any config key (repeatable)\n"
     << "  --threads N       worker threads (env MFATTN_THREADS, then hardware)\n"
     << "  --in PATH         input CSV for `fit`\n"
     << "  --version         print version\n";
}

CliArgs parse_cli(int argc, char** argv) {
  CliArgs args;
  if (argc < 2) throw Error("cli_io", "run", "missing subcommand (try --help)");
  args.subcommand = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    auto need_value = [&](const char* flag) -> std::string {
      if (i + 1 >= argc) throw Error("cli_io", "run", std::string(flag) + " needs a value");
      return argv[++i];
    };
    if (a == "--config") args.config_path = need_value("--config");
    else if (a == "--seed") args.seed_set = true, args.seed = std::stoull(need_value("--seed"));
    else if (a == "--out") args.out_dir = need_value("--out");
    else if (a == "--set") args.overrides.push_back(need_value("--set"));
    else if (a == "--threads") args.threads = std::stoi(need_value("--threads"));
    else if (a == "--in") args.in_path = need_value("--in");
    else throw Error("cli_io", "run", "unknown flag: " + a);
  }
  return args;
}

ScenarioConfig load_config(const CliArgs& args) {
  ScenarioConfig cfg;
  if (!args.config_path.empty()) cfg = parse_config(args.config_path);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.threads > 0) {
    cfg.threads = args.threads;
  } else if (cfg.threads == 0) {
    if (const char* env = std::getenv("MFATTN_THREADS")) cfg.threads = std::atoi(env);
  }
  cfg.validate();
  return cfg;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cli_io", "run", "cannot open " + path);
  os << j.dump(2) << "\n";
}

int cmd_simulate(const ScenarioConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const int threads = cfg.threads > 0 ? cfg.threads : hardware_threads();
  const int h_count = cfg.h_list.front();
  Trajectory traj = run_scenario_trajectory(cfg, h_count, 0, threads);

  const std::string echo = cfg.echo();
  write_text_file(cfg.out_dir + "/resolved.cfg", echo);
  write_trajectory_archive(cfg.out_dir + "/trajectory.traj", traj, echo, cfg.seed);

  CsvWriter csv(cfg.out_dir + "/ledger.csv", echo, cfg.seed,
                {"time", "energy", "drift_inc", "ito_inc", "dissipation_inc",
                 "martingale_inc", "residual", "g2_unweighted", "g2_weighted", "m_theta"});
  for (std::size_t k = 0; k < traj.ledger.size(); ++k) {
    csv.row({traj.ledger.time[k], traj.ledger.energy[k], traj.ledger.drift_inc[k],
             traj.ledger.ito_inc[k], traj.ledger.dissipation_inc[k],
             traj.ledger.martingale_inc[k], traj.ledger.residual[k],
             traj.ledger.g2_unweighted[k], traj.ledger.g2_weighted[k], traj.m_theta[k]});
  }
  std::cout << "simulate: wrote " << cfg.out_dir << "/trajectory.traj ("
            << traj.snap_times.size() << " snapshots), ledger.csv; dissipation sign "
            << dissipation_sign_name(traj.ledger.sign) << "\n";
  return 0;
}

int cmd_mc(const ScenarioConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const ScenarioReport report = mc_sweep(cfg);
  const std::string echo = cfg.echo();
  write_json_file(cfg.out_dir + "/report.json", report_to_json(report, cfg.seed));

  for (const auto& ph : report.per_h) {
    CsvWriter csv(cfg.out_dir + "/series_H" + std::to_string(ph.h_count) + ".csv", echo,
                  cfg.seed,
                  {"time", "g2_mean", "g2_se", "g2_other_mean", "energy_mean", "energy_se",
                   "residual_mean", "residual_se", "martingale_mean", "martingale_se"});
    for (std::size_t k = 0; k < ph.time.size(); ++k) {
      csv.row({ph.time[k], ph.g2.mean[k], ph.g2.se[k], ph.g2_other.mean[k], ph.energy.mean[k],
               ph.energy.se[k], ph.residual.mean[k], ph.residual.se[k],
               ph.martingale_cum.mean[k], ph.martingale_cum.se[k]});
    }
  }
  {
    CsvWriter csv(cfg.out_dir + "/g2_timeavg.csv", echo, cfg.seed, {"H", "mean", "se"});
    for (const auto& ph : report.per_h)
      csv.row({static_cast<double>(ph.h_count), ph.g2_timeavg_mean, ph.g2_timeavg_se});
  }
  {
    // Plot-ready long format: one (H, time, metric) value per row.
    std::ofstream os(cfg.out_dir + "/long.csv", std::ios::trunc);
    if (!os) throw Error("cli_io", "run", "cannot open " + cfg.out_dir + "/long.csv");
    os << "# mfattn version " << kVersion << "\n# seed " << cfg.seed << "\n";
    os << "H,time,metric,mean,se\n";
    os.precision(17);
    auto emit = [&](const PerHeadReport& ph, const char* name, const SeriesStats& s) {
      for (std::size_t k = 0; k < ph.time.size(); ++k)
        os << ph.h_count << "," << ph.time[k] << "," << name << "," << s.mean[k] << ","
           << s.se[k] << "\n";
    };
    for (const auto& ph : report.per_h) {
      emit(ph, "g2", ph.g2);
      emit(ph, "energy", ph.energy);
      emit(ph, "residual", ph.residual);
      emit(ph, "martingale", ph.martingale_cum);
    }
  }
  std::cout << "mc: wrote " << cfg.out_dir << "/report.json";
  if (report.fit_valid)
    std::cout << "  fit: a = " << report.fit.a << ", b = " << report.fit.b
              << ", r = " << report.fit.pearson_r;
  std::cout << "\n";
  return 0;
}

int cmd_jko(const ScenarioConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const int h_count = cfg.h_list.front();
  StreamFamily fam{cfg.seed, 0};
  RngStream cloud_rng = fam.cloud_stream();
  TokenCloud cloud0 = TokenCloud::random_uniform(cfg.n, cfg.d, cloud_rng);
  const WeightProcessSpec spec = cfg.weight_spec();
  auto init_rngs = fam.weight_init_streams(h_count);
  HeadEnsemble ens0 = init_weights(spec, h_count, cfg.d, init_rngs);

  const std::string echo = cfg.echo();
  CsvWriter csv(cfg.out_dir + "/jko_comparison.csv", echo, cfg.seed,
                {"tau", "time", "w2_to_reference", "energy", "minimality_lhs",
                 "minimality_rhs"});

  double prev_sup = -1.0;
  bool monotone = true;
  for (double tau : cfg.jko_tau_list) {
    JkoConfig jcfg = cfg.jko_config(tau);
    const JkoTrajectory jt = jko_trajectory(cloud0, ens0, spec, jcfg, cfg.t_final);
    double sup = 0.0;
    for (std::size_t k = 0; k < jt.times.size(); ++k) {
      const TokenCloud ref = jko_matched_forward(cloud0, ens0, jcfg.mobility_mode,
                                                 jt.times[k], cfg.jko_ref_dt);
      const double dist = w2(jt.clouds[k], ref);
      sup = std::max(sup, dist);
      double lhs = 0.0, rhs = 0.0;
      if (k > 0) {
        const double e_k = interaction_energy(jt.clouds[k], jt.ensembles[k]);
        const double e_prev = interaction_energy(jt.clouds[k - 1], jt.ensembles[k]);
        lhs = e_k + w2_squared(jt.clouds[k], jt.clouds[k - 1]) / (2.0 * tau);
        rhs = e_prev;
      }
      csv.row({tau, jt.times[k], dist,
               interaction_energy(jt.clouds[k], jt.ensembles[k]), lhs, rhs});
    }
    if (prev_sup >= 0.0 && sup > prev_sup) monotone = false;
    prev_sup = sup;
    std::cout << "jko: tau = " << tau << "  sup-grid W2 to reference = " << sup << "\n";
  }
  std::cout << "jko: sup distance " << (monotone ? "decreases" : "does NOT decrease")
            << " monotonically over tau_list\n";
  return 0;
}

int cmd_fit(const CliArgs& args, const ScenarioConfig& cfg) {
  if (args.in_path.empty())
    throw Error("cli_io", "run", "fit needs --in FILE.csv with columns H,value[,se]");
  std::ifstream in(args.in_path);
  if (!in) throw Error("cli_io", "run", "cannot open " + args.in_path);
  Vec hs, means;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    Vec row;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric || row.size() < 2) continue;  // header row
    hs.push_back(row[0]);
    means.push_back(row[1]);
  }
  const FitResult fit = fit_power_law(hs, means);
  ensure_dir(cfg.out_dir);
  json j{{"provenance", provenance_json("input = " + args.in_path + "\n", cfg.seed)},
         {"fit", fit_to_json(fit)}};
  write_json_file(cfg.out_dir + "/fit.json", j);
  std::cout << "fit: a = " << fit.a << " [" << fit.ci_a[0] << ", " << fit.ci_a[1] << "]"
            << ", b = " << fit.b << " [" << fit.ci_b[0] << ", " << fit.ci_b[1] << "]"
            << ", r = " << fit.pearson_r << "\n";
  return 0;
}

int cmd_gronwall(const ScenarioConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const GronwallReport report = gronwall_experiment(cfg);
  write_json_file(cfg.out_dir + "/gronwall.json", gronwall_to_json(report, cfg.seed));
  const std::string echo = cfg.echo();
  CsvWriter csv(cfg.out_dir + "/gronwall.csv", echo, cfg.seed,
                {"eta", "time", "w2_mean", "m_theta_mean", "envelope"});
  bool all_hold = true;
  for (const auto& er : report.per_eta) {
    for (std::size_t k = 0; k < er.time.size(); ++k) {
      const double envelope = er.w2_mean.front() * er.c1 * std::exp(er.c2 * er.m_theta_mean[k]);
      csv.row({er.eta, er.time[k], er.w2_mean[k], er.m_theta_mean[k], envelope});
    }
    all_hold = all_hold && er.envelope_holds;
    std::cout << "gronwall: eta = " << er.eta << "  C2 = " << er.c2
              << "  envelope holds: " << (er.envelope_holds ? "yes" : "NO")
              << "  early W2 ratio (eta vs eta/2) = " << er.early_ratio_vs_half << "\n";
  }
  return all_hold ? 0 : 1;
}

int cmd_stability(const ScenarioConfig& cfg) {
  ensure_dir(cfg.out_dir);
  const StabilityReport report = stability_experiment(cfg);
  write_json_file(cfg.out_dir + "/stability.json", stability_to_json(report, cfg.seed));
  const std::string echo = cfg.echo();
  CsvWriter csv(cfg.out_dir + "/stability.csv", echo, cfg.seed, {"H", "w2_mean", "w2_se"});
  for (std::size_t i = 0; i < report.h_values.size(); ++i)
    csv.row({static_cast<double>(report.h_values[i]), report.w2_mean[i], report.w2_se[i]});
  std::cout << "stability: W2 to reference (H = " << report.reference_h << ") ";
  for (std::size_t i = 0; i < report.h_values.size(); ++i)
    std::cout << "H=" << report.h_values[i] << ": " << report.w2_mean[i] << "  ";
  std::cout << (report.strictly_decreasing ? "(strictly decreasing)" : "(NOT decreasing)")
            << "\n";
  return report.strictly_decreasing ? 0 : 1;
}

int cmd_validate() {
  const auto results = run_validation();
  bool all = true;
  for (const auto& [name, ok] : results) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
    all = all && ok;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2) {
    const std::string first = argv[1];
    if (first == "--help" || first == "-h") {
      usage(std::cout);
      return 0;
    }
    if (first == "--version") {
      std::cout << "mfattn " << mfattn::kVersion << "\n";
      return 0;
    }
  }
  try {
    const CliArgs args = parse_cli(argc, argv);
    if (args.subcommand == "validate") return cmd_validate();
    const ScenarioConfig cfg = load_config(args);
    if (args.subcommand == "simulate") return cmd_simulate(cfg);
    if (args.subcommand == "mc") return cmd_mc(cfg);
    if (args.subcommand == "jko") return cmd_jko(cfg);
    if (args.subcommand == "fit") return cmd_fit(args, cfg);
    if (args.subcommand == "gronwall") return cmd_gronwall(cfg);
    if (args.subcommand == "stability") return cmd_stability(cfg);
    throw mfattn::Error("cli_io", "run", "unknown subcommand: " + args.subcommand);
  } catch (const mfattn::Error& e) {
    std::cerr << mfattn::error_to_json(e).dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"module", "cli_io"}, {"operation", "run"},
                                           {"message", e.what()}}}}
                     .dump(2)
              << "\n";
    return 2;
  }
}

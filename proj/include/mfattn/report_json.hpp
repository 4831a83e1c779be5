#pragma once

#include <string>

#include <json.hpp>

#include "mfattn/experiments.hpp"
#include "mfattn/fit.hpp"
#include "mfattn/version.hpp"

namespace mfattn {

using nlohmann::json;

inline json fit_to_json(const FitResult& fit) {
  return json{{"a", fit.a},
              {"b", fit.b},
              {"ci_a", {fit.ci_a[0], fit.ci_a[1]}},
              {"ci_b", {fit.ci_b[0], fit.ci_b[1]}},
              {"pearson_r", fit.pearson_r}};
}

inline json provenance_json(const std::string& config_echo, std::uint64_t seed) {
  return json{{"version", kVersion}, {"seed", seed}, {"config", config_echo}};
}

inline json report_to_json(const ScenarioReport& report, std::uint64_t seed) {
  json per_h = json::array();
  for (const auto& ph : report.per_h) {
    json j{{"H", ph.h_count},
           {"g2_timeavg_mean", ph.g2_timeavg_mean},
           {"g2_timeavg_se", ph.g2_timeavg_se},
           {"g2_timeavg_samples", ph.g2_timeavg_samples},
           {"clustering_t0_mean", ph.clustering_t0_mean},
           {"clustering_final_mean", ph.clustering_final_mean},
           {"clustering_t0_samples", ph.clustering_t0_samples},
           {"clustering_final_samples", ph.clustering_final_samples}};
    per_h.push_back(std::move(j));
  }
  json out{{"provenance", provenance_json(report.config_echo, seed)},
           {"n_mc", report.n_mc},
           {"dissipation_mode", report.dissipation_mode},
           {"dissipation_sign", report.dissipation_sign > 0 ? "plus" : "minus"},
           {"g2_weighted", report.g2_weighted},
           {"per_h", std::move(per_h)}};
  if (report.fit_valid) out["fit"] = fit_to_json(report.fit);
  return out;
}

inline json gronwall_to_json(const GronwallReport& report, std::uint64_t seed) {
  json per_eta = json::array();
  for (const auto& er : report.per_eta) {
    per_eta.push_back(json{{"eta", er.eta},
                           {"c1", er.c1},
                           {"c2", er.c2},
                           {"envelope_holds", er.envelope_holds},
                           {"early_ratio_vs_half", er.early_ratio_vs_half},
                           {"time", er.time},
                           {"w2_mean", er.w2_mean},
                           {"m_theta_mean", er.m_theta_mean}});
  }
  return json{{"provenance", provenance_json(report.config_echo, seed)},
              {"per_eta", std::move(per_eta)}};
}

inline json stability_to_json(const StabilityReport& report, std::uint64_t seed) {
  return json{{"provenance", provenance_json(report.config_echo, seed)},
              {"reference_H", report.reference_h},
              {"H", report.h_values},
              {"w2_mean", report.w2_mean},
              {"w2_se", report.w2_se},
              {"strictly_decreasing", report.strictly_decreasing}};
}

inline json error_to_json(const Error& e) {
  return json{{"error", {{"module", e.module()}, {"operation", e.op()}, {"message", e.what()}}}};
}

}  // namespace mfattn

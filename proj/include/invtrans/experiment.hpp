#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

namespace invtrans {

// Available presets:
//   fig2_closed_form  closed-form pooled vs invariant error over a grid of
//                     coupling variances
//   dg_full           exhaustive subset search, estimators evaluated on a
//                     fresh draw from the held-out task
//   dg_sparse_lasso   lasso screening in front of the exhaustive search
//   dg_greedy_large   greedy search on a wide design
//   amtl              transfer setting with a small labeled test sample and
//                     missing-data estimators
//   smtl              the same roster with every task small
//   custom            fully override-driven (requires design=dg or
//                     design=three_node)
struct ExperimentConfig {
  std::string preset;
  int reps = 0;  // 0: preset default
  std::uint64_t seed = 0;
  int workers = 0;
  std::map<std::string, std::string> overrides;
};

struct Report {
  nlohmann::json body;       // deterministic for a fixed (config, seed)
  std::string timings_csv;   // wall-clock per work unit; not deterministic
};

Report run_experiment(const ExperimentConfig& cfg);

// Renders the summary section as CSV (also done by write_report_files).
std::string summary_csv(const nlohmann::json& body);

// Writes report.json, summary.csv and timings.csv under out_dir, each via an
// atomic rename.
void write_report_files(const Report& report, const std::string& out_dir);

}  // namespace invtrans

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fairinv/config.hpp"
#include "fairinv/metrics.hpp"
#include "fairinv/sap.hpp"
#include "fairinv/sil.hpp"

namespace fairinv {

/// Graph for one seed. SCM graphs are drawn with seed scm.seed + run seed.
struct PreparedData {
  Graph graph;
  /// Attribute the partition ablation and the history monitor use.
  std::string train_attr;
  std::vector<std::string> eval_attrs;
};

PreparedData prepare_data(const RunConfig& cfg, std::uint64_t seed);

/// Everything produced by one (seed, variant) pipeline run.
struct PipelineRun {
  std::string variant;
  ModelParams model;
  ModelParams phi;  // reference model (absent for erm)
  std::vector<PartitionRound> rounds;
  std::vector<EpochRecord> erm_history;
  std::vector<SilRecord> sil_history;
  std::vector<std::string> notes;
  std::vector<MetricsReport> reports;  // one per evaluation attribute
  double seconds = 0.0;
};

/// Reference model and SAP rounds shared between variants of one seed.
struct SapStage {
  TrainResult phi;
  std::vector<PartitionRound> rounds;
  double seconds = 0.0;
};

SapStage run_sap_stage(const RunConfig& cfg, const Graph& graph, const Propagator& prop,
                       const Split& split, std::uint64_t seed, bool random_scores = false);

/// Runs one variant: erm | fairinv | minus_vi | minus_sap | minus_sil.
/// `shared` (if given) supplies φ and the SAP rounds for the non-VI variants.
PipelineRun run_variant(const RunConfig& cfg, const PreparedData& data, const Propagator& prop,
                        const Split& split, std::uint64_t seed, const std::string& variant,
                        const SapStage* shared = nullptr);

/// Test-split metrics of whole-graph logits for every evaluation attribute.
std::vector<MetricsReport> evaluate_attrs(const RunConfig& cfg, std::span<const double> logits,
                                          const PreparedData& data, const Split& split,
                                          const std::string& variant, std::uint64_t seed);

// ---- commands ----------------------------------------------------------------

struct CommandResult {
  std::vector<MetricsReport> reports;
  std::string table;  // human-readable summary
};

/// erm baseline, then cfg.variant (unless it is erm), for every seed.
/// Writes per-seed directories, results.csv and summary.md under `out`.
/// Seeds whose manifest matches the config hash are reloaded, not rerun.
CommandResult cmd_train(const RunConfig& cfg, const std::filesystem::path& out);

/// Evaluates one checkpoint on the test split of `seed` for each attribute.
CommandResult cmd_eval_multi(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::vector<std::string>& attrs, std::uint64_t seed,
                             const std::filesystem::path& out);

/// Full model plus the three ablations per seed.
CommandResult cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out);

/// α × lr_sp grid; one row per (α, lr_sp, seed).
CommandResult cmd_sweep(const RunConfig& cfg, const std::filesystem::path& out);

struct TimingResult {
  std::vector<double> k1_seconds;
  std::vector<double> k3_seconds;
  std::string table;
};

/// Wall-clock of the full pipeline with k = 1 and k = 3.
TimingResult cmd_time(const RunConfig& cfg, const std::filesystem::path& out);

/// Writes the SCM graph of `seed` in the canonical save format.
void cmd_gen_scm(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out);

/// Runs φ and SAP for `seed`, writes partition CSVs and an agreement table.
std::string cmd_inspect_partition(const RunConfig& cfg, std::uint64_t seed,
                                  const std::filesystem::path& out);

/// Mean ± std (percent) per (variant, attribute).
std::string summary_markdown(const std::vector<MetricsReport>& reports);
std::string results_csv(std::vector<MetricsReport> reports);

}  // namespace fairinv

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairinv/graph.hpp"
#include "fairinv/sap.hpp"
#include "fairinv/sil.hpp"
#include "fairinv/trainer.hpp"

namespace fairinv {

/// Everything a run needs. Unspecified keys keep the defaults below, which
/// follow the published training setup (hidden 16, lr 1e-2, 1000 epochs,
/// weight decay 1e-5, k = 3, t = 2, 500 epochs for φ and SAP).
///
/// File format: INI sections with `key = value` lines.
///   [data]  source (scm|files), node_file, edge_file, label, sensitive,
///           drop, binarize_median, append_sensitive, eval_attrs, split
///   [scm]   n, d, beta_sy, beta_sg_feat, beta_sg_homo, avg_degree, seed,
///           num_sensitive, merit_scale, label_bias_scale, label_offset,
///           signal_strength, leak_scale, noise, label_homophily
///   [model] backbone, hidden
///   [train] lr, epochs, weight_decay, epochs_phi, selection
///   [sap]   k, t, epochs_sap, lr_sp, weight_decay, q_mode, renormalize,
///           single_norm
///   [sil]   alpha, mode, eval_mode, rule, min_group_size,
///           mean_over_rounds, pooled, irm_weight
///   [run]   seeds, variant, out
///   [sweep] alphas, lr_sps
///   [time]  repeats
struct RunConfig {
  // [data]
  std::string source = "scm";
  std::string node_file;
  std::string edge_file;
  std::string label;
  std::vector<std::string> sensitive;
  std::vector<std::string> drop;
  std::vector<std::string> binarize_median;
  bool append_sensitive = true;  // append the first sensitive attribute to X
  std::vector<std::string> eval_attrs;  // empty: every sensitive attribute
  SplitRatios split;

  ScmConfig scm;

  BackboneKind backbone = BackboneKind::Gcn;
  std::size_t hidden = 16;

  double lr = 1e-2;
  std::size_t epochs = 1000;
  double weight_decay = 1e-5;
  std::size_t epochs_phi = 500;
  Selection selection = Selection::BestVal;

  std::size_t k = 3;
  std::size_t t = 2;
  std::size_t epochs_sap = 500;
  double lr_sp = 0.1;
  double sap_weight_decay = 0.0;
  EdgeMode q_mode = EdgeMode::Variant;
  bool sap_renormalize = false;
  bool single_norm = false;

  double alpha = 10.0;
  EdgeMode f_mode = EdgeMode::Invariant;
  EdgeMode eval_mode = EdgeMode::Off;
  GroupRule rule = GroupRule::Hard;
  std::size_t min_group_size = 5;
  bool mean_over_rounds = false;
  bool pooled = false;
  double irm_weight = 1.0;

  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string variant = "fairinv";
  std::string out = "runs";

  std::vector<double> sweep_alphas{0.001, 0.01, 0.1, 0.5, 1, 10, 100};
  std::vector<double> sweep_lr_sps{0.001, 0.01, 0.1, 0.5, 1, 10, 100};
  std::size_t time_repeats = 5;

  void validate() const;

  TrainConfig phi_config(std::uint64_t seed) const;
  TrainConfig erm_config(std::uint64_t seed) const;
  SapConfig sap_config(std::uint64_t seed) const;
  SilConfig sil_config(std::uint64_t seed) const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical text: every key, fixed order, shortest round-trip numbers.
std::string serialize_config(const RunConfig& cfg);
/// FNV-1a over the canonical text with the output directory and seed list
/// blanked, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace fairinv

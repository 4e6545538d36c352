#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fairinv/backbone.hpp"
#include "fairinv/graph.hpp"
#include "fairinv/trainer.hpp"

namespace fairinv {

/// One partition round: per-edge variant scores and a soft node partition.
struct PartitionRound {
  std::vector<double> w;  // per undirected edge, in (0, 1)
  DenseMat P;             // n × t, rows sum to 1
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<double> penalty_history;

  friend bool operator==(const PartitionRound&, const PartitionRound&) = default;
};

struct SapConfig {
  std::size_t k = 3;
  std::size_t t = 2;
  std::size_t epochs = 500;
  double lr_sp = 0.1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// How q reads the edge scores.
  EdgeMode q_mode = EdgeMode::Variant;
  bool renormalize = false;
  /// Penalty as the single norm sqrt(Σ_s D_s²) instead of Σ_s D_s².
  bool single_norm = false;
  /// Replace ψ by fixed i.i.d. uniform edge scores (q is still trained).
  bool random_scores = false;

  void validate() const;
};

/// Linear edge scorer ψ: 2·hidden → 1.
struct EdgeScorer {
  Param weight;
  Param bias;

  static EdgeScorer init(std::size_t hidden, Rng& rng);
  std::vector<Param*> params() { return {&weight, &bias}; }
};

/// w_e = σ(ψ([h_u ‖ h_v])) for every canonical edge (u < v).
std::vector<double> score_edges(const EdgeScorer& psi, const DenseMat& pair_features);

/// Row softmax of q's logits under edge modulation `mod`.
DenseMat infer_partition(const Propagator& prop, const DenseMat& q_input, const ModelParams& q,
                         const EdgeMod& mod, ForwardCache* cache = nullptr);

/// R_s = Σ_v P[v,s] · bce(z_v, y_v) over `nodes`.
std::vector<double> soft_risk(const DenseMat& P, std::span<const double> z, std::span<const int> y,
                              std::span<const std::size_t> nodes);

/// D_s = Σ_v P[v,s] · z_v (σ(z_v) − y_v): the derivative of R_s(w̄) at w̄ = 1.
std::vector<double> irm_group_gradients(const DenseMat& P, std::span<const double> z,
                                        std::span<const int> y,
                                        std::span<const std::size_t> nodes);

/// Σ_s D_s² (or its square root with `single_norm`).
double irm_penalty(const DenseMat& P, std::span<const double> z, std::span<const int> y,
                   std::span<const std::size_t> nodes, bool single_norm = false);

/// ∂penalty/∂P (zero outside `nodes`).
DenseMat irm_penalty_grad(const DenseMat& P, std::span<const double> z, std::span<const int> y,
                          std::span<const std::size_t> nodes, bool single_norm = false);

/// Fixed inputs of a SAP run, derived once from the frozen reference model.
struct SapInputs {
  const Graph* graph = nullptr;
  const Propagator* prop = nullptr;
  DenseMat pair_features;  // [h_u ‖ h_v] per canonical edge, from φ's hidden layer
  DenseMat q_input;        // [X ‖ Y'] with Y' = label on train nodes, φ's prediction elsewhere
  std::vector<double> phi_logits;
  std::vector<std::size_t> nodes;  // nodes whose labels enter the penalty (train)
  std::size_t hidden = 16;
};

SapInputs prepare_sap(const Graph& graph, const Propagator& prop, const ModelParams& phi,
                      const Split& split);

/// Penalty at the current (ψ, q) and, when `accumulate` is set, its
/// gradient added into ψ's and q's grad buffers.
double sap_objective(const SapInputs& in, const SapConfig& cfg, EdgeScorer& psi, ModelParams& q,
                     bool accumulate);

/// Ascends the penalty for cfg.epochs steps (Adam on the negated gradient).
PartitionRound train_sap_round(const SapInputs& in, const SapConfig& cfg, std::size_t round);

/// Rounds use seeds cfg.seed + i and are returned in round order.
std::vector<PartitionRound> run_sap(const SapInputs& in, const SapConfig& cfg);

/// I.i.d. uniform edge scores in (0, 1).
std::vector<double> random_edge_scores(std::size_t num_edges, std::uint64_t seed);

/// argmax per row, ties to the lowest index.
std::vector<int> hard_partition(const DenseMat& P);

/// Max over relabelings of the groups of the fraction of nodes whose hard
/// group matches `s`.
double partition_agreement(const DenseMat& P, std::span<const int> s);

/// Edge scores as "u,v,w" rows and assignments as "node,p0,…,p{t−1}" rows.
std::string round_edges_csv(const PartitionRound& round, const Graph& graph);
std::string round_nodes_csv(const PartitionRound& round);
void save_round(const PartitionRound& round, const Graph& graph, const std::filesystem::path& dir);
PartitionRound load_round(const std::filesystem::path& dir, std::size_t index,
                          std::size_t num_edges);

}  // namespace fairinv

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairinv/backbone.hpp"
#include "fairinv/sap.hpp"
#include "fairinv/trainer.hpp"

namespace fairinv {

enum class GroupRule { Hard, Soft };
std::string to_string(GroupRule rule);
GroupRule parse_group_rule(const std::string& name);

enum class SilObjective {
  VarianceMean,  // Var(group losses) + α · Mean(group losses)
  IrmPenalty,    // mean BCE + irm_weight · Σ_s (D_s / N)², minimized (ablation)
};

struct SilConfig {
  double alpha = 10.0;
  std::size_t epochs = 1000;
  double lr = 1e-2;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  BackboneKind backbone = BackboneKind::Gcn;
  std::size_t hidden = 16;
  GroupRule rule = GroupRule::Hard;
  /// How f reads w during training.
  EdgeMode mode = EdgeMode::Invariant;
  bool renormalize = false;
  /// Edge modulation at evaluation time (validation and reported metrics).
  EdgeMode eval_mode = EdgeMode::Off;
  std::size_t min_group_size = 5;
  /// Average instead of sum over rounds.
  bool mean_over_rounds = false;
  /// One Var/Mean over the groups of all rounds instead of per round.
  bool pooled = false;
  SilObjective objective = SilObjective::VarianceMean;
  double irm_weight = 1.0;
  Selection selection = Selection::BestVal;
  /// Sensitive attribute tracked in the history (empty: none).
  std::string monitor_attr;

  void validate() const;
};

/// Per-group node weights over the train nodes. Hard: 1/|G_s| on the argmax
/// group (ties to the lowest index). Soft: P[v,s] / Σ P[·,s].
struct GroupAssignment {
  struct Group {
    std::size_t id = 0;
    std::vector<std::size_t> nodes;
    std::vector<double> weights;  // sums to 1
  };
  std::vector<Group> groups;        // surviving groups
  std::vector<std::size_t> dropped;  // group ids below the minimum size
};

GroupAssignment assign_groups(const DenseMat& P, GroupRule rule,
                              std::span<const std::size_t> nodes, std::size_t min_size);

/// Group losses L_s = Σ_v weight · bce(z_v, y_v) for each surviving group.
/// Throws DegeneratePartitionError with fewer than two surviving groups.
std::vector<double> group_losses(std::span<const double> logits, std::span<const int> y,
                                 const DenseMat& P, GroupRule rule,
                                 std::span<const std::size_t> nodes, std::size_t min_size = 5);

struct VarMean {
  double variance = 0.0;
  double mean = 0.0;
  double total = 0.0;
};

/// Population variance of the losses + α · their mean.
VarMean variance_mean_loss(std::span<const double> losses, double alpha);
/// ∂(Var + α·Mean)/∂L_s = 2(L_s − L̄)/G + α/G.
std::vector<double> variance_mean_grad(std::span<const double> losses, double alpha);

/// Inputs fixed for a training run of f.
struct SilProblem {
  const Graph* graph = nullptr;
  const Propagator* prop = nullptr;
  const Split* split = nullptr;
  const std::vector<PartitionRound>* rounds = nullptr;
};

struct SilTerms {
  double total = 0.0;
  double variance = 0.0;  // summed over partitions (0 for the IRM objective)
  double mean = 0.0;
  std::size_t active_rounds = 0;
};

/// Objective of f at the current parameters; gradients are accumulated into
/// `params` when `accumulate` is set. Edge-score gradients are discarded.
SilTerms sil_objective(const SilProblem& problem, const SilConfig& cfg,
                       const std::vector<GroupAssignment>& groups, ModelParams& params,
                       bool accumulate);

/// Group assignments for every round (empty group list for rounds that are
/// degenerate). Throws DegeneratePartitionError if every round is degenerate.
std::vector<GroupAssignment> prepare_groups(const SilProblem& problem, const SilConfig& cfg);

struct SilRecord {
  std::size_t epoch = 0;
  double total = 0.0;
  double variance = 0.0;
  double mean = 0.0;
  double val_auc = 0.0;
  double val_dp = 0.0;
};

struct SilResult {
  ModelParams params;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::vector<SilRecord> history;
  std::vector<std::string> notes;  // dropped groups and skipped rounds
};

SilResult train_fairinv(const SilProblem& problem, const SilConfig& cfg);

std::string sil_history_csv(const std::vector<SilRecord>& history);

/// Logits of f under the evaluation edge mode. With a modulated mode the
/// scores of `round` are used.
std::vector<double> sil_predict(const Propagator& prop, const DenseMat& x, const ModelParams& f,
                                EdgeMode mode, const PartitionRound* round, bool renormalize);

// ---- ablation inputs ----------------------------------------------------------

/// Copies of `rounds` with P replaced by the one-hot encoding of `s`.
std::vector<PartitionRound> oracle_partition_rounds(const std::vector<PartitionRound>& rounds,
                                                    std::span<const int> s, std::size_t t);

}  // namespace fairinv

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairinv/backbone.hpp"
#include "fairinv/graph.hpp"
#include "fairinv/metrics.hpp"

namespace fairinv {

/// Classic Adam: weight decay λ·θ is added to the gradient before the
/// moment updates, bias correction on both moments.
struct AdamState {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<DenseMat> m;
  std::vector<DenseMat> v;
};

/// Updates every param in place from its `grad`. Throws NumericError on a
/// non-finite gradient (parameter name in the message).
void adam_step(std::span<Param* const> params, AdamState& state);

enum class Selection { BestVal, Last };

struct TrainConfig {
  std::size_t epochs = 1000;
  double lr = 1e-2;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  BackboneKind backbone = BackboneKind::Gcn;
  std::size_t hidden = 16;
  std::size_t eval_every = 1;
  Selection selection = Selection::BestVal;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
};

struct TrainResult {
  ModelParams params;       // selected parameters
  ModelParams last_params;  // parameters after the final epoch
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::vector<EpochRecord> history;
};

/// Mean BCE over `nodes` for a single-output logit matrix and its gradient
/// (written into `grad`, zero elsewhere).
double mean_bce(const DenseMat& logits, std::span<const int> y, std::span<const std::size_t> nodes,
                DenseMat* grad = nullptr);

/// Full-batch ERM on the train nodes; model selection per cfg.selection.
TrainResult train_erm(const Graph& graph, const Propagator& prop, const Split& split,
                      const TrainConfig& cfg);

/// Logits of the whole graph with edge modulation off.
std::vector<double> predict_logits(const Propagator& prop, const DenseMat& x,
                                   const ModelParams& params);

MetricsReport evaluate(const ModelParams& params, const Graph& graph, const Propagator& prop,
                       std::span<const std::size_t> nodes, const std::string& sens_attr);

double validation_auc(std::span<const double> logits, std::span<const int> y,
                      std::span<const std::size_t> nodes);

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace fairinv

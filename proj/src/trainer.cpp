#include "fairinv/trainer.hpp"

#include <cmath>
#include <sstream>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

void adam_step(std::span<Param* const> params, AdamState& st) {
  if (st.m.empty()) {
    for (const Param* p : params) {
      st.m.emplace_back(p->value.rows(), p->value.cols());
      st.v.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (st.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  for (const Param* p : params) {
    if (!p->grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in '" + p->name + "' at step " +
                         std::to_string(st.step + 1));
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!st.m[i].same_shape(p.value)) throw ShapeError("adam_step: moment shape mismatch");
    auto theta = p.value.data();
    const auto g = p.grad.data();
    auto m = st.m[i].data();
    auto v = st.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g[j] + st.weight_decay * theta[j];
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * gj;
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

double mean_bce(const DenseMat& logits, std::span<const int> y, std::span<const std::size_t> nodes,
                DenseMat* grad) {
  if (nodes.empty()) throw DataError("mean_bce: empty node set");
  const double inv = 1.0 / static_cast<double>(nodes.size());
  if (grad) *grad = DenseMat(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t v : nodes) {
    total += bce(logits(v, 0), y[v]);
    if (grad) (*grad)(v, 0) = bce_grad(logits(v, 0), y[v]) * inv;
  }
  return total * inv;
}

double validation_auc(std::span<const double> logits, std::span<const int> y,
                      std::span<const std::size_t> nodes) {
  std::vector<double> s;
  std::vector<int> t;
  for (std::size_t v : nodes) {
    s.push_back(logits[v]);
    t.push_back(y[v]);
  }
  return auc(s, t);
}

TrainResult train_erm(const Graph& graph, const Propagator& prop, const Split& split,
                      const TrainConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, 0x45524d);  // "ERM"
  TrainResult res;
  ModelParams params =
      ModelParams::init(cfg.backbone, graph.num_features(), cfg.hidden, 1, rng);
  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  const auto& y = graph.labels();
  const EdgeMod off = EdgeMod::off();
  ForwardCache cache;
  DenseMat grad;
  double best = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const DenseMat logits = forward(prop, graph.features(), params, off, cache);
    const double loss = mean_bce(logits, y, split.train, &grad);
    if (!std::isfinite(loss)) {
      throw NumericError("train_erm: loss diverged at epoch " + std::to_string(epoch) +
                         " (seed " + std::to_string(cfg.seed) + ")");
    }
    // Evaluate the parameters that produced this loss, before the update.
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const double val = validation_auc(logits.data(), y, split.val);
      res.history.push_back({epoch, loss, val});
      if (val > best) {
        best = val;
        res.best_epoch = epoch;
        res.params = params;
      }
    }
    params.zero_grad();
    backward(cache, grad, params);
    adam_step(params.params(), adam);
  }
  res.best_val_auc = best;
  res.last_params = params;
  if (cfg.selection == Selection::Last) {
    res.params = params;
    res.best_epoch = cfg.epochs;
  }
  return res;
}

std::vector<double> predict_logits(const Propagator& prop, const DenseMat& x,
                                   const ModelParams& params) {
  ForwardCache cache;
  const DenseMat logits = forward(prop, x, params, EdgeMod::off(), cache);
  return {logits.data().begin(), logits.data().end()};
}

MetricsReport evaluate(const ModelParams& params, const Graph& graph, const Propagator& prop,
                       std::span<const std::size_t> nodes, const std::string& sens_attr) {
  const auto& s = graph.sensitive(sens_attr);
  const auto logits = predict_logits(prop, graph.features(), params);
  MetricsReport r = compute_report(logits, graph.labels(), s, nodes);
  r.sens_attr = sens_attr;
  return r;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_auc\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << format_double(h.train_loss) << ',' << format_double(h.val_auc)
        << '\n';
  }
  return out.str();
}

}  // namespace fairinv

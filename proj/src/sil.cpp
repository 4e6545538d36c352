#include "fairinv/sil.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

std::string to_string(GroupRule rule) { return rule == GroupRule::Hard ? "hard" : "soft"; }

GroupRule parse_group_rule(const std::string& name) {
  if (name == "hard") return GroupRule::Hard;
  if (name == "soft") return GroupRule::Soft;
  throw ConfigError("unknown group rule '" + name + "' (hard|soft)");
}

void SilConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("sil: alpha must be >= 0");
  if (min_group_size < 1) throw ConfigError("sil: min_group_size must be >= 1");
  if (epochs < 1) throw ConfigError("sil: epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("sil: lr must be positive");
  if (irm_weight < 0.0) throw ConfigError("sil: irm_weight must be >= 0");
}

GroupAssignment assign_groups(const DenseMat& P, GroupRule rule,
                              std::span<const std::size_t> nodes, std::size_t min_size) {
  const std::size_t t = P.cols();
  std::vector<GroupAssignment::Group> all(t);
  for (std::size_t s = 0; s < t; ++s) all[s].id = s;
  if (rule == GroupRule::Hard) {
    for (std::size_t v : nodes) {
      const auto row = P.row(v);
      const auto s = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      all[s].nodes.push_back(v);
    }
    for (auto& g : all) g.weights.assign(g.nodes.size(), 1.0 / static_cast<double>(g.nodes.size()));
  } else {
    for (std::size_t s = 0; s < t; ++s) {
      double mass = 0.0;
      for (std::size_t v : nodes) mass += P(v, s);
      for (std::size_t v : nodes) {
        all[s].nodes.push_back(v);
        all[s].weights.push_back(mass > 0.0 ? P(v, s) / mass : 0.0);
      }
    }
  }
  GroupAssignment out;
  for (auto& g : all) {
    double size = 0.0;
    if (rule == GroupRule::Hard) {
      size = static_cast<double>(g.nodes.size());
    } else {
      for (std::size_t v : g.nodes) size += P(v, g.id);
    }
    if (size < static_cast<double>(min_size)) {
      out.dropped.push_back(g.id);
    } else {
      out.groups.push_back(std::move(g));
    }
  }
  return out;
}

namespace {

std::vector<double> losses_of(const GroupAssignment& ga, std::span<const double> z,
                              std::span<const int> y) {
  std::vector<double> out;
  for (const auto& g : ga.groups) {
    double l = 0.0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) l += g.weights[i] * bce(z[g.nodes[i]], y[g.nodes[i]]);
    out.push_back(l);
  }
  return out;
}

}  // namespace

std::vector<double> group_losses(std::span<const double> logits, std::span<const int> y,
                                 const DenseMat& P, GroupRule rule,
                                 std::span<const std::size_t> nodes, std::size_t min_size) {
  const auto ga = assign_groups(P, rule, nodes, min_size);
  if (ga.groups.size() < 2) {
    throw DegeneratePartitionError("partition has " + std::to_string(ga.groups.size()) +
                                   " group(s) with at least " + std::to_string(min_size) +
                                   " train nodes");
  }
  return losses_of(ga, logits, y);
}

VarMean variance_mean_loss(std::span<const double> losses, double alpha) {
  VarMean r;
  const double g = static_cast<double>(losses.size());
  for (double l : losses) r.mean += l;
  r.mean /= g;
  for (double l : losses) r.variance += (l - r.mean) * (l - r.mean);
  r.variance /= g;
  r.total = r.variance + alpha * r.mean;
  return r;
}

std::vector<double> variance_mean_grad(std::span<const double> losses, double alpha) {
  const double g = static_cast<double>(losses.size());
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= g;
  std::vector<double> out;
  for (double l : losses) out.push_back(2.0 * (l - mean) / g + alpha / g);
  return out;
}

std::vector<GroupAssignment> prepare_groups(const SilProblem& problem, const SilConfig& cfg) {
  std::vector<GroupAssignment> out;
  bool any = false;
  for (const auto& r : *problem.rounds) {
    auto ga = assign_groups(r.P, cfg.rule, problem.split->train, cfg.min_group_size);
    if (ga.groups.size() < 2 && cfg.objective == SilObjective::VarianceMean) ga.groups.clear();
    any = any || !ga.groups.empty() || cfg.objective == SilObjective::IrmPenalty;
    out.push_back(std::move(ga));
  }
  if (!any) {
    throw DegeneratePartitionError("every partition round has fewer than two groups with at least " +
                                   std::to_string(cfg.min_group_size) + " train nodes");
  }
  return out;
}

SilTerms sil_objective(const SilProblem& problem, const SilConfig& cfg,
                       const std::vector<GroupAssignment>& groups, ModelParams& params,
                       bool accumulate) {
  const auto& rounds = *problem.rounds;
  const auto& y = problem.graph->labels();
  const auto& train = problem.split->train;
  const bool irm = cfg.objective == SilObjective::IrmPenalty;

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    if (irm || !groups[i].groups.empty()) active.push_back(i);
  }
  SilTerms terms;
  terms.active_rounds = active.size();
  if (active.empty()) return terms;
  const double scale = cfg.mean_over_rounds ? 1.0 / static_cast<double>(active.size()) : 1.0;

  std::vector<ForwardCache> caches(active.size());
  std::vector<std::vector<double>> logits(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto& r = rounds[active[a]];
    const DenseMat z = forward(*problem.prop, problem.graph->features(), params,
                               EdgeMod{cfg.mode, r.w, cfg.renormalize}, caches[a]);
    logits[a].assign(z.data().begin(), z.data().end());
  }

  // Per-round gradient of the objective with respect to the logits.
  std::vector<DenseMat> dz(active.size(), DenseMat(problem.graph->num_nodes(), 1));

  if (irm) {
    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& z = logits[a];
      const DenseMat& P = rounds[active[a]].P;
      const auto d = irm_group_gradients(P, z, y, train);
      double pen = 0.0;
      for (double ds : d) pen += (ds * inv_n) * (ds * inv_n);
      double mean = 0.0;
      for (std::size_t v : train) mean += bce(z[v], y[v]);
      mean *= inv_n;
      terms.variance += scale * pen;
      terms.mean += scale * mean;
      terms.total += scale * (mean + cfg.irm_weight * pen);
      if (!accumulate) continue;
      for (std::size_t v : train) {
        const double sg = sigmoid(z[v]);
        const double dr = sg - y[v] + z[v] * sg * (1.0 - sg);  // ∂[z(σ(z)−y)]/∂z
        double g = (sg - y[v]) * inv_n;
        for (std::size_t s = 0; s < P.cols(); ++s) {
          g += cfg.irm_weight * 2.0 * d[s] * inv_n * inv_n * P(v, s) * dr;
        }
        dz[a](v, 0) = scale * g;
      }
    }
  } else {
    // Loss sets: one per round, or a single pooled set.
    struct Member {
      std::size_t slot;  // index into `active`
      const GroupAssignment::Group* group;
      double loss;
    };
    std::vector<std::vector<Member>> sets;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto& ga = groups[active[a]];
      const auto losses = losses_of(ga, logits[a], y);
      if (sets.empty() || !cfg.pooled) sets.emplace_back();
      for (std::size_t g = 0; g < ga.groups.size(); ++g) sets.back().push_back({a, &ga.groups[g], losses[g]});
    }
    for (const auto& set : sets) {
      std::vector<double> losses;
      for (const auto& m : set) losses.push_back(m.loss);
      const VarMean vm = variance_mean_loss(losses, cfg.alpha);
      terms.variance += scale * vm.variance;
      terms.mean += scale * vm.mean;
      terms.total += scale * vm.total;
      if (!accumulate) continue;
      const auto dl = variance_mean_grad(losses, cfg.alpha);
      for (std::size_t j = 0; j < set.size(); ++j) {
        const auto& g = *set[j].group;
        const auto& z = logits[set[j].slot];
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
          const std::size_t v = g.nodes[i];
          dz[set[j].slot](v, 0) += scale * dl[j] * g.weights[i] * bce_grad(z[v], y[v]);
        }
      }
    }
  }

  if (accumulate) {
    for (std::size_t a = 0; a < active.size(); ++a) backward(caches[a], dz[a], params);
  }
  return terms;
}

std::vector<double> sil_predict(const Propagator& prop, const DenseMat& x, const ModelParams& f,
                                EdgeMode mode, const PartitionRound* round, bool renormalize) {
  if (mode == EdgeMode::Off || round == nullptr) return predict_logits(prop, x, f);
  ForwardCache cache;
  const DenseMat z = forward(prop, x, f, EdgeMod{mode, round->w, renormalize}, cache);
  return {z.data().begin(), z.data().end()};
}

SilResult train_fairinv(const SilProblem& problem, const SilConfig& cfg) {
  cfg.validate();
  if (problem.rounds == nullptr || problem.rounds->empty()) {
    throw ConfigError("train_fairinv: no partition rounds");
  }
  SilResult res;
  const auto groups = prepare_groups(problem, cfg);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t g : groups[i].dropped) {
      res.notes.push_back("round " + std::to_string(i) + ": group " + std::to_string(g) +
                          " below min size " + std::to_string(cfg.min_group_size) + ", dropped");
    }
    if (groups[i].groups.empty() && cfg.objective == SilObjective::VarianceMean) {
      res.notes.push_back("round " + std::to_string(i) + ": degenerate partition, skipped");
    }
  }

  const Graph& graph = *problem.graph;
  Rng rng = Rng::stream(cfg.seed, 0x53494c);  // "SIL"
  ModelParams params = ModelParams::init(cfg.backbone, graph.num_features(), cfg.hidden, 1, rng);
  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  const PartitionRound* eval_round = &problem.rounds->front();
  const std::vector<int>* monitor = cfg.monitor_attr.empty() ? nullptr : &graph.sensitive(cfg.monitor_attr);
  double best = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    params.zero_grad();
    const SilTerms terms = sil_objective(problem, cfg, groups, params, true);
    if (!std::isfinite(terms.total)) {
      throw NumericError("train_fairinv: loss diverged at epoch " + std::to_string(epoch) +
                         " (seed " + std::to_string(cfg.seed) + ")");
    }
    const auto z = sil_predict(*problem.prop, graph.features(), params, cfg.eval_mode, eval_round,
                               cfg.renormalize);
    SilRecord rec{epoch, terms.total, terms.variance, terms.mean,
                  validation_auc(z, graph.labels(), problem.split->val), 0.0};
    if (monitor) {
      std::vector<int> pred, s;
      for (std::size_t v : problem.split->val) {
        pred.push_back(z[v] > 0.0 ? 1 : 0);
        s.push_back((*monitor)[v]);
      }
      rec.val_dp = delta_dp(pred, s);
    }
    res.history.push_back(rec);
    if (rec.val_auc > best) {
      best = rec.val_auc;
      res.best_epoch = epoch;
      res.params = params;
    }
    adam_step(params.params(), adam);
  }
  res.best_val_auc = best;
  if (cfg.selection == Selection::Last) {
    res.params = params;
    res.best_epoch = cfg.epochs;
  }
  return res;
}

std::string sil_history_csv(const std::vector<SilRecord>& history) {
  std::ostringstream out;
  out << "epoch,total_loss,variance,mean,val_auc,val_dp\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << format_double(h.total) << ',' << format_double(h.variance) << ','
        << format_double(h.mean) << ',' << format_double(h.val_auc) << ','
        << format_double(h.val_dp) << '\n';
  }
  return out.str();
}

std::vector<PartitionRound> oracle_partition_rounds(const std::vector<PartitionRound>& rounds,
                                                    std::span<const int> s, std::size_t t) {
  std::vector<PartitionRound> out = rounds;
  for (auto& r : out) {
    r.P = DenseMat(s.size(), t);
    for (std::size_t v = 0; v < s.size(); ++v) {
      if (s[v] < 0 || static_cast<std::size_t>(s[v]) >= t) {
        throw DataError("oracle partition: group id " + std::to_string(s[v]) + " outside [0, " +
                        std::to_string(t) + ")");
      }
      r.P(v, static_cast<std::size_t>(s[v])) = 1.0;
    }
  }
  return out;
}

}  // namespace fairinv

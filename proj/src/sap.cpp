#include "fairinv/sap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

void SapConfig::validate() const {
  if (k < 1) throw ConfigError("sap: k must be >= 1");
  if (t < 2) throw ConfigError("sap: t must be >= 2");
  if (epochs < 1) throw ConfigError("sap: epochs must be >= 1");
  if (!(lr_sp > 0.0)) throw ConfigError("sap: lr_sp must be positive");
}

EdgeScorer EdgeScorer::init(std::size_t hidden, Rng& rng) {
  EdgeScorer s;
  s.weight = {"psi_W", glorot_init(rng, 2 * hidden, 1), DenseMat(2 * hidden, 1)};
  s.bias = {"psi_b", DenseMat(1, 1), DenseMat(1, 1)};
  return s;
}

std::vector<double> score_edges(const EdgeScorer& psi, const DenseMat& pair_features) {
  if (pair_features.cols() != psi.weight.value.rows()) {
    throw ShapeError("score_edges: pair features have " + std::to_string(pair_features.cols()) +
                     " columns, scorer expects " + std::to_string(psi.weight.value.rows()));
  }
  const DenseMat s = sigmoid(add_row_bias(matmul(pair_features, psi.weight.value), psi.bias.value));
  return {s.data().begin(), s.data().end()};
}

DenseMat infer_partition(const Propagator& prop, const DenseMat& q_input, const ModelParams& q,
                         const EdgeMod& mod, ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  return softmax_rows(forward(prop, q_input, q, mod, c));
}

namespace {

double residual(double z, int y) { return z * (sigmoid(z) - static_cast<double>(y)); }

void check_partition_shape(const DenseMat& P, std::span<const double> z, std::span<const int> y) {
  if (P.rows() != z.size() || y.size() != z.size()) throw ShapeError("partition/logit size mismatch");
}

}  // namespace

std::vector<double> soft_risk(const DenseMat& P, std::span<const double> z, std::span<const int> y,
                              std::span<const std::size_t> nodes) {
  check_partition_shape(P, z, y);
  std::vector<double> r(P.cols(), 0.0);
  for (std::size_t v : nodes) {
    const double l = bce(z[v], y[v]);
    for (std::size_t s = 0; s < P.cols(); ++s) r[s] += P(v, s) * l;
  }
  return r;
}

std::vector<double> irm_group_gradients(const DenseMat& P, std::span<const double> z,
                                        std::span<const int> y,
                                        std::span<const std::size_t> nodes) {
  check_partition_shape(P, z, y);
  std::vector<double> d(P.cols(), 0.0);
  for (std::size_t v : nodes) {
    const double r = residual(z[v], y[v]);
    for (std::size_t s = 0; s < P.cols(); ++s) d[s] += P(v, s) * r;
  }
  return d;
}

double irm_penalty(const DenseMat& P, std::span<const double> z, std::span<const int> y,
                   std::span<const std::size_t> nodes, bool single_norm) {
  double sq = 0.0;
  for (double d : irm_group_gradients(P, z, y, nodes)) sq += d * d;
  return single_norm ? std::sqrt(sq) : sq;
}

DenseMat irm_penalty_grad(const DenseMat& P, std::span<const double> z, std::span<const int> y,
                          std::span<const std::size_t> nodes, bool single_norm) {
  const auto d = irm_group_gradients(P, z, y, nodes);
  std::vector<double> coef(d.size());
  double sq = 0.0;
  for (double x : d) sq += x * x;
  const double norm = std::sqrt(sq);
  for (std::size_t s = 0; s < d.size(); ++s) {
    if (single_norm) {
      coef[s] = norm > 0.0 ? d[s] / norm : 0.0;
    } else {
      coef[s] = 2.0 * d[s];
    }
  }
  DenseMat g(P.rows(), P.cols());
  for (std::size_t v : nodes) {
    const double r = residual(z[v], y[v]);
    for (std::size_t s = 0; s < P.cols(); ++s) g(v, s) = coef[s] * r;
  }
  return g;
}

SapInputs prepare_sap(const Graph& graph, const Propagator& prop, const ModelParams& phi,
                      const Split& split) {
  SapInputs in;
  in.graph = &graph;
  in.prop = &prop;
  in.hidden = phi.hidden;
  ForwardCache cache;
  const DenseMat logits = forward(prop, graph.features(), phi, EdgeMod::off(), cache);
  in.phi_logits.assign(logits.data().begin(), logits.data().end());
  in.pair_features = concat_pairs(cache.hidden, graph.edges());

  const std::size_t n = graph.num_nodes();
  const std::size_t d = graph.num_features();
  std::vector<char> is_train(n, 0);
  for (std::size_t v : split.train) is_train[v] = 1;
  in.q_input = DenseMat(n, d + 1);
  for (std::size_t v = 0; v < n; ++v) {
    const auto src = graph.features().row(v);
    auto dst = in.q_input.row(v);
    std::copy(src.begin(), src.end(), dst.begin());
    const int label = is_train[v] ? graph.labels()[v] : (in.phi_logits[v] > 0.0 ? 1 : 0);
    dst[d] = 2.0 * label - 1.0;
  }
  in.nodes = split.train;
  return in;
}

namespace {

double objective_impl(const SapInputs& in, const SapConfig& cfg, EdgeScorer* psi,
                      const std::vector<double>* fixed_w, ModelParams& q, bool accumulate,
                      std::vector<double>* w_out = nullptr, DenseMat* P_out = nullptr) {
  const auto w = fixed_w ? *fixed_w : score_edges(*psi, in.pair_features);
  const EdgeMod mod{cfg.q_mode, w, cfg.renormalize};
  ForwardCache cache;
  const DenseMat P = infer_partition(*in.prop, in.q_input, q, mod, &cache);
  const auto& y = in.graph->labels();
  const double pen = irm_penalty(P, in.phi_logits, y, in.nodes, cfg.single_norm);
  if (w_out) *w_out = w;
  if (P_out) *P_out = P;
  if (!accumulate) return pen;

  const DenseMat dP = irm_penalty_grad(P, in.phi_logits, y, in.nodes, cfg.single_norm);
  const DenseMat dlogits = softmax_rows_grad(P, dP);
  const auto dw = backward(cache, dlogits, q);
  if (fixed_w) return pen;
  DenseMat dpre(w.size(), 1);
  for (std::size_t e = 0; e < w.size(); ++e) dpre(e, 0) = dw[e] * w[e] * (1.0 - w[e]);
  const DenseMat gw = matmul_tn(in.pair_features, dpre);
  auto dst = psi->weight.grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gw.data()[i];
  psi->bias.grad(0, 0) += column_sums(dpre)(0, 0);
  return pen;
}

}  // namespace

double sap_objective(const SapInputs& in, const SapConfig& cfg, EdgeScorer& psi, ModelParams& q,
                     bool accumulate) {
  return objective_impl(in, cfg, &psi, nullptr, q, accumulate);
}

std::vector<double> random_edge_scores(std::size_t num_edges, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x5649);  // "VI"
  std::vector<double> w(num_edges);
  for (double& x : w) {
    do {
      x = rng.uniform();
    } while (x == 0.0);
  }
  return w;
}

namespace {

void assert_round_state(const std::vector<double>& w, const DenseMat& P, std::size_t round,
                        std::uint64_t seed, std::size_t epoch) {
  const std::string where = " (round " + std::to_string(round) + ", seed " +
                            std::to_string(seed) + ", epoch " + std::to_string(epoch) + ")";
  for (double x : w) {
    if (!(x > 0.0 && x < 1.0)) throw NumericError("sap: edge score outside (0,1)" + where);
  }
  for (std::size_t v = 0; v < P.rows(); ++v) {
    double sum = 0.0;
    for (double p : P.row(v)) sum += p;
    if (!(std::fabs(sum - 1.0) <= 1e-12)) throw NumericError("sap: partition row off simplex" + where);
  }
}

}  // namespace

PartitionRound train_sap_round(const SapInputs& in, const SapConfig& cfg, std::size_t round) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed + round;
  Rng rng = Rng::stream(seed, 0x534150);  // "SAP"
  EdgeScorer psi = EdgeScorer::init(in.hidden, rng);
  ModelParams q = ModelParams::init(in.prop->kind, in.q_input.cols(), in.hidden, cfg.t, rng);

  std::vector<double> fixed_w;
  if (cfg.random_scores) fixed_w = random_edge_scores(in.graph->num_edges(), seed);
  const std::vector<double>* fixed = cfg.random_scores ? &fixed_w : nullptr;

  std::vector<Param*> params = fixed ? std::vector<Param*>{} : psi.params();
  for (Param* p : q.params()) params.push_back(p);
  AdamState adam;
  adam.lr = cfg.lr_sp;
  adam.weight_decay = cfg.weight_decay;

  PartitionRound out;
  out.index = round;
  out.seed = seed;
  std::vector<double> w;
  DenseMat P;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (Param* p : params) p->zero_grad();
    const double pen = objective_impl(in, cfg, &psi, fixed, q, true, &w, &P);
    if (!std::isfinite(pen)) {
      throw NumericError("sap: penalty is not finite (round " + std::to_string(round) + ", seed " +
                         std::to_string(seed) + ", epoch " + std::to_string(epoch) + ")");
    }
    assert_round_state(w, P, round, seed, epoch);
    out.penalty_history.push_back(pen);
    for (Param* p : params) {
      for (double& g : p->grad.data()) g = -g;  // ascent
    }
    adam_step(params, adam);
  }
  objective_impl(in, cfg, &psi, fixed, q, false, &out.w, &out.P);
  assert_round_state(out.w, out.P, round, seed, cfg.epochs);
  return out;
}

std::vector<PartitionRound> run_sap(const SapInputs& in, const SapConfig& cfg) {
  cfg.validate();
  std::vector<PartitionRound> rounds;
  for (std::size_t i = 0; i < cfg.k; ++i) rounds.push_back(train_sap_round(in, cfg, i));
  return rounds;
}

std::vector<int> hard_partition(const DenseMat& P) {
  std::vector<int> g(P.rows());
  for (std::size_t v = 0; v < P.rows(); ++v) {
    const auto row = P.row(v);
    g[v] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return g;
}

double partition_agreement(const DenseMat& P, std::span<const int> s) {
  if (P.rows() != s.size()) throw ShapeError("partition_agreement: size mismatch");
  const auto g = hard_partition(P);
  const int groups = static_cast<int>(P.cols());
  int values = 0;
  for (int x : s) values = std::max(values, x + 1);
  // Brute force over injective maps from partition groups to attribute
  // values (both small).
  std::vector<int> perm(static_cast<std::size_t>(std::max(groups, values)));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t v = 0; v < s.size(); ++v) hit += perm[static_cast<std::size_t>(g[v])] == s[v];
    best = std::max(best, hit);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(s.size());
}

std::string round_edges_csv(const PartitionRound& round, const Graph& graph) {
  std::ostringstream out;
  out << "u,v,w\n";
  char buf[32];
  for (std::size_t e = 0; e < round.w.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", round.w[e]);
    out << graph.edges()[e].first << ',' << graph.edges()[e].second << ',' << buf << '\n';
  }
  return out.str();
}

std::string round_nodes_csv(const PartitionRound& round) {
  std::ostringstream out;
  out << "# round " << round.index << " seed " << round.seed << '\n' << "node";
  for (std::size_t s = 0; s < round.P.cols(); ++s) out << ",p" << s;
  out << '\n';
  char buf[32];
  for (std::size_t v = 0; v < round.P.rows(); ++v) {
    out << v;
    for (std::size_t s = 0; s < round.P.cols(); ++s) {
      std::snprintf(buf, sizeof buf, "%.17g", round.P(v, s));
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

void save_round(const PartitionRound& round, const Graph& graph, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = "round_" + std::to_string(round.index);
  write_file_atomic(dir / (stem + ".edges.csv"), round_edges_csv(round, graph));
  write_file_atomic(dir / (stem + ".nodes.csv"), round_nodes_csv(round));
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

PartitionRound load_round(const std::filesystem::path& dir, std::size_t index,
                          std::size_t num_edges) {
  const std::string stem = "round_" + std::to_string(index);
  PartitionRound r;
  r.index = index;
  {
    std::istringstream in(read_file(dir / (stem + ".edges.csv")));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_commas(line);
      if (cells.size() != 3) throw DataError(stem + ".edges.csv: malformed row");
      r.w.push_back(std::strtod(cells[2].c_str(), nullptr));
    }
    if (r.w.size() != num_edges) throw DataError(stem + ".edges.csv: edge count mismatch");
  }
  std::istringstream in(read_file(dir / (stem + ".nodes.csv")));
  std::string line, tag;
  std::getline(in, line);
  {
    std::istringstream meta(line);
    std::string hash, word, seed_word;
    std::size_t idx = 0;
    if (!(meta >> hash >> word >> idx >> seed_word >> r.seed) || hash != "#") {
      throw DataError(stem + ".nodes.csv: missing round header");
    }
  }
  std::getline(in, line);
  const std::size_t t = split_commas(line).size() - 1;
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != t + 1) throw DataError(stem + ".nodes.csv: malformed row");
    for (std::size_t s = 1; s <= t; ++s) data.push_back(std::strtod(cells[s].c_str(), nullptr));
    ++rows;
  }
  r.P = DenseMat(rows, t, std::move(data));
  return r;
}

}  // namespace fairinv

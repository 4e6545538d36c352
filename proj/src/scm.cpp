#include <algorithm>
#include <cmath>
#include <map>

#include "fairinv/error.hpp"
#include "fairinv/graph.hpp"

namespace fairinv {

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

void ScmConfig::validate() const {
  if (n < 2 || d < 2) throw ConfigError("scm: n and d must be at least 2");
  for (double b : {beta_sy, beta_sg_feat, beta_sg_homo}) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("scm: strengths must lie in [0, 1]");
  }
  if (num_sensitive < 1) throw ConfigError("scm: num_sensitive must be >= 1");
  if (!(avg_degree > 0.0)) throw ConfigError("scm: avg_degree must be positive");
  if (avg_degree > static_cast<double>(n - 1)) {
    throw ConfigError("scm: avg_degree " + std::to_string(avg_degree) + " infeasible for n = " +
                      std::to_string(n));
  }
  if (noise < 0.0 || label_homophily < 0.0) throw ConfigError("scm: negative calibration knob");
}

std::string scm_sensitive_name(std::size_t index, std::size_t count) {
  return count == 1 ? std::string("S") : "S" + std::to_string(index);
}

ScmGraph scm_generate(const ScmConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n = cfg.n;
  const std::size_t d = cfg.d;
  const std::size_t ns = cfg.num_sensitive;

  ScmGraph out;
  out.planted.assign(ns, std::vector<int>(n));
  for (std::size_t j = 0; j < ns; ++j) out.sensitive_names.push_back(scm_sensitive_name(j, ns));

  // Exogenous variables: sensitive attributes and latent merit.
  out.merit.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < ns; ++j) out.planted[j][v] = rng.bernoulli(0.5) ? 1 : 0;
    out.merit[v] = rng.normal();
  }

  // S → Y.
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) {
    double logit = cfg.label_offset + cfg.merit_scale * out.merit[v];
    for (std::size_t j = 0; j < ns; ++j) {
      logit += cfg.label_bias_scale * cfg.beta_sy * (2.0 * out.planted[j][v] - 1.0);
    }
    labels[v] = rng.bernoulli(sigmoid(logit)) ? 1 : 0;
  }

  // S → G via features: merit signal plus leaked sensitive directions.
  out.signal_direction = random_unit(rng, d);
  std::vector<std::vector<double>> leak(ns);
  for (auto& l : leak) l = random_unit(rng, d);
  DenseMat x(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    auto row = x.row(v);
    for (std::size_t c = 0; c < d; ++c) {
      double val = cfg.signal_strength * out.merit[v] * out.signal_direction[c];
      for (std::size_t j = 0; j < ns; ++j) {
        val += cfg.leak_scale * cfg.beta_sg_feat * (2.0 * out.planted[j][v] - 1.0) * leak[j][c];
      }
      row[c] = val + cfg.noise * rng.normal();
    }
  }

  // S → G via topology: pair weight grows with shared sensitive values and
  // shared labels; a global scale is bisected so the expected degree hits
  // avg_degree.
  auto category = [&](std::size_t v) {
    std::size_t key = static_cast<std::size_t>(labels[v]);
    for (std::size_t j = 0; j < ns; ++j) key = key * 2 + static_cast<std::size_t>(out.planted[j][v]);
    return key;
  };
  auto pair_weight = [&](std::size_t a, std::size_t b) {
    // Category keys encode (label, S_0, …, S_{ns-1}) in binary, label highest.
    double w = 1.0;
    for (std::size_t j = 0; j < ns; ++j) {
      if (((a >> j) & 1U) == ((b >> j) & 1U)) w *= 1.0 + cfg.beta_sg_homo;
    }
    if ((a >> ns) == (b >> ns)) w *= 1.0 + cfg.label_homophily;
    return w;
  };
  std::map<std::size_t, double> cat_count;
  std::vector<std::size_t> cat(n);
  for (std::size_t v = 0; v < n; ++v) {
    cat[v] = category(v);
    cat_count[cat[v]] += 1.0;
  }
  std::vector<std::pair<double, double>> pair_types;  // (weight, number of pairs)
  for (auto a = cat_count.begin(); a != cat_count.end(); ++a) {
    for (auto b = a; b != cat_count.end(); ++b) {
      const double pairs = a == b ? a->second * (a->second - 1.0) / 2.0 : a->second * b->second;
      pair_types.emplace_back(pair_weight(a->first, b->first), pairs);
    }
  }
  auto expected_edges = [&](double scale) {
    double total = 0.0;
    for (const auto& [w, count] : pair_types) total += std::min(1.0, scale * w) * count;
    return total;
  };
  const double target = cfg.avg_degree * static_cast<double>(n) / 2.0;
  double lo = 0.0;
  double hi = 1.0;  // with scale 1 every pair has probability 1
  if (expected_edges(hi) < target) {
    throw ConfigError("scm: avg_degree infeasible for n = " + std::to_string(n));
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected_edges(mid) < target ? lo : hi) = mid;
  }
  out.edge_scale = 0.5 * (lo + hi);

  EdgeList edges;
  edges.reserve(static_cast<std::size_t>(target * 1.2));
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = std::min(1.0, out.edge_scale * pair_weight(cat[u], cat[v]));
      if (rng.uniform() < p) edges.emplace_back(u, v);
    }
  }

  SensitiveMap sens;
  for (std::size_t j = 0; j < ns; ++j) sens.emplace(out.sensitive_names[j], out.planted[j]);
  out.graph = Graph(n, edges, std::move(x), std::move(labels), std::move(sens));
  return out;
}

}  // namespace fairinv

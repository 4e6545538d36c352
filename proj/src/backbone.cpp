#include "fairinv/backbone.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Gcn: return "gcn";
    case BackboneKind::Gin: return "gin";
    case BackboneKind::Sage: return "sage";
  }
  return "?";
}

BackboneKind parse_backbone(const std::string& name) {
  if (name == "gcn") return BackboneKind::Gcn;
  if (name == "gin") return BackboneKind::Gin;
  if (name == "sage") return BackboneKind::Sage;
  throw ConfigError("unknown backbone '" + name + "' (gcn|gin|sage)");
}

std::string to_string(EdgeMode mode) {
  switch (mode) {
    case EdgeMode::Off: return "off";
    case EdgeMode::Variant: return "variant";
    case EdgeMode::Invariant: return "invariant";
  }
  return "?";
}

EdgeMode parse_edge_mode(const std::string& name) {
  if (name == "off") return EdgeMode::Off;
  if (name == "variant") return EdgeMode::Variant;
  if (name == "invariant") return EdgeMode::Invariant;
  throw ConfigError("unknown edge mode '" + name + "' (off|variant|invariant)");
}

// ---- ModelParams -------------------------------------------------------------

ModelParams ModelParams::init(BackboneKind kind, std::size_t in_dim, std::size_t hidden,
                              std::size_t out_dim, Rng& rng) {
  ModelParams p;
  p.kind = kind;
  p.in_dim = in_dim;
  p.hidden = hidden;
  p.out_dim = out_dim;
  const std::size_t layers = kind == BackboneKind::Sage ? 2 : 1;
  std::size_t fan_in = in_dim;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t rows = kind == BackboneKind::Sage ? 2 * fan_in : fan_in;
    const std::string tag = std::to_string(l + 1);
    p.tensors.push_back({"W" + tag, glorot_init(rng, rows, hidden), DenseMat(rows, hidden)});
    p.tensors.push_back({"b" + tag, DenseMat(1, hidden), DenseMat(1, hidden)});
    fan_in = hidden;
  }
  p.tensors.push_back({"Wc", glorot_init(rng, hidden, out_dim), DenseMat(hidden, out_dim)});
  p.tensors.push_back({"bc", DenseMat(1, out_dim), DenseMat(1, out_dim)});
  return p;
}

std::vector<Param*> ModelParams::params() {
  std::vector<Param*> out;
  for (auto& t : tensors) out.push_back(&t);
  return out;
}

void ModelParams::zero_grad() {
  for (auto& t : tensors) t.zero_grad();
}

std::uint64_t ModelParams::fingerprint() const {
  std::string bytes;
  for (const auto& t : tensors) {
    const auto d = t.value.data();
    bytes.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  return fnv1a64(bytes);
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.kind != b.kind || a.in_dim != b.in_dim || a.hidden != b.hidden || a.out_dim != b.out_dim ||
      a.tensors.size() != b.tensors.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name || !(a.tensors[i].value == b.tensors[i].value)) {
      return false;
    }
  }
  return true;
}

// ---- propagation ---------------------------------------------------------------

Propagator make_propagator(const Graph& graph, BackboneKind kind) {
  Propagator prop;
  prop.kind = kind;
  prop.num_edges = graph.num_edges();
  if (kind == BackboneKind::Gcn) {
    prop.adj = gcn_normalize(graph);
    return prop;
  }
  SparseAdj& adj = prop.adj;
  const std::size_t n = graph.num_nodes();
  adj.n = n;
  adj.row_ptr.assign(n + 1, 0);
  adj.degree.resize(n);
  const auto& rp = graph.row_ptr();
  const auto& ci = graph.col_idx();
  const auto& ee = graph.entry_edge();
  for (std::size_t u = 0; u < n; ++u) {
    adj.degree[u] = graph.degree(u);
    bool self_done = kind == BackboneKind::Sage;  // SAGE aggregates neighbours only
    for (std::size_t k = rp[u]; k <= rp[u + 1]; ++k) {
      const bool at_end = k == rp[u + 1];
      if (!self_done && (at_end || ci[k] > u)) {
        adj.col.push_back(u);
        adj.edge.push_back(-1);
        adj.coef.push_back(1.0);  // (1 + ε) with ε = 0
        self_done = true;
      }
      if (at_end) break;
      adj.col.push_back(ci[k]);
      adj.edge.push_back(static_cast<std::ptrdiff_t>(ee[k]));
      adj.coef.push_back(kind == BackboneKind::Sage ? 1.0 / static_cast<double>(adj.degree[u])
                                                    : 1.0);
    }
    adj.row_ptr[u + 1] = adj.col.size();
  }
  return prop;
}

std::vector<double> entry_multipliers(const Propagator& prop, const EdgeMod& mod) {
  const SparseAdj& adj = prop.adj;
  std::vector<double> m(adj.nnz(), 1.0);
  if (mod.mode == EdgeMode::Off) return m;
  if (mod.w.size() != prop.num_edges) {
    throw ShapeError("edge modulation has " + std::to_string(mod.w.size()) +
                     " scores, graph has " + std::to_string(prop.num_edges) + " edges");
  }
  for (std::size_t e = 0; e < adj.nnz(); ++e) {
    if (adj.edge[e] < 0) continue;
    const double w = mod.w[static_cast<std::size_t>(adj.edge[e])];
    m[e] = mod.mode == EdgeMode::Variant ? w : 1.0 - w;
  }
  return m;
}

namespace {

bool uses_renormalization(const Propagator& prop, const EdgeMod& mod) {
  return mod.renormalize && mod.mode != EdgeMode::Off && prop.kind != BackboneKind::Gin;
}

// Weighted degree 1 + Σ m over non-self entries (GCN) or Σ m (SAGE).
std::vector<double> row_mass(const SparseAdj& adj, std::span<const double> m, double offset) {
  std::vector<double> mass(adj.n, offset);
  for (std::size_t u = 0; u < adj.n; ++u) {
    for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
      if (adj.edge[e] >= 0) mass[u] += m[e];
    }
  }
  return mass;
}

std::vector<double> coefficients_from_multipliers(const Propagator& prop, const EdgeMod& mod,
                                                  std::span<const double> m) {
  const SparseAdj& adj = prop.adj;
  std::vector<double> c(adj.nnz());
  if (!uses_renormalization(prop, mod)) {
    for (std::size_t e = 0; e < c.size(); ++e) c[e] = adj.coef[e] * m[e];
    return c;
  }
  if (prop.kind == BackboneKind::Gcn) {
    const auto deg = row_mass(adj, m, 1.0);
    std::vector<double> inv_sqrt(adj.n);
    for (std::size_t u = 0; u < adj.n; ++u) inv_sqrt[u] = 1.0 / std::sqrt(deg[u]);
    for (std::size_t u = 0; u < adj.n; ++u) {
      for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
        c[e] = adj.edge[e] < 0 ? 1.0 / deg[u] : m[e] * inv_sqrt[u] * inv_sqrt[adj.col[e]];
      }
    }
    return c;
  }
  // SAGE: weighted mean over neighbours.
  const auto mass = row_mass(adj, m, 0.0);
  for (std::size_t u = 0; u < adj.n; ++u) {
    for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
      c[e] = mass[u] > 0.0 ? m[e] / mass[u] : 0.0;
    }
  }
  return c;
}

// ∂L/∂m per entry from ∂L/∂c per entry.
std::vector<double> multiplier_grad(const Propagator& prop, bool renormalize,
                                    std::span<const double> m, std::span<const double> c,
                                    std::span<const double> dc) {
  const SparseAdj& adj = prop.adj;
  std::vector<double> dm(adj.nnz(), 0.0);
  if (!renormalize) {
    for (std::size_t e = 0; e < dm.size(); ++e) dm[e] = dc[e] * adj.coef[e];
    return dm;
  }
  if (prop.kind == BackboneKind::Gcn) {
    const auto deg = row_mass(adj, m, 1.0);
    std::vector<double> ddeg(adj.n, 0.0);
    for (std::size_t u = 0; u < adj.n; ++u) {
      for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
        const std::size_t v = adj.col[e];
        const double t = -0.5 * dc[e] * c[e];
        ddeg[u] += t / deg[u];
        ddeg[v] += t / deg[v];
      }
    }
    for (std::size_t u = 0; u < adj.n; ++u) {
      for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
        if (adj.edge[e] < 0) continue;
        const std::size_t v = adj.col[e];
        dm[e] = dc[e] / std::sqrt(deg[u] * deg[v]) + ddeg[u];
      }
    }
    return dm;
  }
  const auto mass = row_mass(adj, m, 0.0);
  for (std::size_t u = 0; u < adj.n; ++u) {
    if (!(mass[u] > 0.0)) continue;
    double dot = 0.0;
    for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) dot += dc[e] * c[e];
    for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
      dm[e] = (dc[e] - dot) / mass[u];
    }
  }
  return dm;
}

DenseMat concat_cols(const DenseMat& a, const DenseMat& b) {
  DenseMat out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), row.begin());
    std::copy(b.row(r).begin(), b.row(r).end(),
              row.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

}  // namespace

std::vector<double> effective_coefficients(const Propagator& prop, const EdgeMod& mod) {
  const auto m = entry_multipliers(prop, mod);
  return coefficients_from_multipliers(prop, mod, m);
}

DenseMat propagate(const SparseAdj& adj, std::span<const double> coefs, const DenseMat& h) {
  if (h.rows() != adj.n) throw ShapeError("propagate: feature rows != node count");
  DenseMat out(adj.n, h.cols());
  for (std::size_t u = 0; u < adj.n; ++u) {
    auto row = out.row(u);
    for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
      const double c = coefs[e];
      const auto src = h.row(adj.col[e]);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += c * src[j];
    }
  }
  return out;
}

DenseMat forward(const Propagator& prop, const DenseMat& x, const ModelParams& params,
                 const EdgeMod& mod, ForwardCache& cache) {
  if (params.kind != prop.kind) throw ShapeError("forward: backbone kind mismatch");
  if (x.rows() != prop.adj.n || x.cols() != params.in_dim) {
    throw ShapeError("forward: features " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + " for model input " +
                     std::to_string(params.in_dim));
  }
  cache = ForwardCache{};
  cache.multipliers = entry_multipliers(prop, mod);
  cache.coefs = coefficients_from_multipliers(prop, mod, cache.multipliers);
  cache.mode = mod.mode;
  cache.renormalize = uses_renormalization(prop, mod);
  cache.prop = &prop;
  cache.fingerprint = params.fingerprint();

  DenseMat h = x;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    LayerCache lc;
    lc.aggregated = propagate(prop.adj, cache.coefs, h);
    const DenseMat& w = params.layer_weight(l).value;
    if (prop.kind == BackboneKind::Sage) {
      lc.pre = add_row_bias(matmul(concat_cols(h, lc.aggregated), w), params.layer_bias(l).value);
    } else {
      lc.pre = add_row_bias(matmul(lc.aggregated, w), params.layer_bias(l).value);
    }
    lc.input = std::move(h);
    h = relu(lc.pre);
    cache.layers.push_back(std::move(lc));
  }
  cache.hidden = h;
  cache.logits = add_row_bias(matmul(h, params.head_weight().value), params.head_bias().value);
  return cache.logits;
}

std::vector<double> backward(const ForwardCache& cache, const DenseMat& grad_logits,
                             ModelParams& params) {
  if (cache.prop == nullptr || cache.fingerprint != params.fingerprint()) {
    throw StaleCacheError("backward: cache does not match the current parameters");
  }
  if (!grad_logits.same_shape(cache.logits)) throw ShapeError("backward: grad_logits shape");
  const Propagator& prop = *cache.prop;
  const SparseAdj& adj = prop.adj;

  auto head = matmul_grad(cache.hidden, params.head_weight().value, grad_logits);
  {
    auto hw = params.head_weight().grad.data();
    for (std::size_t i = 0; i < hw.size(); ++i) hw[i] += head.b.data()[i];
    const DenseMat db = column_sums(grad_logits);
    auto hb = params.head_bias().grad.data();
    for (std::size_t i = 0; i < hb.size(); ++i) hb[i] += db.data()[i];
  }
  DenseMat dh = std::move(head.a);

  std::vector<double> dcoef(adj.nnz(), 0.0);
  for (std::size_t l = params.num_layers(); l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    const DenseMat dpre = relu_grad(lc.pre, dh);
    Param& w = params.layer_weight(l);
    Param& b = params.layer_bias(l);
    const DenseMat db = column_sums(dpre);
    for (std::size_t i = 0; i < db.size(); ++i) b.grad.data()[i] += db.data()[i];

    DenseMat dz;
    DenseMat d_input_direct;
    if (prop.kind == BackboneKind::Sage) {
      const DenseMat cat = concat_cols(lc.input, lc.aggregated);
      auto g = matmul_grad(cat, w.value, dpre);
      for (std::size_t i = 0; i < g.b.size(); ++i) w.grad.data()[i] += g.b.data()[i];
      const std::size_t din = lc.input.cols();
      d_input_direct = DenseMat(g.a.rows(), din);
      dz = DenseMat(g.a.rows(), din);
      for (std::size_t r = 0; r < g.a.rows(); ++r) {
        for (std::size_t c = 0; c < din; ++c) {
          d_input_direct(r, c) = g.a(r, c);
          dz(r, c) = g.a(r, din + c);
        }
      }
    } else {
      auto g = matmul_grad(lc.aggregated, w.value, dpre);
      for (std::size_t i = 0; i < g.b.size(); ++i) w.grad.data()[i] += g.b.data()[i];
      dz = std::move(g.a);
    }

    // aggregated[u] = Σ_e c_e · input[col_e]
    for (std::size_t u = 0; u < adj.n; ++u) {
      const auto dz_row = dz.row(u);
      for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
        const auto src = lc.input.row(adj.col[e]);
        double acc = 0.0;
        for (std::size_t j = 0; j < src.size(); ++j) acc += dz_row[j] * src[j];
        dcoef[e] += acc;
      }
    }
    if (l > 0) {
      DenseMat d_input(lc.input.rows(), lc.input.cols());
      for (std::size_t u = 0; u < adj.n; ++u) {
        const auto dz_row = dz.row(u);
        for (std::size_t e = adj.row_ptr[u]; e < adj.row_ptr[u + 1]; ++e) {
          auto dst = d_input.row(adj.col[e]);
          const double c = cache.coefs[e];
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += c * dz_row[j];
        }
      }
      if (!d_input_direct.empty()) {
        for (std::size_t i = 0; i < d_input.size(); ++i) {
          d_input.data()[i] += d_input_direct.data()[i];
        }
      }
      dh = std::move(d_input);
    }
  }

  std::vector<double> dw(prop.num_edges, 0.0);
  if (cache.mode == EdgeMode::Off) return dw;
  const auto dm = multiplier_grad(prop, cache.renormalize, cache.multipliers, cache.coefs, dcoef);
  const double sign = cache.mode == EdgeMode::Variant ? 1.0 : -1.0;
  for (std::size_t e = 0; e < adj.nnz(); ++e) {
    if (adj.edge[e] >= 0) dw[static_cast<std::size_t>(adj.edge[e])] += sign * dm[e];
  }
  return dw;
}

// ---- checkpoints -------------------------------------------------------------

std::string serialize_params(const ModelParams& params) {
  std::ostringstream out;
  out << "fairinv-params v1\n"
      << "kind " << to_string(params.kind) << '\n'
      << "dims " << params.in_dim << ' ' << params.hidden << ' ' << params.out_dim << '\n'
      << "tensors " << params.tensors.size() << '\n';
  char buf[32];
  for (const auto& t : params.tensors) {
    out << t.name << ' ' << t.value.rows() << ' ' << t.value.cols() << '\n';
    for (std::size_t r = 0; r < t.value.rows(); ++r) {
      for (std::size_t c = 0; c < t.value.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", t.value(r, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

ModelParams deserialize_params(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version, key;
  if (!(in >> magic >> version) || magic != "fairinv-params" || version != "v1") {
    throw DataError("not a fairinv-params v1 checkpoint");
  }
  ModelParams p;
  std::string kind;
  std::size_t count = 0;
  if (!(in >> key >> kind) || key != "kind") throw DataError("checkpoint: missing kind");
  p.kind = parse_backbone(kind);
  if (!(in >> key >> p.in_dim >> p.hidden >> p.out_dim) || key != "dims") {
    throw DataError("checkpoint: missing dims");
  }
  if (!(in >> key >> count) || key != "tensors") throw DataError("checkpoint: missing tensors");
  for (std::size_t i = 0; i < count; ++i) {
    Param t;
    std::size_t rows = 0, cols = 0;
    if (!(in >> t.name >> rows >> cols)) throw DataError("checkpoint: bad tensor header");
    std::vector<double> data(rows * cols);
    std::string tok;
    for (double& v : data) {
      if (!(in >> tok)) throw DataError("checkpoint: truncated tensor " + t.name);
      v = std::strtod(tok.c_str(), nullptr);
    }
    t.value = DenseMat(rows, cols, std::move(data));
    t.grad = DenseMat(rows, cols);
    p.tensors.push_back(std::move(t));
  }
  const std::size_t expected = p.kind == BackboneKind::Sage ? 6 : 4;
  if (p.tensors.size() != expected) throw DataError("checkpoint: wrong tensor count");
  return p;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_params(params));
}

ModelParams load_params(const std::filesystem::path& path) {
  return deserialize_params(read_file(path));
}

}  // namespace fairinv

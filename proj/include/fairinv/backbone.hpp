#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairinv/graph.hpp"
#include "fairinv/tensor.hpp"

namespace fairinv {

enum class BackboneKind { Gcn, Gin, Sage };

std::string to_string(BackboneKind kind);
BackboneKind parse_backbone(const std::string& name);

/// How per-edge scores w modulate messages: m = w (Variant), m = 1 − w
/// (Invariant) or m = 1 (Off). Self-loop messages are never modulated.
enum class EdgeMode { Off, Variant, Invariant };

std::string to_string(EdgeMode mode);
EdgeMode parse_edge_mode(const std::string& name);

struct Param {
  std::string name;
  DenseMat value;
  DenseMat grad;

  void zero_grad() { grad.fill(0.0); }
};

/// Backbone layers followed by a linear head. Layer count: GCN 1, GIN 1,
/// SAGE 2. GCN/GIN weights are in×hidden; SAGE weights act on the
/// concatenation [self ‖ neighbour mean] and are 2·in×hidden.
struct ModelParams {
  BackboneKind kind = BackboneKind::Gcn;
  std::size_t in_dim = 0;
  std::size_t hidden = 0;
  std::size_t out_dim = 0;
  /// W_1, b_1, [W_2, b_2,] W_c, b_c
  std::vector<Param> tensors;

  /// Glorot-uniform weights (layer order, then head), zero biases.
  static ModelParams init(BackboneKind kind, std::size_t in_dim, std::size_t hidden,
                          std::size_t out_dim, Rng& rng);

  std::size_t num_layers() const { return (tensors.size() - 2) / 2; }
  Param& layer_weight(std::size_t l) { return tensors[2 * l]; }
  Param& layer_bias(std::size_t l) { return tensors[2 * l + 1]; }
  const Param& layer_weight(std::size_t l) const { return tensors[2 * l]; }
  const Param& layer_bias(std::size_t l) const { return tensors[2 * l + 1]; }
  Param& head_weight() { return tensors[tensors.size() - 2]; }
  Param& head_bias() { return tensors.back(); }
  const Param& head_weight() const { return tensors[tensors.size() - 2]; }
  const Param& head_bias() const { return tensors.back(); }

  std::vector<Param*> params();
  void zero_grad();
  /// FNV-1a over all parameter values; forward caches record it.
  std::uint64_t fingerprint() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct EdgeMod {
  EdgeMode mode = EdgeMode::Off;
  /// One score per undirected edge, aligned with Graph::edges().
  std::vector<double> w;
  /// Re-normalize the propagation coefficients through the multipliers
  /// (GCN: degrees become 1 + Σ m; SAGE: mean divides by Σ m; GIN: no-op).
  bool renormalize = false;

  static EdgeMod off() { return {}; }
  static EdgeMod variant(std::vector<double> w) { return {EdgeMode::Variant, std::move(w), false}; }
  static EdgeMod invariant(std::vector<double> w) {
    return {EdgeMode::Invariant, std::move(w), false};
  }
};

/// Backbone-specific propagation structure: GCN uses the normalized adjacency
/// with self-loops; GIN sums self + neighbours (ε = 0); SAGE averages
/// neighbours only (isolated node → zero mean).
struct Propagator {
  BackboneKind kind = BackboneKind::Gcn;
  SparseAdj adj;
  std::size_t num_edges = 0;
};

Propagator make_propagator(const Graph& graph, BackboneKind kind);

/// Per-entry multipliers m for `mod` (1 on self-loops).
std::vector<double> entry_multipliers(const Propagator& prop, const EdgeMod& mod);
/// Effective propagation coefficients after modulation.
std::vector<double> effective_coefficients(const Propagator& prop, const EdgeMod& mod);

struct LayerCache {
  DenseMat input;
  DenseMat aggregated;
  DenseMat pre;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<double> multipliers;
  std::vector<double> coefs;
  DenseMat hidden;  // penultimate representation
  DenseMat logits;
  EdgeMode mode = EdgeMode::Off;
  bool renormalize = false;
  const Propagator* prop = nullptr;
  std::uint64_t fingerprint = 0;
};

/// Full-graph forward pass; returns logits (n × out_dim) and fills `cache`.
DenseMat forward(const Propagator& prop, const DenseMat& x, const ModelParams& params,
                 const EdgeMod& mod, ForwardCache& cache);

/// Accumulates parameter gradients into `params` and returns ∂/∂w for every
/// undirected edge (both directed entries summed; zeros when mode is Off).
std::vector<double> backward(const ForwardCache& cache, const DenseMat& grad_logits,
                             ModelParams& params);

/// Propagation-only helper: out = C·h with the given per-entry coefficients.
DenseMat propagate(const SparseAdj& adj, std::span<const double> coefs, const DenseMat& h);

// ---- checkpoints -------------------------------------------------------------
//
// Text container:
//   fairinv-params v1
//   kind <gcn|gin|sage>
//   dims <in> <hidden> <out>
//   tensors <count>
//   then per tensor: "<name> <rows> <cols>" followed by one line per row of
//   space-separated values printed with 17 significant digits (exact reload).

std::string serialize_params(const ModelParams& params);
ModelParams deserialize_params(const std::string& text);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace fairinv

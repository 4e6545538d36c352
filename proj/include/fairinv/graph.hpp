#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairinv/tensor.hpp"

namespace fairinv {

using SensitiveMap = std::map<std::string, std::vector<int>>;
using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Undirected, unweighted attributed graph stored as symmetric CSR.
///
/// Every undirected edge {u, v} appears as the two directed entries (u, v)
/// and (v, u); `entry_edge()` maps a stored entry to the index of its
/// undirected edge in `edges()` (canonical orientation u < v, sorted).
/// Self-loops and duplicates in the input are dropped.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t n, const EdgeList& edge_list, DenseMat features, std::vector<int> labels,
        SensitiveMap sensitive = {}, std::vector<std::string> feature_names = {});

  std::size_t num_nodes() const { return n_; }
  std::size_t num_features() const { return features_.cols(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_entries() const { return col_idx_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<std::size_t>& entry_edge() const { return entry_edge_; }
  const EdgeList& edges() const { return edges_; }
  std::size_t degree(std::size_t u) const { return row_ptr_[u + 1] - row_ptr_[u]; }

  const DenseMat& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const SensitiveMap& sensitive() const { return sensitive_; }
  const std::vector<int>& sensitive(const std::string& name) const;
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  /// Sensitive attributes that were appended to the features.
  const std::vector<std::string>& appended() const { return appended_; }

  /// Non-empty, non-comment lines in the edge file this graph was loaded
  /// from (0 for generated graphs).
  std::size_t raw_edge_lines() const { return raw_edge_lines_; }
  void set_raw_edge_lines(std::size_t n) { raw_edge_lines_ = n; }

  /// Full scan: (u,v) stored ⇔ (v,u) stored, sorted rows, no self-loops,
  /// no duplicates.
  bool check_structure() const;

  /// Copy with the features replaced (same structure, labels, sensitive data).
  Graph with_features(DenseMat features, std::vector<std::string> feature_names,
                      std::vector<std::string> appended) const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<std::size_t> entry_edge_;
  EdgeList edges_;
  DenseMat features_;
  std::vector<int> labels_;
  SensitiveMap sensitive_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> appended_;
  std::size_t raw_edge_lines_ = 0;
};

/// Sparse propagation matrix with self-loop entries. `edge[e]` is the
/// undirected edge index of entry e, or -1 for a self-loop.
struct SparseAdj {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col;
  std::vector<std::ptrdiff_t> edge;
  std::vector<double> coef;
  /// Degree before self-loops.
  std::vector<std::size_t> degree;

  std::size_t nnz() const { return col.size(); }
};

/// Symmetric GCN normalization with self-loops:
/// â_uv = (1+d_u)^{-1/2} (1+d_v)^{-1/2}.
using NormAdj = SparseAdj;
NormAdj gcn_normalize(const Graph& graph);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct SplitRatios {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
};

/// Label-stratified random split. Within each class the nodes are permuted
/// by `seed`, then sliced contiguously: floor(ratio·n_c) to train and val,
/// the remainder (capped by the test ratio) to test.
Split split_nodes(const Graph& graph, SplitRatios ratios, std::uint64_t seed);

struct LoadOptions {
  std::string label_column;
  std::vector<std::string> sensitive_columns;
  /// Columns ignored entirely (e.g. an identifier).
  std::vector<std::string> drop_columns;
  /// Sensitive columns binarized at their median (value > median → 1).
  std::vector<std::string> binarize_at_median;
  bool standardize = true;
};

/// Loads a header-bearing numeric node CSV and a whitespace-separated edge
/// list. Sensitive columns are removed from the features; features are
/// standardized column-wise (constant columns → 0).
Graph load_dataset(const std::filesystem::path& node_file, const std::filesystem::path& edge_file,
                   const LoadOptions& options);

/// Adds the standardized values of a sensitive attribute as one feature column.
Graph append_sensitive(const Graph& graph, const std::string& attr_name);

/// Canonical save: <stem>.nodes.csv, <stem>.edges.txt, <stem>.manifest.
void save_graph(const Graph& graph, const std::filesystem::path& dir, const std::string& stem);
/// Exact inverse of save_graph (no re-standardization).
Graph load_saved_graph(const std::filesystem::path& dir, const std::string& stem);

// ---- synthetic structural causal model ------------------------------------

/// Plants both bias pathways: S → Y through the label logit, and S → G
/// through leaked feature directions and sensitive homophily in the edges.
struct ScmConfig {
  std::size_t n = 2000;
  std::size_t d = 16;
  double beta_sy = 0.6;
  double beta_sg_feat = 0.4;
  double beta_sg_homo = 0.6;
  double avg_degree = 10.0;
  std::uint64_t seed = 0;
  /// Number of independently planted binary sensitive attributes.
  std::size_t num_sensitive = 1;

  // Calibration knobs beyond the causal strengths.
  double merit_scale = 2.0;       // logit weight of the latent merit
  double label_bias_scale = 0.5;  // logit shift per unit beta_sy
  double label_offset = 0.0;      // constant added to the label logit
  double signal_strength = 0.7;   // merit component in the features
  double leak_scale = 2.0;        // leak component per unit beta_sg_feat
  double noise = 1.0;             // isotropic feature noise std
  double label_homophily = 1.0;   // same-label edge boost (1 + this)

  void validate() const;
};

struct ScmGraph {
  Graph graph;
  /// Planted sensitive attributes, same order as `sensitive_names`.
  std::vector<std::vector<int>> planted;
  std::vector<std::string> sensitive_names;
  /// Latent merit driving the label.
  std::vector<double> merit;
  /// Unit feature direction carrying the merit signal.
  std::vector<double> signal_direction;
  /// Edge-probability scale found by the degree calibration.
  double edge_scale = 0.0;
};

ScmGraph scm_generate(const ScmConfig& cfg);

/// Attribute names used by scm_generate: "S" for one attribute, "S0", "S1", …
std::string scm_sensitive_name(std::size_t index, std::size_t count);

}  // namespace fairinv

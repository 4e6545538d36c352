#include "fairinv/graph.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Population mean / std standardization; constant columns become 0.
void standardize_columns(DenseMat& x) {
  const std::size_t n = x.rows();
  if (n == 0) return;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t r = 0; r < n; ++r) {
      x(r, c) = sd > 1e-12 ? (x(r, c) - mean) / sd : 0.0;
    }
  }
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

EdgeList read_edge_file(const std::filesystem::path& path, std::size_t n, std::size_t& raw_lines) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file " + path.string());
  EdgeList edges;
  raw_lines = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    ++raw_lines;
    std::istringstream ls(t);
    long long u = 0, v = 0;
    std::string extra;
    if (!(ls >> u >> v) || (ls >> extra)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": malformed edge line '" + t + "'");
    }
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": dangling edge endpoint (" +
                      std::to_string(u) + ", " + std::to_string(v) + ") with " +
                      std::to_string(n) + " nodes");
    }
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  return edges;
}

}  // namespace

// ---- Graph -----------------------------------------------------------------

Graph::Graph(std::size_t n, const EdgeList& edge_list, DenseMat features, std::vector<int> labels,
             SensitiveMap sensitive, std::vector<std::string> feature_names)
    : n_(n),
      features_(std::move(features)),
      labels_(std::move(labels)),
      sensitive_(std::move(sensitive)),
      feature_names_(std::move(feature_names)) {
  if (features_.rows() != n_) {
    throw ShapeError("Graph: feature rows " + std::to_string(features_.rows()) + " != n " +
                     std::to_string(n_));
  }
  if (labels_.size() != n_) throw ShapeError("Graph: label count != n");
  for (const auto& [name, values] : sensitive_) {
    if (values.size() != n_) throw ShapeError("Graph: sensitive '" + name + "' length != n");
  }
  if (feature_names_.empty()) {
    for (std::size_t c = 0; c < features_.cols(); ++c) feature_names_.push_back("x" + std::to_string(c));
  }
  if (feature_names_.size() != features_.cols()) throw ShapeError("Graph: feature name count");

  edges_.reserve(edge_list.size());
  for (auto [u, v] : edge_list) {
    if (u >= n_ || v >= n_) {
      throw DataError("Graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                      ") outside " + std::to_string(n_) + " nodes");
    }
    if (u == v) continue;
    edges_.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  std::vector<std::size_t> deg(n_, 0);
  for (auto [u, v] : edges_) {
    ++deg[u];
    ++deg[v];
  }
  row_ptr_.assign(n_ + 1, 0);
  for (std::size_t u = 0; u < n_; ++u) row_ptr_[u + 1] = row_ptr_[u] + deg[u];
  col_idx_.assign(row_ptr_[n_], 0);
  entry_edge_.assign(row_ptr_[n_], 0);
  std::vector<std::size_t> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> rows(n_);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [u, v] = edges_[e];
    rows[u].emplace_back(v, e);
    rows[v].emplace_back(u, e);
  }
  for (std::size_t u = 0; u < n_; ++u) {
    std::sort(rows[u].begin(), rows[u].end());
    for (const auto& [v, e] : rows[u]) {
      col_idx_[cursor[u]] = v;
      entry_edge_[cursor[u]] = e;
      ++cursor[u];
    }
  }
}

const std::vector<int>& Graph::sensitive(const std::string& name) const {
  const auto it = sensitive_.find(name);
  if (it == sensitive_.end()) throw DataError("unknown sensitive attribute '" + name + "'");
  return it->second;
}

bool Graph::check_structure() const {
  if (row_ptr_.size() != n_ + 1 || row_ptr_.back() != col_idx_.size()) return false;
  if (col_idx_.size() != 2 * edges_.size()) return false;
  for (std::size_t u = 0; u < n_; ++u) {
    for (std::size_t k = row_ptr_[u]; k < row_ptr_[u + 1]; ++k) {
      const std::size_t v = col_idx_[k];
      if (v == u || v >= n_) return false;
      if (k > row_ptr_[u] && col_idx_[k - 1] >= v) return false;
      const auto begin = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[v]);
      const auto end = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[v + 1]);
      const auto it = std::lower_bound(begin, end, u);
      if (it == end || *it != u) return false;
      if (entry_edge_[static_cast<std::size_t>(it - col_idx_.begin())] != entry_edge_[k]) {
        return false;
      }
      const auto [a, b] = edges_[entry_edge_[k]];
      if (a != std::min(u, v) || b != std::max(u, v)) return false;
    }
  }
  return true;
}

Graph Graph::with_features(DenseMat features, std::vector<std::string> feature_names,
                           std::vector<std::string> appended) const {
  if (features.rows() != n_) throw ShapeError("with_features: row count");
  if (feature_names.size() != features.cols()) throw ShapeError("with_features: name count");
  Graph g = *this;
  g.features_ = std::move(features);
  g.feature_names_ = std::move(feature_names);
  g.appended_ = std::move(appended);
  return g;
}

// ---- normalization ---------------------------------------------------------

NormAdj gcn_normalize(const Graph& graph) {
  const std::size_t n = graph.num_nodes();
  NormAdj adj;
  adj.n = n;
  adj.degree.resize(n);
  for (std::size_t u = 0; u < n; ++u) adj.degree[u] = graph.degree(u);
  adj.row_ptr.assign(n + 1, 0);
  adj.col.reserve(graph.num_entries() + n);
  adj.edge.reserve(graph.num_entries() + n);
  adj.coef.reserve(graph.num_entries() + n);
  const auto& rp = graph.row_ptr();
  const auto& ci = graph.col_idx();
  const auto& ee = graph.entry_edge();
  auto inv_sqrt = [&](std::size_t u) { return 1.0 / std::sqrt(1.0 + static_cast<double>(adj.degree[u])); };
  for (std::size_t u = 0; u < n; ++u) {
    bool self_done = false;
    for (std::size_t k = rp[u]; k <= rp[u + 1]; ++k) {
      const bool at_end = k == rp[u + 1];
      if (!self_done && (at_end || ci[k] > u)) {
        adj.col.push_back(u);
        adj.edge.push_back(-1);
        adj.coef.push_back(1.0 / (1.0 + static_cast<double>(adj.degree[u])));
        self_done = true;
      }
      if (at_end) break;
      const std::size_t v = ci[k];
      adj.col.push_back(v);
      adj.edge.push_back(static_cast<std::ptrdiff_t>(ee[k]));
      adj.coef.push_back(inv_sqrt(u) * inv_sqrt(v));
    }
    adj.row_ptr[u + 1] = adj.col.size();
  }
  return adj;
}

// ---- splitting -------------------------------------------------------------

Split split_nodes(const Graph& graph, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      ratios.train + ratios.val + ratios.test > 1.0 + 1e-9) {
    throw ConfigError("split ratios must be positive and sum to at most 1");
  }
  const std::size_t n = graph.num_nodes();
  const auto& y = graph.labels();

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t v = 0; v < n; ++v) by_class[y[v]].push_back(v);
  if (by_class.size() < 2) {
    throw DataError("split_nodes: graph has a single label class; stratified split impossible");
  }

  // Permute inside each class, then interleave classes by relative position
  // so that every contiguous slice is (approximately) stratified.
  Rng rng(seed);
  struct Keyed {
    double key;
    int cls;
    std::size_t node;
  };
  std::vector<Keyed> order;
  order.reserve(n);
  for (auto& [cls, nodes] : by_class) {
    rng.shuffle(nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      order.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(nodes.size()), cls,
                       nodes[i]});
    }
  }
  std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });

  const auto nd = static_cast<double>(n);
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * nd));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * nd));
  std::size_t n_test = n - n_train - n_val;
  if (ratios.train + ratios.val + ratios.test < 1.0 - 1e-9) {
    n_test = std::min(n_test, static_cast<std::size_t>(std::floor(ratios.test * nd)));
  }

  Split split;
  for (std::size_t i = 0; i < n_train + n_val + n_test; ++i) {
    auto& target = i < n_train ? split.train : (i < n_train + n_val ? split.val : split.test);
    target.push_back(order[i].node);
  }
  auto check = [&](std::vector<std::size_t>& part, const char* name) {
    std::sort(part.begin(), part.end());
    bool has0 = false, has1 = false;
    for (std::size_t v : part) (y[v] ? has1 : has0) = true;
    if (!has0 || !has1) {
      throw DataError(std::string("split_nodes: ") + name +
                      " split lacks a class at the requested ratios");
    }
  };
  check(split.train, "train");
  check(split.val, "val");
  check(split.test, "test");
  return split;
}

// ---- loading / saving ------------------------------------------------------

Graph load_dataset(const std::filesystem::path& node_file, const std::filesystem::path& edge_file,
                   const LoadOptions& options) {
  std::ifstream in(node_file);
  if (!in) throw DataError("cannot open node file " + node_file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(node_file.string() + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(node_file.string() + ": missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = column_of(options.label_column);
  std::vector<std::size_t> sens_cols;
  for (const auto& s : options.sensitive_columns) sens_cols.push_back(column_of(s));
  for (const auto& s : options.drop_columns) column_of(s);
  for (const auto& s : options.binarize_at_median) {
    if (!contains(options.sensitive_columns, s)) {
      throw ConfigError("binarize column '" + s + "' is not a sensitive column");
    }
  }

  std::vector<std::size_t> feature_cols;
  std::vector<std::string> feature_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_col || contains(options.drop_columns, header[c]) ||
        std::find(sens_cols.begin(), sens_cols.end(), c) != sens_cols.end()) {
      continue;
    }
    feature_cols.push_back(c);
    feature_names.push_back(header[c]);
  }

  std::vector<double> feats;
  std::vector<int> labels;
  std::vector<std::vector<double>> sens_raw(sens_cols.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = node_file.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw DataError(where + ": malformed row (" + std::to_string(cells.size()) + " cells, " +
                      std::to_string(header.size()) + " expected)");
    }
    auto number = [&](std::size_t c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw DataError(where + ": malformed row, non-numeric cell '" + cells[c] + "' in column '" +
                        header[c] + "'");
      }
      return v;
    };
    for (std::size_t c : feature_cols) feats.push_back(number(c));
    const double lab = number(label_col);
    if (lab != 0.0 && lab != 1.0) {
      throw DataError(where + ": non-binary label " + cells[label_col]);
    }
    labels.push_back(static_cast<int>(lab));
    for (std::size_t j = 0; j < sens_cols.size(); ++j) sens_raw[j].push_back(number(sens_cols[j]));
  }
  const std::size_t n = labels.size();
  if (n == 0) throw DataError(node_file.string() + ": no node rows");

  SensitiveMap sensitive;
  for (std::size_t j = 0; j < sens_cols.size(); ++j) {
    const std::string& name = options.sensitive_columns[j];
    std::vector<int> groups(n);
    if (contains(options.binarize_at_median, name)) {
      std::vector<double> sorted = sens_raw[j];
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2),
                       sorted.end());
      double median = sorted[n / 2];
      if (n % 2 == 0) {
        const double lower =
            *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2));
        median = 0.5 * (median + lower);
      }
      for (std::size_t v = 0; v < n; ++v) groups[v] = sens_raw[j][v] > median ? 1 : 0;
    } else {
      for (std::size_t v = 0; v < n; ++v) {
        const double s = sens_raw[j][v];
        if (s < 0 || s != std::floor(s) || s > 1e6) {
          throw DataError(node_file.string() + ": sensitive column '" + name +
                          "' must hold small non-negative integers");
        }
        groups[v] = static_cast<int>(s);
      }
    }
    sensitive.emplace(name, std::move(groups));
  }

  DenseMat x(n, feature_cols.size(), std::move(feats));
  if (options.standardize) standardize_columns(x);

  std::size_t raw_lines = 0;
  const EdgeList edges = read_edge_file(edge_file, n, raw_lines);
  Graph g(n, edges, std::move(x), std::move(labels), std::move(sensitive), std::move(feature_names));
  g.set_raw_edge_lines(raw_lines);
  return g;
}

Graph append_sensitive(const Graph& graph, const std::string& attr_name) {
  const auto& values = graph.sensitive(attr_name);
  if (contains(graph.appended(), attr_name)) {
    throw DataError("sensitive attribute '" + attr_name + "' is already appended");
  }
  const std::size_t n = graph.num_nodes();
  const std::size_t d = graph.num_features();
  DenseMat col(n, 1);
  for (std::size_t v = 0; v < n; ++v) col(v, 0) = static_cast<double>(values[v]);
  standardize_columns(col);
  DenseMat x(n, d + 1);
  for (std::size_t v = 0; v < n; ++v) {
    std::copy_n(graph.features().row(v).begin(), d, x.row(v).begin());
    x(v, d) = col(v, 0);
  }
  auto names = graph.feature_names();
  names.push_back("sens:" + attr_name);
  auto appended = graph.appended();
  appended.push_back(attr_name);
  return graph.with_features(std::move(x), std::move(names), std::move(appended));
}

void save_graph(const Graph& graph, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> sens_names;
  for (const auto& [name, values] : graph.sensitive()) sens_names.push_back(name);

  std::ostringstream nodes;
  {
    std::vector<std::string> header = graph.feature_names();
    header.emplace_back("label");
    for (const auto& s : sens_names) header.push_back("sens." + s);
    nodes << join(header, ',') << '\n';
    const DenseMat& x = graph.features();
    for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
      for (std::size_t c = 0; c < x.cols(); ++c) nodes << fmt_double(x(v, c)) << ',';
      nodes << graph.labels()[v];
      for (const auto& s : sens_names) nodes << ',' << graph.sensitive(s)[v];
      nodes << '\n';
    }
  }
  std::ostringstream edges;
  for (const auto& [u, v] : graph.edges()) edges << u << ' ' << v << '\n';

  std::ostringstream manifest;
  manifest << "format = fairinv-graph/1\n"
           << "n = " << graph.num_nodes() << '\n'
           << "d = " << graph.num_features() << '\n'
           << "undirected_edges = " << graph.num_edges() << '\n'
           << "raw_edge_lines = " << graph.raw_edge_lines() << '\n'
           << "features = " << join(graph.feature_names(), ',') << '\n'
           << "label = label\n"
           << "sensitive = " << join(sens_names, ',') << '\n'
           << "appended = " << join(graph.appended(), ',') << '\n'
           << "standardized = 1\n";

  write_file_atomic(dir / (stem + ".nodes.csv"), nodes.str());
  write_file_atomic(dir / (stem + ".edges.txt"), edges.str());
  write_file_atomic(dir / (stem + ".manifest"), manifest.str());
}

Graph load_saved_graph(const std::filesystem::path& dir, const std::string& stem) {
  std::ifstream mf(dir / (stem + ".manifest"));
  if (!mf) throw DataError("cannot open manifest for '" + stem + "' in " + dir.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(mf, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (kv["format"] != "fairinv-graph/1") throw DataError("unsupported graph manifest format");

  LoadOptions opts;
  opts.label_column = "label";
  const auto sens_names = split_list(kv["sensitive"], ',');
  for (const auto& s : sens_names) opts.sensitive_columns.push_back("sens." + s);
  opts.standardize = false;
  Graph raw = load_dataset(dir / (stem + ".nodes.csv"), dir / (stem + ".edges.txt"), opts);

  SensitiveMap sensitive;
  for (const auto& s : sens_names) sensitive.emplace(s, raw.sensitive("sens." + s));
  EdgeList edges = raw.edges();
  DenseMat x = raw.features();
  std::vector<int> labels = raw.labels();
  Graph g(raw.num_nodes(), edges, std::move(x), std::move(labels), std::move(sensitive),
          raw.feature_names());
  g = g.with_features(g.features(), g.feature_names(), split_list(kv["appended"], ','));
  g.set_raw_edge_lines(kv.count("raw_edge_lines") ? std::stoull(kv["raw_edge_lines"]) : 0);
  if (std::to_string(g.num_nodes()) != kv["n"] || std::to_string(g.num_features()) != kv["d"]) {
    throw DataError("graph files disagree with manifest n/d");
  }
  return g;
}

}  // namespace fairinv

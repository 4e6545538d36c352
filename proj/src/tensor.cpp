#include "fairinv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fairinv/error.hpp"

namespace fairinv {

namespace {

std::string shape_str(const DenseMat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const DenseMat& a, const DenseMat& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
  }
}

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// Largest double below 1 and smallest normal double; sigmoid outputs are
// clamped into this range so they stay strictly inside (0, 1).
constexpr double kSigmoidHi = 1.0 - 0x1p-53;
constexpr double kSigmoidLo = std::numeric_limits<double>::min();

}  // namespace

// ---- DenseMat --------------------------------------------------------------

DenseMat::DenseMat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMat::DenseMat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("DenseMat: data length " + std::to_string(data_.size()) +
                     " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

DenseMat DenseMat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("DenseMat::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMat(r, c, std::move(data));
}

DenseMat DenseMat::identity(std::size_t n) {
  DenseMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMat DenseMat::column(std::span<const double> values) {
  return DenseMat(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void DenseMat::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool DenseMat::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---- Rng -------------------------------------------------------------------

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t x = seed ^ (0xd1b54a32d192ed03ULL * (stream_id + 1));
  return Rng(splitmix64(x));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::size_t Rng::below(std::size_t n) {
  // Lemire's multiply-shift; bias is < n / 2^64, irrelevant at our sizes.
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
  return static_cast<std::size_t>(prod >> 64);
}

// ---- kernels ---------------------------------------------------------------

DenseMat matmul(const DenseMat& a, const DenseMat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  }
  DenseMat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

DenseMat matmul_tn(const DenseMat& a, const DenseMat& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
  }
  DenseMat out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

DenseMat matmul_nt(const DenseMat& a, const DenseMat& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
  }
  DenseMat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

MatmulGrad matmul_grad(const DenseMat& a, const DenseMat& b, const DenseMat& grad_out) {
  if (a.cols() != b.rows() || grad_out.rows() != a.rows() || grad_out.cols() != b.cols()) {
    throw ShapeError("matmul_grad: a " + shape_str(a) + ", b " + shape_str(b) + ", grad " +
                     shape_str(grad_out));
  }
  return {matmul_nt(grad_out, b), matmul_tn(a, grad_out)};
}

double sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    y = e / (1.0 + e);
  }
  return std::clamp(y, kSigmoidLo, kSigmoidHi);
}

DenseMat sigmoid(const DenseMat& x) {
  DenseMat y(x.rows(), x.cols());
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < xd.size(); ++i) yd[i] = sigmoid(xd[i]);
  return y;
}

DenseMat sigmoid_grad(const DenseMat& y, const DenseMat& grad_out) {
  require_same_shape(y, grad_out, "sigmoid_grad");
  DenseMat g(y.rows(), y.cols());
  auto gd = g.data();
  auto yd = y.data();
  auto od = grad_out.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = yd[i] * (1.0 - yd[i]) * od[i];
  return g;
}

DenseMat relu(const DenseMat& x) {
  DenseMat y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

DenseMat relu_grad(const DenseMat& pre, const DenseMat& grad_out) {
  require_same_shape(pre, grad_out, "relu_grad");
  DenseMat g = grad_out;
  auto gd = g.data();
  auto pd = pre.data();
  for (std::size_t i = 0; i < gd.size(); ++i) {
    if (!(pd[i] > 0.0)) gd[i] = 0.0;
  }
  return g;
}

DenseMat softmax_rows(const DenseMat& x) {
  DenseMat y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return y;
}

DenseMat softmax_rows_grad(const DenseMat& y, const DenseMat& grad_out) {
  require_same_shape(y, grad_out, "softmax_rows_grad");
  DenseMat g(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const auto yr = y.row(r);
    const auto gr = grad_out.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
    auto out = g.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (gr[c] - dot);
  }
  return g;
}

double bce(double logit, int y) {
  return std::max(logit, 0.0) - logit * static_cast<double>(y) +
         std::log1p(std::exp(-std::abs(logit)));
}

double bce_grad(double logit, int y) { return sigmoid(logit) - static_cast<double>(y); }

DenseMat add_row_bias(const DenseMat& x, const DenseMat& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row_bias: x " + shape_str(x) + ", bias " + shape_str(bias));
  }
  DenseMat y = x;
  const auto b = bias.row(0);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return y;
}

DenseMat column_sums(const DenseMat& x) {
  DenseMat s(1, x.cols());
  auto out = s.row(0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  return s;
}

DenseMat concat_pairs(const DenseMat& h,
                      std::span<const std::pair<std::size_t, std::size_t>> edges) {
  const std::size_t w = h.cols();
  DenseMat out(edges.size(), 2 * w);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [u, v] = edges[e];
    if (u >= h.rows() || v >= h.rows()) {
      throw std::out_of_range("concat_pairs: edge (" + std::to_string(u) + ", " +
                              std::to_string(v) + ") outside " + std::to_string(h.rows()) +
                              " rows");
    }
    auto row = out.row(e);
    std::copy_n(h.row(u).begin(), w, row.begin());
    std::copy_n(h.row(v).begin(), w, row.begin() + static_cast<std::ptrdiff_t>(w));
  }
  return out;
}

DenseMat concat_pairs_grad(std::size_t n_rows, std::size_t h_cols,
                           std::span<const std::pair<std::size_t, std::size_t>> edges,
                           const DenseMat& grad_out) {
  if (grad_out.rows() != edges.size() || grad_out.cols() != 2 * h_cols) {
    throw ShapeError("concat_pairs_grad: grad " + shape_str(grad_out));
  }
  DenseMat g(n_rows, h_cols);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [u, v] = edges[e];
    const auto row = grad_out.row(e);
    auto gu = g.row(u);
    auto gv = g.row(v);
    for (std::size_t c = 0; c < h_cols; ++c) {
      gu[c] += row[c];
      gv[c] += row[h_cols + c];
    }
  }
  return g;
}

DenseMat glorot_init(Rng& rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ShapeError("glorot_init: empty shape");
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  DenseMat w(rows, cols);
  for (double& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

DenseMat fd_gradient(const ScalarFn& f, const DenseMat& x, double step) {
  DenseMat probe = x;
  DenseMat grad(x.rows(), x.cols());
  auto pd = probe.data();
  auto gd = grad.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + step;
    const double up = f(probe);
    pd[i] = orig - step;
    const double down = f(probe);
    pd[i] = orig;
    gd[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double fd_check(const ScalarFn& f, const DenseMat& x, const DenseMat& analytic, double step) {
  require_same_shape(x, analytic, "fd_check");
  const DenseMat fd = fd_gradient(f, x, step);
  double worst = 0.0;
  auto fdd = fd.data();
  auto ad = analytic.data();
  for (std::size_t i = 0; i < fdd.size(); ++i) {
    const double denom = std::max({1.0, std::abs(fdd[i]), std::abs(ad[i])});
    worst = std::max(worst, std::abs(fdd[i] - ad[i]) / denom);
  }
  return worst;
}

}  // namespace fairinv

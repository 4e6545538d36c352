#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace fairinv {

/// Row-major dense matrix of doubles. The universal tensor for activations,
/// weights and gradients.
class DenseMat {
 public:
  DenseMat() = default;
  DenseMat(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMat(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseMat identity(std::size_t n);
  static DenseMat column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double value);
  bool same_shape(const DenseMat& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  friend bool operator==(const DenseMat&, const DenseMat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// xoshiro256** seeded through splitmix64. The draw sequence depends only on
/// the seed, so runs agree across platforms and compilers. Normal variates use
/// the Box-Muller transform (no std:: distributions, whose output is
/// implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream derived from (seed, stream); used for per-round and
  /// per-seed RNGs.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  bool bernoulli(double p);
  std::size_t below(std::size_t n);  // uniform in [0, n)

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t s_[4];
};

// ---- dense kernels ---------------------------------------------------------

DenseMat matmul(const DenseMat& a, const DenseMat& b);
/// aᵀ·b without materializing the transpose.
DenseMat matmul_tn(const DenseMat& a, const DenseMat& b);
/// a·bᵀ without materializing the transpose.
DenseMat matmul_nt(const DenseMat& a, const DenseMat& b);

struct MatmulGrad {
  DenseMat a;
  DenseMat b;
};
/// grad_a = grad_out·bᵀ, grad_b = aᵀ·grad_out.
MatmulGrad matmul_grad(const DenseMat& a, const DenseMat& b, const DenseMat& grad_out);

double sigmoid(double x);
DenseMat sigmoid(const DenseMat& x);
/// Takes the sigmoid *output* y.
DenseMat sigmoid_grad(const DenseMat& y, const DenseMat& grad_out);

DenseMat relu(const DenseMat& x);
/// Takes the relu *input*.
DenseMat relu_grad(const DenseMat& pre, const DenseMat& grad_out);

DenseMat softmax_rows(const DenseMat& x);
/// Takes the softmax *output* y.
DenseMat softmax_rows_grad(const DenseMat& y, const DenseMat& grad_out);

/// Binary cross-entropy on a logit, log-sum-exp form.
double bce(double logit, int y);
double bce_grad(double logit, int y);

/// x + 1·bᵀ for a 1×cols bias row.
DenseMat add_row_bias(const DenseMat& x, const DenseMat& bias);
/// Column sums as a 1×cols row (the bias gradient).
DenseMat column_sums(const DenseMat& x);

/// Row e = [h_u ‖ h_v] for edge e = (u, v).
DenseMat concat_pairs(const DenseMat& h,
                      std::span<const std::pair<std::size_t, std::size_t>> edges);
/// Scatter-add of the per-edge gradient back onto h.
DenseMat concat_pairs_grad(std::size_t n_rows, std::size_t h_cols,
                           std::span<const std::pair<std::size_t, std::size_t>> edges,
                           const DenseMat& grad_out);

DenseMat glorot_init(Rng& rng, std::size_t rows, std::size_t cols);

// ---- gradient checking -----------------------------------------------------

using ScalarFn = std::function<double(const DenseMat&)>;

/// Central differences (step 1e-5) per coordinate. Returns the max over
/// coordinates of |fd − analytic| / max(1, |fd|, |analytic|).
double fd_check(const ScalarFn& f, const DenseMat& x, const DenseMat& analytic,
                double step = 1e-5);

/// Central-difference gradient of f at x.
DenseMat fd_gradient(const ScalarFn& f, const DenseMat& x, double step = 1e-5);

}  // namespace fairinv

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hcln/common.hpp"
#include "hcln/reduce.hpp"
#include "hcln/rng.hpp"

namespace hcln {

// Dense row-major matrix, the universal weight/activation carrier. Scalar is
// float or double, uniform per model. Vectors are 1xN or Nx1 matrices.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

template <class To, class From>
Mat<To> cast_mat(const Mat<From>& a) {
  return a.template cast<To>();
}

template <class S>
Mat<S> transpose(const Mat<S>& a) {
  return a.transpose();
}

// ---------------------------------------------------------------------------
// matmul: the reduction over the shared dimension always runs in ascending
// index order, for every output element, no matter how many threads are used.
// Cloned rows therefore see identical instruction sequences, which the
// bitwise block-symmetry guarantees depend on. Parallelism is across output
// rows only.
// ---------------------------------------------------------------------------

template <class S>
void matmul_into(const Mat<S>& a, const Mat<S>& b, Mat<S>& out) {
  HCLN_CHECK(a.cols() == b.rows(), "matmul: inner dimensions differ ("
                                       << a.rows() << "x" << a.cols() << " * "
                                       << b.rows() << "x" << b.cols() << ")");
  const Index m = a.rows(), inner = a.cols(), n = b.cols();
  out.resize(m, n);
  parallel_for(m, 32, [&](Index lo, Index hi) {
    for (Index i = lo; i < hi; ++i) {
      S* orow = out.data() + i * n;
      std::fill(orow, orow + n, S(0));
      const S* arow = a.data() + i * inner;
      for (Index k = 0; k < inner; ++k) {
        const S aik = arow[k];
        const S* brow = b.data() + k * n;
        for (Index j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  });
}

template <class S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b) {
  Mat<S> out;
  matmul_into(a, b, out);
  return out;
}

// ---------------------------------------------------------------------------
// softmax over rows, with per-row max subtraction. -inf entries (masked
// attention scores) map to exactly zero probability.
// ---------------------------------------------------------------------------

template <class S>
void softmax_rows_into(const Mat<S>& a, Mat<S>& out) {
  const Index m = a.rows(), n = a.cols();
  out.resize(m, n);
  std::vector<double> e(static_cast<size_t>(n));
  for (Index i = 0; i < m; ++i) {
    const S* row = a.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    S* orow = out.data() + i * n;
    if (!(mx > -std::numeric_limits<double>::infinity())) {
      // Degenerate all-masked row; never produced by causal attention.
      for (Index j = 0; j < n; ++j) orow[j] = S(1) / static_cast<S>(n);
      continue;
    }
    double sum = 0.0;
    for (Index j = 0; j < n; ++j) {
      double x = static_cast<double>(row[j]);
      double v = (x == -std::numeric_limits<double>::infinity()) ? 0.0 : std::exp(x - mx);
      e[static_cast<size_t>(j)] = v;
      sum += v;
    }
    for (Index j = 0; j < n; ++j)
      orow[j] = static_cast<S>(e[static_cast<size_t>(j)] / sum);
  }
}

template <class S>
Mat<S> softmax_rows(const Mat<S>& a) {
  Mat<S> out;
  softmax_rows_into(a, out);
  return out;
}

// ---------------------------------------------------------------------------
// Normalizations. Statistics are accumulated exactly (see reduce.hpp) and
// rounded once, which makes both ops bitwise duplication-equivariant: an
// n-fold duplicated input with duplicated affine parameters produces the
// n-fold duplication of the source output, for any n.
// ---------------------------------------------------------------------------

struct NormStats {
  double mu;   // mean (0 for rms)
  double inv;  // 1/sqrt(var + eps)
};

// Population variance (divide by N). beta may be null. Row-by-row over X.
template <class S>
void layer_norm_rows_into(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>* beta,
                          double eps, Mat<S>& out, std::vector<NormStats>* stats) {
  const Index m = x.rows(), n = x.cols();
  HCLN_CHECK(gamma.size() == n, "layer_norm: gamma length " << gamma.size()
                                                            << " != " << n);
  HCLN_CHECK(beta == nullptr || beta->size() == n,
             "layer_norm: beta length " << (beta ? beta->size() : 0) << " != " << n);
  out.resize(m, n);
  if (stats) stats->resize(static_cast<size_t>(m));
  detail::ExactSum acc;
  for (Index i = 0; i < m; ++i) {
    const S* row = x.data() + i * n;
    acc.clear();
    for (Index j = 0; j < n; ++j) acc.add(static_cast<double>(row[j]));
    const double mu = acc.divided_by(n);
    acc.clear();
    for (Index j = 0; j < n; ++j) {
      double dev = static_cast<double>(row[j]) - mu;
      acc.add_product(dev, dev);
    }
    const double var = acc.divided_by(n);
    const double denom = var + eps;
    const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    S* orow = out.data() + i * n;
    const S* g = gamma.data();
    const S* b = beta ? beta->data() : nullptr;
    for (Index j = 0; j < n; ++j) {
      double y = (static_cast<double>(row[j]) - mu) * inv * static_cast<double>(g[j]);
      if (b) y += static_cast<double>(b[j]);
      orow[j] = static_cast<S>(y);
    }
    if (stats) (*stats)[static_cast<size_t>(i)] = {mu, inv};
  }
}

template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, double eps) {
  HCLN_CHECK(x.rows() == 1 && gamma.rows() == 1 && beta.rows() == 1,
             "layer_norm: expects row vectors");
  Mat<S> out;
  layer_norm_rows_into(x, gamma, &beta, eps, out, nullptr);
  return out;
}

template <class S>
void rms_norm_rows_into(const Mat<S>& x, const Mat<S>& gamma, double eps, Mat<S>& out,
                        std::vector<NormStats>* stats) {
  const Index m = x.rows(), n = x.cols();
  HCLN_CHECK(gamma.size() == n, "rms_norm: gamma length " << gamma.size() << " != " << n);
  out.resize(m, n);
  if (stats) stats->resize(static_cast<size_t>(m));
  detail::ExactSum acc;
  for (Index i = 0; i < m; ++i) {
    const S* row = x.data() + i * n;
    acc.clear();
    for (Index j = 0; j < n; ++j) {
      double v = static_cast<double>(row[j]);
      acc.add_product(v, v);
    }
    const double ms = acc.divided_by(n);
    const double denom = ms + eps;
    const double inv = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    S* orow = out.data() + i * n;
    const S* g = gamma.data();
    for (Index j = 0; j < n; ++j)
      orow[j] = static_cast<S>(static_cast<double>(row[j]) * inv * static_cast<double>(g[j]));
    if (stats) (*stats)[static_cast<size_t>(i)] = {0.0, inv};
  }
}

template <class S>
Mat<S> rms_norm(const Mat<S>& x, const Mat<S>& gamma, double eps) {
  HCLN_CHECK(x.rows() == 1 && gamma.rows() == 1, "rms_norm: expects row vectors");
  Mat<S> out;
  rms_norm_rows_into(x, gamma, eps, out, nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// GELU, tanh approximation (the train module's gradients match this form).
// ---------------------------------------------------------------------------

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

inline double gelu_scalar(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad_scalar(double x) {
  double u = kGeluC * (x + kGeluA * x * x * x);
  double t = std::tanh(u);
  double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

template <class S>
Mat<S> gelu(const Mat<S>& x) {
  Mat<S> out(x.rows(), x.cols());
  const S* in = x.data();
  S* o = out.data();
  const Index n = x.size();
  for (Index i = 0; i < n; ++i) o[i] = static_cast<S>(gelu_scalar(static_cast<double>(in[i])));
  return out;
}

// ---------------------------------------------------------------------------
// Singular values via one-sided Jacobi: cyclically orthogonalize column
// pairs; converged when every off-diagonal rotation falls below 1e-12
// relative, capped at 60 sweeps (then a ConvergenceError carries the best
// estimate). Always computed in double.
// ---------------------------------------------------------------------------

inline std::vector<double> jacobi_singular_values(Eigen::MatrixXd u) {
  const Index n = u.cols();
  constexpr double kTol = 1e-12;
  constexpr int kMaxSweeps = 60;
  // Columns whose norm is negligible against the whole matrix count as
  // already orthogonal; without this floor, exactly rank-deficient inputs
  // keep rotating their residual near-zero columns forever.
  const double zero_col = 1e-28 * u.squaredNorm();
  bool converged = (n <= 1);
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gam = 0.0;
        const Index m = u.rows();
        for (Index i = 0; i < m; ++i) {
          double up = u(i, p), uq = u(i, q);
          alpha += up * up;
          beta += uq * uq;
          gam += up * uq;
        }
        if (alpha <= zero_col || beta <= zero_col) continue;
        double denom = std::sqrt(alpha * beta);
        if (std::abs(gam) <= kTol * denom) continue;
        converged = false;
        double zeta = (beta - alpha) / (2.0 * gam);
        double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (Index i = 0; i < m; ++i) {
          double up = u(i, p), uq = u(i, q);
          u(i, p) = c * up - s * uq;
          u(i, q) = s * up + c * uq;
        }
      }
    }
  }
  std::vector<double> sigma(static_cast<size_t>(n));
  for (Index j = 0; j < n; ++j) sigma[static_cast<size_t>(j)] = u.col(j).norm();
  std::sort(sigma.begin(), sigma.end(), std::greater<double>());
  if (!converged)
    throw ConvergenceError("singular_values: Jacobi sweep cap reached", sigma);
  return sigma;
}

template <class S>
std::vector<double> singular_values(const Mat<S>& a) {
  Eigen::MatrixXd u;
  if (a.rows() >= a.cols())
    u = a.template cast<double>();
  else
    u = a.transpose().template cast<double>();
  return jacobi_singular_values(std::move(u));
}

// ---------------------------------------------------------------------------
// Seeded normal sampling, row-major fill order.
// ---------------------------------------------------------------------------

template <class S>
Mat<S> gaussian(Rng& rng, Index rows, Index cols, double std_dev) {
  HCLN_CHECK(std_dev >= 0.0, "gaussian: std must be nonnegative");
  Mat<S> out(rows, cols);
  S* o = out.data();
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) o[i] = static_cast<S>(rng.normal() * std_dev);
  return out;
}

}  // namespace hcln

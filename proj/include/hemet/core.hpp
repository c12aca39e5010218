#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <complex>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hemet {

// Extended precision: Bergman rays and diverging minimizations reach
// form eigenvalues near e^{±1000}, outside the range of double.
using real = long double;
using cx = std::complex<real>;
using Mat = Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<cx, Eigen::Dynamic, 1>;
using RMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic>;
using RVec = Eigen::Matrix<real, Eigen::Dynamic, 1>;

inline constexpr real pi = 3.141592653589793238462643383279502884L;

struct argument_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct evaluation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Mat identity(Eigen::Index n) { return Mat::Identity(n, n); }

inline real hermitian_defect(const Mat& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

inline Mat hermitian_part(const Mat& a) { return (a + a.adjoint()) / real(2); }

// Connected components of the nonzero pattern of a square matrix.  Blocks
// are diagonalized separately so that exact zeros survive matrix functions.
inline std::vector<std::vector<Eigen::Index>> coupling_blocks(const Mat& a) {
  const Eigen::Index n = a.rows();
  std::vector<Eigen::Index> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<Eigen::Index(Eigen::Index)> find = [&](Eigen::Index i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (a(i, j) != cx(0) || a(j, i) != cx(0)) parent[find(i)] = find(j);
  std::vector<std::vector<Eigen::Index>> out;
  std::vector<Eigen::Index> slot(n, -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index r = find(i);
    if (slot[r] < 0) {
      slot[r] = static_cast<Eigen::Index>(out.size());
      out.emplace_back();
    }
    out[slot[r]].push_back(i);
  }
  return out;
}

struct HermEig {
  RVec values;
  Mat vectors;
};

// Eigendecomposition of a hermitian matrix, blockwise over coupling_blocks.
inline HermEig herm_eig(const Mat& a) {
  const Eigen::Index n = a.rows();
  HermEig out{RVec::Zero(n), Mat::Zero(n, n)};
  Eigen::Index col = 0;
  for (const auto& blk : coupling_blocks(a)) {
    const Eigen::Index m = static_cast<Eigen::Index>(blk.size());
    Mat sub(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) sub(i, j) = a(blk[i], blk[j]);
    Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(sub));
    for (Eigen::Index j = 0; j < m; ++j, ++col) {
      out.values(col) = es.eigenvalues()(j);
      for (Eigen::Index i = 0; i < m; ++i) out.vectors(blk[i], col) = es.eigenvectors()(i, j);
    }
  }
  // ascending order across blocks
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return out.values(x) < out.values(y); });
  HermEig sorted{RVec(n), Mat(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    sorted.values(j) = out.values(idx[j]);
    sorted.vectors.col(j) = out.vectors.col(idx[j]);
  }
  return sorted;
}

template <class F>
Mat herm_apply(const Mat& a, F&& f) {
  HermEig e = herm_eig(a);
  Mat d = Mat::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) d(i, i) = cx(f(e.values(i)));
  return e.vectors * d * e.vectors.adjoint();
}

inline Mat herm_exp(const Mat& a) { return herm_apply(a, [](real x) { return std::exp(x); }); }

inline Mat herm_log(const Mat& a) {
  return herm_apply(a, [](real x) {
    if (!(x > 0)) throw evaluation_error("logarithm of a matrix that is not positive definite");
    return std::log(x);
  });
}

inline Mat herm_pow(const Mat& a, real p) {
  return herm_apply(a, [p](real x) {
    if (!(x > 0)) throw evaluation_error("power of a matrix that is not positive definite");
    return std::pow(x, p);
  });
}

// Inverse of a positive definite hermitian matrix, blockwise.
inline Mat pd_inverse(const Mat& a) {
  const Eigen::Index n = a.rows();
  Mat out = Mat::Zero(n, n);
  for (const auto& blk : coupling_blocks(a)) {
    const Eigen::Index m = static_cast<Eigen::Index>(blk.size());
    Mat sub(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) sub(i, j) = a(blk[i], blk[j]);
    Eigen::LDLT<Mat> ldlt(hermitian_part(sub));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw evaluation_error("matrix is not positive definite");
    Mat inv = ldlt.solve(identity(m));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) out(blk[i], blk[j]) = inv(i, j);
  }
  return out;
}

inline real op_norm_herm(const Mat& a) {
  RVec v = herm_eig(a).values;
  return std::max(std::abs(v(0)), std::abs(v(v.size() - 1)));
}

// Eigenvalues of the h0-selfadjoint operator h0^{-1} h (generalized problem).
inline RVec relative_eigenvalues(const Mat& h, const Mat& h0) {
  Eigen::LLT<Mat> llt(hermitian_part(h0));
  if (llt.info() != Eigen::Success) throw evaluation_error("reference metric is not positive definite");
  Mat l = llt.matrixL();
  Mat li = l.triangularView<Eigen::Lower>().solve(identity(h0.rows()));
  Mat c = li * h * li.adjoint();
  return herm_eig(hermitian_part(c)).values;
}

// Eigenvalues of an h-selfadjoint endomorphism m (h m hermitian).
inline RVec selfadjoint_eigenvalues(const Mat& m, const Mat& h) {
  Eigen::LLT<Mat> llt(hermitian_part(h));
  if (llt.info() != Eigen::Success) throw evaluation_error("metric is not positive definite");
  Mat l = llt.matrixL();
  Mat c = l.adjoint() * m * l.adjoint().triangularView<Eigen::Upper>().solve(identity(h.rows()));
  return herm_eig(hermitian_part(c)).values;
}

inline bool all_finite(const Mat& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!std::isfinite(a.data()[i].real()) || !std::isfinite(a.data()[i].imag())) return false;
  return true;
}

}  // namespace hemet

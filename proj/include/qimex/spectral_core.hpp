#ifndef QIMEX_SPECTRAL_CORE_HPP
#define QIMEX_SPECTRAL_CORE_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

namespace qimex {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<cplx>;

inline constexpr cplx I_unit{0.0, 1.0};

/// Bad input: maps to CLI exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Breakdown during a computation: maps to CLI exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what)
{
  if (!ok) throw ValidationError(what);
}

inline void require_square(const Mat& A, const char* who)
{
  if (A.rows() != A.cols())
    throw ValidationError(std::string(who) + ": matrix is not square");
}

inline bool is_finite(const Mat& A) { return A.allFinite(); }

inline bool is_real(const Mat& A, double tol = 0.0)
{
  return A.imag().cwiseAbs().maxCoeff() <= tol;
}

/// A = herm + i*antiherm with both parts Hermitian.
struct HermitianSplit {
  Mat herm;
  Mat antiherm;

  Mat recombine() const { return herm + I_unit * antiherm; }
};

inline HermitianSplit hermitian_split(const Mat& A)
{
  require_square(A, "hermitian_split");
  Mat Ah = A.adjoint();
  return {(A + Ah) / 2.0, (A - Ah) / (2.0 * I_unit)};
}

/// Ascending eigenvalues of the Hermitian part of a Hermitian input.
inline RVec hermitian_eigenvalues(const Mat& H)
{
  if (H.rows() == 0) return RVec();
  if (is_real(H)) {
    Eigen::SelfAdjointEigenSolver<RMat> es(H.real(), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(H, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_min_herm(const Mat& A)
{
  Mat Hs = (A + A.adjoint()) / 2.0;
  return hermitian_eigenvalues(Hs)(0);
}

inline double lambda_max_herm(const Mat& A)
{
  Mat Hs = (A + A.adjoint()) / 2.0;
  RVec ev = hermitian_eigenvalues(Hs);
  return ev(ev.size() - 1);
}

/// mu(A) = lambda_max((A+A^H)/2).
inline double log_norm(const Mat& A)
{
  require_square(A, "log_norm");
  return lambda_max_herm(A);
}

/// alpha(A) = max real part of the spectrum.
inline double spectral_abscissa(const Mat& A)
{
  require_square(A, "spectral_abscissa");
  Eigen::ComplexEigenSolver<Mat> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

inline double norm2(const Mat& A)
{
  if (A.size() == 0) return 0.0;
  if (is_real(A)) {
    Eigen::BDCSVD<RMat> svd(A.real());
    return svd.singularValues()(0);
  }
  Eigen::BDCSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

inline double max_norm(const Mat& A)
{
  return A.size() == 0 ? 0.0 : A.cwiseAbs().maxCoeff();
}

inline double max_norm(const Vec& v)
{
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

inline double condition_number(const Mat& A)
{
  Eigen::BDCSVD<Mat> svd(A);
  const RVec& s = svd.singularValues();
  double smin = s(s.size() - 1);
  return smin == 0.0 ? INFINITY : s(0) / smin;
}

/// Reciprocal condition estimate of an LU factorization. Eigen's rcond() alone reports 1 for an exact zero pivot.
inline double lu_rcond(const Eigen::PartialPivLU<Mat>& lu)
{
  const auto d = lu.matrixLU().diagonal().cwiseAbs();
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0) || !(d.minCoeff() > 0.0)) return 0.0;
  return std::min(lu.rcond(), d.minCoeff() / dmax);
}

/// e^{At}. Pade(13) scaling and squaring (Eigen); real inputs stay real.
inline Mat matrix_exp(const Mat& A, double t)
{
  require_square(A, "matrix_exp");
  require(std::isfinite(t), "matrix_exp: t is not finite");
  if (A.rows() == 0) return A;
  // cheap upper bound first, exact 2-norm only when it matters
  double bound = std::sqrt(A.cwiseAbs().colwise().sum().maxCoeff() *
                           A.cwiseAbs().rowwise().sum().maxCoeff()) *
                 std::abs(t);
  if (bound > 1e4 && norm2(A) * std::abs(t) > 1e4)
    throw NumericalError("matrix_exp: ||At|| exceeds 1e4");
  Mat E;
  if (is_real(A)) {
    RMat At = A.real() * t;
    RMat Er = At.exp();
    E = Er.cast<cplx>();
  } else {
    Mat At = A * t;
    E = At.exp();
  }
  if (!is_finite(E)) throw NumericalError("matrix_exp: overflow");
  return E;
}

/// e^{-iHt} for Hermitian H through its eigendecomposition; exactly unitary up to rounding.
inline Mat expm_hermitian(const Mat& H, double t)
{
  require_square(H, "expm_hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  const Mat& V = es.eigenvectors();
  Vec ph = (-I_unit * t * es.eigenvalues().cast<cplx>()).array().exp();
  return V * ph.asDiagonal() * V.adjoint();
}

struct SecondDifference {
  Mat L;
  std::vector<double> eigenvalues;
};

/// Tridiagonal L_h (-2 on the diagonal, 1 off it) with lambda_k = -2+2cos(k pi/(N+1)).
inline SecondDifference second_derivative_matrix(int N)
{
  require(N >= 1, "second_derivative_matrix: N must be >= 1");
  SecondDifference out;
  out.L = Mat::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    out.L(i, i) = -2.0;
    if (i + 1 < N) {
      out.L(i, i + 1) = 1.0;
      out.L(i + 1, i) = 1.0;
    }
  }
  for (int k = 1; k <= N; ++k)
    out.eigenvalues.push_back(-2.0 + 2.0 * std::cos(k * std::numbers::pi / (N + 1)));
  return out;
}

struct CentralDifference {
  Mat M;
  Mat adjoint;
  std::vector<cplx> eigenvalues;
};

/// Skew-symmetric M_h (+1 above, -1 below) with eigenvalues -2i cos(k pi/(N+1)).
inline CentralDifference central_difference_matrix(int N)
{
  require(N >= 1, "central_difference_matrix: N must be >= 1");
  CentralDifference out;
  out.M = Mat::Zero(N, N);
  for (int i = 0; i + 1 < N; ++i) {
    out.M(i, i + 1) = 1.0;
    out.M(i + 1, i) = -1.0;
  }
  out.adjoint = out.M.adjoint();
  for (int k = 1; k <= N; ++k)
    out.eigenvalues.push_back(-2.0 * I_unit * std::cos(k * std::numbers::pi / (N + 1)));
  return out;
}

using BlockGrid = std::vector<std::vector<Mat>>;

inline Mat assemble_blocks(const BlockGrid& B)
{
  const auto m = static_cast<Eigen::Index>(B.size());
  require(m > 0, "assemble_blocks: empty grid");
  const Eigen::Index b = B[0][0].rows();
  Mat A = Mat::Zero(m * b, m * b);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) A.block(i * b, j * b, b, b) = B[i][j];
  return A;
}

/// Sum over block diagonals of the largest block 2-norm; an upper bound on ||A||_2.
inline double block_norm_bound(const BlockGrid& B)
{
  const int m = static_cast<int>(B.size());
  require(m > 0, "block_norm_bound: empty grid");
  const Eigen::Index b = B[0][0].rows();
  for (const auto& row : B) {
    require(static_cast<int>(row.size()) == m, "block_norm_bound: ragged block grid");
    for (const auto& blk : row)
      require(blk.rows() == b && blk.cols() == b, "block_norm_bound: ragged block grid");
  }
  double total = 0.0;
  for (int k = -(m - 1); k <= m - 1; ++k) {
    double best = 0.0;
    for (int i = 0; i < m; ++i) {
      int j = i + k;
      if (j < 0 || j >= m) continue;
      best = std::max(best, norm2(B[i][j]));
    }
    total += best;
  }
  return total;
}

/// min_j lambda_min(sym P_j) - max_j ||Q_j||_2, a lower bound on lambda_min(H_1).
inline double weyl_gap_bound(const std::vector<Mat>& P, const std::vector<Mat>& Q)
{
  if (P.empty() || Q.empty()) throw ValidationError("weyl_gap_bound: empty lists");
  const Eigen::Index n = P[0].rows();
  double pmin = INFINITY, qmax = 0.0;
  for (const auto& p : P) {
    require(p.rows() == n && p.cols() == n, "weyl_gap_bound: size mismatch");
    pmin = std::min(pmin, lambda_min_herm(p));
  }
  for (const auto& q : Q) {
    require(q.rows() == n && q.cols() == n, "weyl_gap_bound: size mismatch");
    qmax = std::max(qmax, norm2(q));
  }
  return pmin - qmax;
}

inline SpMat to_sparse(const Mat& A, double drop = 0.0)
{
  std::vector<Eigen::Triplet<cplx>> trip;
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      if (std::abs(A(i, j)) > drop) trip.emplace_back(i, j, A(i, j));
  SpMat S(A.rows(), A.cols());
  S.setFromTriplets(trip.begin(), trip.end());
  return S;
}

inline Mat kron(const Mat& A, const Mat& B)
{
  Mat K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

} // namespace qimex

#endif // QIMEX_SPECTRAL_CORE_HPP

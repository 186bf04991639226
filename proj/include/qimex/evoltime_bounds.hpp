#ifndef QIMEX_EVOLTIME_BOUNDS_HPP
#define QIMEX_EVOLTIME_BOUNDS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "spectral_core.hpp"

namespace qimex {

inline constexpr int exact_curve_cap = 256;

/// ||e^{-Ht}||_2 at each t.
inline std::vector<double> exact_norm_curve(const Mat& H, const std::vector<double>& ts)
{
  require_square(H, "exact_norm_curve");
  require(H.rows() <= exact_curve_cap, "exact_norm_curve: size exceeds 256");
  std::vector<double> out;
  out.reserve(ts.size());
  for (double t : ts) out.push_back(t == 0.0 ? 1.0 : norm2(matrix_exp(-H, t)));
  return out;
}

inline std::vector<double> bound_lognorm(const Mat& A, const std::vector<double>& ts)
{
  const double mu = log_norm(A);
  std::vector<double> out;
  for (double t : ts) out.push_back(std::exp(mu * t));
  return out;
}

/// Jordan data A = V J V^{-1}; available only for unambiguous structure.
struct JordanInfo {
  bool available = false;
  std::string reason;
  double kappa = NAN;   // cond(V)
  int alpha = 0;        // largest block
  double lambda = NAN;  // max real part of the spectrum
};

namespace detail {

/// Orthonormal basis of the numerical null space of M.
inline Mat null_space(const Mat& M, double tol)
{
  Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
  const RVec& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++rank;
  return svd.matrixV().rightCols(M.cols() - rank);
}

inline Mat matrix_power(const Mat& M, int k)
{
  Mat R = Mat::Identity(M.rows(), M.cols());
  for (int i = 0; i < k; ++i) R = R * M;
  return R;
}

} // namespace detail

inline constexpr double jordan_cluster_tol = 1e-8;
inline constexpr double jordan_gap_min = 1e-6;
inline constexpr double jordan_kappa_max = 1e10;

inline JordanInfo jordan_info(const Mat& A)
{
  require_square(A, "bound_jordan");
  const Eigen::Index n = A.rows();
  JordanInfo info;
  Eigen::ComplexEigenSolver<Mat> es(A, true);
  const Vec& ev = es.eigenvalues();
  const double scale = std::max(1.0, max_norm(A));
  info.lambda = ev.real().maxCoeff();

  // cluster eigenvalues closer than the clustering tolerance
  std::vector<int> owner(n, -1);
  std::vector<std::vector<int>> clusters;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (owner[i] >= 0) continue;
    owner[i] = static_cast<int>(clusters.size());
    clusters.push_back({static_cast<int>(i)});
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (owner[j] < 0 && std::abs(ev(i) - ev(j)) <= jordan_cluster_tol * scale) {
        owner[j] = owner[i];
        clusters.back().push_back(static_cast<int>(j));
      }
  }
  for (size_t a = 0; a < clusters.size(); ++a)
    for (size_t b = a + 1; b < clusters.size(); ++b) {
      double gap = std::abs(ev(clusters[a][0]) - ev(clusters[b][0]));
      if (gap <= jordan_gap_min * scale) {
        info.reason = "eigenvalue gap " + std::to_string(gap) + " between 1e-8 and 1e-6";
        return info;
      }
    }

  Mat V(n, 0);
  int alpha = 1;
  for (const auto& c : clusters) {
    const int m = static_cast<int>(c.size());
    if (m == 1) {
      V.conservativeResize(n, V.cols() + 1);
      V.col(V.cols() - 1) = es.eigenvectors().col(c[0]);
      continue;
    }
    cplx lam = 0.0;
    for (int i : c) lam += ev(i);
    lam /= static_cast<double>(m);
    const Mat N = A - lam * Mat::Identity(n, n);
    const double tol = 1e-8 * scale;
    Mat Z1 = detail::null_space(N, tol);
    const int geo = static_cast<int>(Z1.cols());
    if (geo == m) {  // semisimple
      V.conservativeResize(n, V.cols() + m);
      V.rightCols(m) = Z1;
    } else if (geo == 1) {  // one block of size m
      Mat Nm1 = detail::matrix_power(N, m - 1);
      Mat Z = detail::null_space(Nm1 * N, tol);
      if (Z.cols() != m) {
        info.reason = "generalized eigenspace dimension mismatch";
        return info;
      }
      Eigen::JacobiSVD<Mat> svd(Nm1 * Z, Eigen::ComputeFullV);
      Vec v = Z * svd.matrixV().col(0);
      v.normalize();
      Mat chain(n, m);
      chain.col(m - 1) = v;
      for (int k = m - 2; k >= 0; --k) chain.col(k) = N * chain.col(k + 1);
      V.conservativeResize(n, V.cols() + m);
      V.rightCols(m) = chain;
      alpha = std::max(alpha, m);
    } else {
      info.reason = "mixed Jordan structure (geometric multiplicity " + std::to_string(geo) +
                    " of " + std::to_string(m) + ")";
      return info;
    }
  }
  info.kappa = condition_number(V);
  if (!(info.kappa < jordan_kappa_max)) {
    info.reason = "eigenvector basis numerically singular (cond " + std::to_string(info.kappa) + ")";
    return info;
  }
  info.alpha = alpha;
  info.available = true;
  return info;
}

/// kappa(V) alpha max_{r<alpha} t^r/r! e^{lambda t}; nullopt when UNAVAILABLE.
inline std::optional<std::vector<double>> bound_jordan(const Mat& A, const std::vector<double>& ts,
                                                       JordanInfo* info_out = nullptr)
{
  JordanInfo info = jordan_info(A);
  if (info_out) *info_out = info;
  if (!info.available) return std::nullopt;
  std::vector<double> out;
  for (double t : ts) {
    double best = 0.0, term = 1.0;
    for (int r = 0; r < info.alpha; ++r) {
      if (r > 0) term *= t / r;
      best = std::max(best, term);
    }
    out.push_back(info.kappa * info.alpha * best * std::exp(info.lambda * t));
  }
  return out;
}

struct SchurInfo {
  double N_norm = 0.0;  // ||strictly upper part||_2
  double lambda = 0.0;
};

inline SchurInfo schur_info(const Mat& A)
{
  require_square(A, "bound_schur");
  Eigen::ComplexSchur<Mat> cs(A);
  Mat T = cs.matrixT();
  SchurInfo info;
  info.lambda = T.diagonal().real().maxCoeff();
  Mat N = T.triangularView<Eigen::StrictlyUpper>();
  info.N_norm = norm2(N);
  return info;
}

/// sum_{k=0}^{n} (||N|| t)^k/k! e^{lambda t} from the ordered complex Schur form.
inline std::vector<double> bound_schur(const Mat& A, const std::vector<double>& ts,
                                       SchurInfo* info_out = nullptr)
{
  SchurInfo info = schur_info(A);
  if (info_out) *info_out = info;
  const auto n = A.rows();
  std::vector<double> out;
  for (double t : ts) {
    double x = info.N_norm * t, term = 1.0, sum = 1.0;
    for (Eigen::Index k = 1; k <= n; ++k) {
      term *= x / static_cast<double>(k);
      sum += term;
    }
    out.push_back(sum * std::exp(info.lambda * t));
  }
  return out;
}

inline std::vector<double> bound_norm_exp(const Mat& A, const std::vector<double>& ts)
{
  const double a = norm2(A);
  std::vector<double> out;
  for (double t : ts) out.push_back(std::exp(a * t));
  return out;
}

inline std::vector<double> bound_abscissa(const Mat& A, const std::vector<double>& ts)
{
  const double a = spectral_abscissa(A);
  std::vector<double> out;
  for (double t : ts) out.push_back(std::exp(a * t));
  return out;
}

// -------------------------------------------------------- quadrature

namespace detail {

struct GK15 {
  static constexpr std::array<double, 8> xk = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr std::array<double, 8> wk = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr std::array<double, 4> wg = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
};

} // namespace detail

/// Adaptive Gauss-Kronrod (7/15) for matrix-valued integrands, absolute tolerance.
inline Mat integrate_gk(const std::function<Mat(double)>& f, double a, double b, double tol = 1e-9,
                        int max_depth = 30)
{
  using G = detail::GK15;
  std::function<Mat(double, double, double, int)> rec = [&](double lo, double hi, double tl,
                                                            int depth) -> Mat {
    const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
    Mat fc = f(c);
    Mat kron = G::wk[7] * fc;
    Mat gauss = G::wg[3] * fc;
    for (int i = 0; i < 7; ++i) {
      Mat f1 = f(c - r * G::xk[i]);
      Mat f2 = f(c + r * G::xk[i]);
      kron += G::wk[i] * (f1 + f2);
      if (i % 2 == 1) gauss += G::wg[i / 2] * (f1 + f2);
    }
    kron *= r;
    gauss *= r;
    double err = (kron - gauss).cwiseAbs().maxCoeff();
    if (err <= tl) return kron;
    if (depth >= max_depth) throw NumericalError("quadrature did not converge");
    return rec(lo, c, tl / 2.0, depth + 1) + rec(c, hi, tl / 2.0, depth + 1);
  };
  if (a == b) return f(a) * 0.0;
  return rec(a, b, tol, 0);
}

inline double integrate_gk(const std::function<double(double)>& f, double a, double b,
                           double tol = 1e-9)
{
  auto g = [&](double x) { return Mat::Constant(1, 1, cplx(f(x), 0.0)); };
  return integrate_gk(std::function<Mat(double)>(g), a, b, tol)(0, 0).real();
}

// --------------------------------------------------- Laplace structure

/// Time-independent H with P on the diagonal and -Q above it, Nt blocks.
inline Mat assemble_time_independent(const Mat& P, const Mat& Q, int Nt)
{
  require_square(P, "assemble_time_independent");
  require(P.rows() == Q.rows() && P.cols() == Q.cols(), "assemble_time_independent: size mismatch");
  require(Nt >= 1, "assemble_time_independent: Nt must be >= 1");
  const Eigen::Index b = P.rows();
  Mat H = Mat::Zero(Nt * b, Nt * b);
  for (int k = 0; k < Nt; ++k) {
    H.block(k * b, k * b, b, b) = P;
    if (k + 1 < Nt) H.block(k * b, (k + 1) * b, b, b) = -Q;
  }
  return H;
}

enum class ConvolutionOrder {
  Left,  // B_k(t) = int e^{-P s} Q B_{k-1}(t-s) ds
  Right  // B_k(t) = int B_{k-1}(t-s) Q e^{-P s} ds
};

inline constexpr int laplace_max_Nt = 6;
inline constexpr int laplace_max_block = 8;

namespace detail {

/// Barycentric Chebyshev interpolant of a matrix function on [0, T].
struct ChebMatrixInterp {
  double T = 0.0;
  std::vector<double> nodes, weights;
  std::vector<Mat> values;

  Mat operator()(double s) const
  {
    Mat num = values[0] * 0.0;
    double den = 0.0;
    for (size_t j = 0; j < nodes.size(); ++j) {
      double d = s - nodes[j];
      if (std::abs(d) < 1e-15 * std::max(1.0, T)) return values[j];
      double w = weights[j] / d;
      num += w * values[j];
      den += w;
    }
    return num / den;
  }
};

inline ChebMatrixInterp cheb_interp(const std::function<Mat(double)>& f, double T, int m)
{
  ChebMatrixInterp ci;
  ci.T = T;
  for (int j = 0; j <= m; ++j) {
    double x = std::cos(std::numbers::pi * j / m);
    ci.nodes.push_back(0.5 * T * (1.0 + x));
    double w = (j % 2 == 0 ? 1.0 : -1.0) * ((j == 0 || j == m) ? 0.5 : 1.0);
    ci.weights.push_back(w);
    ci.values.push_back(f(ci.nodes.back()));
  }
  return ci;
}

} // namespace detail

/// Blocks B_{i,l}(t) of e^{-Ht}: grid[i][l] for l >= i, zero below.
inline BlockGrid laplace_blocks(const Mat& P, const Mat& Q, int Nt, double t,
                                ConvolutionOrder order = ConvolutionOrder::Left)
{
  require_square(P, "laplace_blocks");
  require(P.rows() == Q.rows() && P.cols() == Q.cols(), "laplace_blocks: size mismatch");
  require(Nt >= 1 && Nt <= laplace_max_Nt, "laplace_blocks: Nt must lie in [1, 6]");
  require(P.rows() <= laplace_max_block, "laplace_blocks: block size exceeds 8");
  require(t >= 0.0, "laplace_blocks: t must be >= 0");
  const Eigen::Index b = P.rows();
  auto expP = [&](double s) { return s == 0.0 ? Mat(Mat::Identity(b, b)) : matrix_exp(-P, s); };
  const int m = 48;
  // B_k on [0, t] through interpolants; B_0 = e^{-Ps}
  std::vector<Mat> Bt{expP(t)};
  if (t > 0.0) {
    auto prev = detail::cheb_interp(expP, t, m);
    for (int k = 1; k < Nt; ++k) {
      auto next = [&](double s) -> Mat {
        if (s == 0.0) return Mat::Zero(b, b);
        std::function<Mat(double)> g = [&](double r) -> Mat {
          return order == ConvolutionOrder::Left ? Mat(expP(r) * Q * prev(s - r))
                                                 : Mat(prev(s - r) * Q * expP(r));
        };
        return integrate_gk(g, 0.0, s, 1e-9 / (1.0 + t));
      };
      auto cur = detail::cheb_interp(next, t, m);
      Bt.push_back(cur.values[0]);  // node 0 sits at s = t
      prev = std::move(cur);
    }
  } else {
    for (int k = 1; k < Nt; ++k) Bt.push_back(Mat::Zero(b, b));
  }
  BlockGrid G(Nt, std::vector<Mat>(Nt, Mat::Zero(b, b)));
  for (int i = 0; i < Nt; ++i)
    for (int l = i; l < Nt; ++l) G[i][l] = Bt[l - i];
  return G;
}

/// Q~(s) = e^{Ps} Q e^{-Ps}.
inline Mat q_tilde(const Mat& P, const Mat& Q, double s)
{
  if (s == 0.0) return Q;
  return matrix_exp(P, s) * Q * matrix_exp(-P, s);
}

struct TimeOrderedBound {
  double bound = 0.0;        // ||e^{-Pt}|| exp(int ||Q~||)
  double series = 0.0;       // ||e^{-Pt}|| sum_{i<Nt} (int ||Q~||)^i / i!
  double integral = 0.0;     // int_0^t ||Q~(s)||_2 ds
  double expP_norm = 0.0;
  std::optional<double> identity_form;  // ||e^{(I-P)t}||_2 when Q = I
};

inline TimeOrderedBound bound_timeordered(const Mat& P, const Mat& Q, double t, int Nt = 0)
{
  require_square(P, "bound_timeordered");
  require(P.rows() == Q.rows() && P.cols() == Q.cols(), "bound_timeordered: size mismatch");
  require(P.rows() <= laplace_max_block, "bound_timeordered: block size exceeds 8");
  require(t >= 0.0, "bound_timeordered: t must be >= 0");
  TimeOrderedBound r;
  r.expP_norm = t == 0.0 ? 1.0 : norm2(matrix_exp(-P, t));
  std::function<double(double)> f = [&](double s) { return norm2(q_tilde(P, Q, s)); };
  r.integral = t == 0.0 ? 0.0 : integrate_gk(f, 0.0, t);
  r.bound = r.expP_norm * std::exp(r.integral);
  double term = 1.0, sum = 1.0;
  for (int i = 1; i < Nt; ++i) {
    term *= r.integral / i;
    sum += term;
  }
  r.series = Nt > 0 ? r.expP_norm * sum : r.bound;
  const Mat Id = Mat::Identity(P.rows(), P.cols());
  if ((Q - Id).cwiseAbs().maxCoeff() == 0.0)
    r.identity_form = t == 0.0 ? 1.0 : norm2(matrix_exp(Id - P, t));
  return r;
}

/// All bound families on one time grid for the time-independent H(P, Q, Nt).
struct BoundCurve {
  std::vector<double> ts;
  std::vector<double> exact;
  std::vector<double> abscissa;
  std::vector<double> lognorm;
  std::optional<std::vector<double>> jordan;  // nullopt: UNAVAILABLE
  std::vector<double> schur;
  std::vector<double> norm_exp;
  std::vector<double> laplace_timeordered;
  std::vector<double> laplace_series;
  JordanInfo jordan_meta;
  SchurInfo schur_meta;
  double lambda = 0.0;
};

inline BoundCurve bound_curve(const Mat& P, const Mat& Q, int Nt, const std::vector<double>& ts)
{
  BoundCurve c;
  c.ts = ts;
  const Mat H = assemble_time_independent(P, Q, Nt);
  const Mat A = -H;
  c.exact = exact_norm_curve(H, ts);
  c.abscissa = bound_abscissa(A, ts);
  c.lognorm = bound_lognorm(A, ts);
  c.jordan = bound_jordan(A, ts, &c.jordan_meta);
  c.schur = bound_schur(A, ts, &c.schur_meta);
  c.norm_exp = bound_norm_exp(A, ts);
  c.lambda = c.schur_meta.lambda;
  if (P.rows() <= laplace_max_block)
    for (double t : ts) {
      auto tb = bound_timeordered(P, Q, t, Nt);
      c.laplace_timeordered.push_back(tb.bound);
      c.laplace_series.push_back(tb.series);
    }
  return c;
}

} // namespace qimex

#endif // QIMEX_EVOLTIME_BOUNDS_HPP

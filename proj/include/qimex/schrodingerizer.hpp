#ifndef QIMEX_SCHRODINGERIZER_HPP
#define QIMEX_SCHRODINGERIZER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "richardson_embed.hpp"
#include "spectral_core.hpp"

namespace qimex {

namespace detail {

inline std::vector<cplx> fft_unitary(const std::vector<cplx>& x, bool inverse)
{
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<cplx> y;
  if (inverse) fft.inv(y, x);
  else fft.fwd(y, x);
  const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
  for (auto& v : y) v *= s;
  return y;
}

/// J_0(z)..J_K(z) by Miller's backward recurrence, normalized with J_0 + 2 sum J_2k = 1.
inline std::vector<double> bessel_j_sequence(int K, double z)
{
  std::vector<double> J(K + 1, 0.0);
  if (z == 0.0) {
    J[0] = 1.0;
    return J;
  }
  const int start = K + 40 + static_cast<int>(6.0 * std::cbrt(z)) + static_cast<int>(std::sqrt(40.0 * K));
  double jp1 = 0.0, j = 1e-300, norm = 0.0;
  std::vector<double> tmp(start + 1, 0.0);
  tmp[start] = j;
  for (int k = start; k >= 1; --k) {
    double jm1 = 2.0 * k / z * j - jp1;
    jp1 = j;
    j = jm1;
    tmp[k - 1] = j;
    if (std::abs(j) > 1e250) {
      for (int i = k - 1; i <= start; ++i) tmp[i] *= 1e-250;
      j *= 1e-250;
      jp1 *= 1e-250;
    }
  }
  norm = tmp[0];
  for (int k = 2; k <= start; k += 2) norm += 2.0 * tmp[k];
  for (int k = 0; k <= K; ++k) J[k] = tmp[k] / norm;
  return J;
}

/// Number of Chebyshev terms for e^{-i r t x} on [-1,1] at ~1e-16.
inline int chebyshev_terms(double z)
{
  return static_cast<int>(std::ceil(z + 12.0 * std::cbrt(z) + 20.0));
}

/// e^{-iHt} v for Hermitian sparse H with spectrum inside [lo, hi].
inline Vec chebyshev_expv(const SpMat& H, const Vec& v, double t, double lo, double hi)
{
  const double c = 0.5 * (hi + lo);
  const double r = std::max(0.5 * (hi - lo), 1e-300);
  const double z = r * t;
  const cplx phase = std::exp(-I_unit * c * t);
  if (z < 1e-300) return phase * v;
  int K = chebyshev_terms(z);
  auto J = bessel_j_sequence(K, z);
  while (K > 1 && std::abs(J[K]) < 1e-18 && K > z) --K;

  Vec t0 = v;
  Vec t1 = (H * v - c * v) / r;
  Vec acc = J[0] * t0 + 2.0 * (-I_unit) * J[1] * t1;
  cplx mi = -I_unit;
  cplx coef = mi;
  Vec t2(v.size());
  for (int k = 2; k <= K; ++k) {
    t2.noalias() = H * t1;
    t2 = (2.0 / r) * (t2 - c * t1) - t0;
    coef *= mi;
    acc += (2.0 * J[k]) * coef * t2;
    t0.swap(t1);
    t1.swap(t2);
  }
  return phase * acc;
}

using SpMatR = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batched Chebyshev for H_j = mu_j A1 + i S with A1 real symmetric, S real antisymmetric.
/// V holds m complex columns; column j is propagated with its own interval [lo_j, hi_j].
inline Mat chebyshev_expv_real_batch(const SpMatR& A1, const SpMatR& S, const Mat& V, const std::vector<double>& mu,
                                     const std::vector<double>& lo, const std::vector<double>& hi, double t)
{
  const Eigen::Index n = V.rows();
  const Eigen::Index m = V.cols();
  Eigen::RowVectorXd c(m), r(m), muv(m);
  int K = 1;
  for (Eigen::Index j = 0; j < m; ++j) {
    c(j) = 0.5 * (hi[j] + lo[j]);
    r(j) = std::max(0.5 * (hi[j] - lo[j]), 1e-300);
    muv(j) = mu[j];
    K = std::max(K, chebyshev_terms(r(j) * t));
  }
  MatRM J(K + 1, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    auto col = bessel_j_sequence(K, r(j) * t);
    for (int k = 0; k <= K; ++k) J(k, j) = 2.0 * col[k];
  }
  J.row(0) *= 0.5;
  const Eigen::RowVectorXd inv_r = r.cwiseInverse();

  // left half real parts, right half imaginary parts
  MatRM t0(n, 2 * m), t1(n, 2 * m), t2(n, 2 * m), P(n, 2 * m), R(n, 2 * m);
  t0.leftCols(m) = V.real();
  t0.rightCols(m) = V.imag();
  // out = (H - c) X / r
  auto apply = [&](const MatRM& X, MatRM& out) {
    P.noalias() = A1 * X;
    R.noalias() = S * X;
    out.leftCols(m).array() =
        (P.leftCols(m).array().rowwise() * muv.array() - R.rightCols(m).array() -
         X.leftCols(m).array().rowwise() * c.array()).rowwise() * inv_r.array();
    out.rightCols(m).array() =
        (P.rightCols(m).array().rowwise() * muv.array() + R.leftCols(m).array() -
         X.rightCols(m).array().rowwise() * c.array()).rowwise() * inv_r.array();
  };
  MatRM accR(n, m), accI(n, m);
  // term k carries (-i)^k, which cycles 1, -i, -1, i
  auto add = [&](int k, const MatRM& T) {
    const auto w = J.row(k).array();
    switch (k % 4) {
      case 0: accR.array() += T.leftCols(m).array().rowwise() * w; accI.array() += T.rightCols(m).array().rowwise() * w; break;
      case 1: accR.array() += T.rightCols(m).array().rowwise() * w; accI.array() -= T.leftCols(m).array().rowwise() * w; break;
      case 2: accR.array() -= T.leftCols(m).array().rowwise() * w; accI.array() -= T.rightCols(m).array().rowwise() * w; break;
      default: accR.array() -= T.rightCols(m).array().rowwise() * w; accI.array() += T.leftCols(m).array().rowwise() * w; break;
    }
  };
  accR.setZero();
  accI.setZero();
  add(0, t0);
  apply(t0, t1);
  add(1, t1);
  for (int k = 2; k <= K; ++k) {
    apply(t1, t2);
    t2 = 2.0 * t2 - t0;
    add(k, t2);
    std::swap(t0, t1);
    std::swap(t1, t2);
  }
  Mat out(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const cplx phase = std::exp(-I_unit * c(j) * t);
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = phase * cplx(accR(i, j), accI(i, j));
  }
  return out;
}

template <class F>
void parallel_for(int begin, int end, int threads, F&& body)
{
  threads = std::max(1, std::min(threads, end - begin));
  if (threads == 1) {
    for (int i = begin; i < end; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (int i = begin + w; i < end; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

inline double kink(double x) { return std::exp(-std::abs(x)); }

/// int_x^inf e^{-|s|} ds
inline double kink_tail(double x) { return x >= 0.0 ? std::exp(-x) : 2.0 - std::exp(x); }

} // namespace detail

enum class Reconstruction { SinglePoint, Integral };

/// Spectral range and horizon used to size the p-grid.
struct GridProbe {
  double a_min = -1.0;  // lambda_min(A1)
  double a_max = 0.0;   // lambda_max(A1)
  double t = 0.0;
  Reconstruction method = Reconstruction::SinglePoint;  // value watched during refinement
};

struct ProbeResult {
  double value_change = 0.0;  // max |probe(Np) - probe(2Np)|, pure-decay probes, watched method
  double est_single = 0.0;    // max |probe - exact|, single point
  double est_integral = 0.0;  // max |probe - exact|, integral
};

struct PGrid {
  double Lp = -1.0;
  double Rp = 1.0;
  int Np = 2;
  double dp = 1.0;
  RVec p;
  RVec mu;
  double negligible = 1e-6;
  // sizing record
  double delta_fourier = 0.0;
  double p_diamond = 0.0;
  GridProbe probe;
  ProbeResult probe_result;
  std::vector<std::pair<int, double>> refinement;  // (Np, probe change)

  int ell(int k) const { return k - Np / 2; }  // column k holds mode ell = k - Np/2
};

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline PGrid make_grid(double Lp, double Rp, int Np, double negligible = 1e-6)
{
  require(Lp < 0.0 && Rp > 0.0, "make_grid: need Lp < 0 < Rp");
  require(is_pow2(Np) && Np >= 2, "make_grid: Np must be a power of two");
  PGrid g;
  g.Lp = Lp;
  g.Rp = Rp;
  g.Np = Np;
  g.dp = (Rp - Lp) / Np;
  g.negligible = negligible;
  g.p.resize(Np);
  g.mu.resize(Np);
  for (int j = 0; j < Np; ++j) g.p(j) = Lp + j * g.dp;
  for (int k = 0; k < Np; ++k) g.mu(k) = 2.0 * std::numbers::pi * g.ell(k) / (Rp - Lp);
  return g;
}

inline bool boundary_negligible(const PGrid& g)
{
  return std::exp(-std::abs(g.Lp)) < g.negligible && std::exp(-std::abs(g.Rp)) < g.negligible;
}

/// Index of the smallest grid point p* > p_diamond + dp.
inline int pstar_index(const PGrid& g, double p_diamond)
{
  require(p_diamond < g.Rp - 2.0 * g.dp, "reconstruct: p_diamond too close to Rp");
  for (int j = 0; j < g.Np; ++j)
    if (g.p(j) > p_diamond + g.dp) return j;
  throw ValidationError("reconstruct: p_diamond too close to Rp");
}

/// Scalar transport probes e^{p*} w(t,p*) for speeds spanning [a_min, a_max], or [a_min, 0] when decay_only.
inline std::vector<double> probe_speeds(const GridProbe& pr, bool decay_only = false)
{
  std::vector<double> a;
  const int n = 16;
  const double hi = decay_only ? std::min(pr.a_max, 0.0) : pr.a_max;
  const double lo = std::min(pr.a_min, hi);
  for (int k = 0; k <= n; ++k) a.push_back(lo + (hi - lo) * k / n);
  a.push_back(0.0);
  a.push_back(-1.0);
  return a;
}

struct ProbeValues {
  std::vector<double> single, integral, exact_single, exact_integral;
};

inline ProbeValues probe_values(const PGrid& g, double p_diamond, const GridProbe& pr,
                               bool decay_only = false)
{
  std::vector<cplx> w0(g.Np);
  for (int j = 0; j < g.Np; ++j) w0[j] = detail::kink(g.p(j));
  auto gh = detail::fft_unitary(w0, false);  // bin b holds ell = b (mod Np)
  const int js = pstar_index(g, p_diamond);
  const double ps = g.p(js);
  ProbeValues out;
  for (double a : probe_speeds(pr, decay_only)) {
    std::vector<cplx> c(g.Np);
    for (int b = 0; b < g.Np; ++b) {
      int ell = b < g.Np / 2 ? b : b - g.Np;
      double mu = 2.0 * std::numbers::pi * ell / (g.Rp - g.Lp);
      c[b] = gh[b] * std::exp(-I_unit * mu * a * pr.t);
    }
    auto w = detail::fft_unitary(c, true);
    out.single.push_back(std::exp(ps) * w[js].real());
    double s = 0.0;
    for (int j = js; j < g.Np; ++j) {
      double wt = (j == js) ? 0.5 : 1.0;
      s += wt * w[j].real();
    }
    s += 0.5 * w[0].real();  // periodic endpoint p = Rp
    out.integral.push_back(std::exp(ps) * s * g.dp);
    out.exact_single.push_back(std::exp(ps) * detail::kink(ps - a * pr.t));
    out.exact_integral.push_back(std::exp(ps) * detail::kink_tail(ps - a * pr.t));
  }
  return out;
}

inline ProbeResult probe_errors(const PGrid& g, double p_diamond, const GridProbe& pr)
{
  auto v = probe_values(g, p_diamond, pr);
  ProbeResult r;
  for (size_t k = 0; k < v.single.size(); ++k) {
    r.est_single = std::max(r.est_single, std::abs(v.single[k] - v.exact_single[k]));
    r.est_integral = std::max(r.est_integral, std::abs(v.integral[k] - v.exact_integral[k]));
  }
  return r;
}

inline std::pair<double, double> grid_extent(double delta_fourier, double p_diamond, const GridProbe& pr)
{
  const double Rp = std::max(2.0, std::log(3.0 / delta_fourier) + p_diamond + 1.0);
  return {-Rp - std::max(0.0, -pr.a_min) * pr.t, Rp};
}

/// Rp from delta and p_diamond; Lp widened by the leftward transport distance; Np by refinement
/// of the pure-decay probes.
inline PGrid build_grid(double delta_fourier, double p_diamond, const GridProbe& pr = {},
                        int Np_start = 512, int Np_cap = 1 << 14)
{
  require(delta_fourier > 0.0 && delta_fourier < 1.0, "build_grid: delta_fourier must lie in (0,1)");
  require(pr.t >= 0.0 && pr.a_min <= pr.a_max, "build_grid: invalid probe");
  require(is_pow2(Np_start), "build_grid: Np_start must be a power of two");
  auto [Lp, Rp] = grid_extent(delta_fourier, p_diamond, pr);
  const double thresh = delta_fourier;
  std::vector<std::pair<int, double>> hist;
  for (int Np = Np_start; Np <= Np_cap; Np *= 2) {
    PGrid g = make_grid(Lp, Rp, Np, thresh);
    PGrid g2 = make_grid(Lp, Rp, 2 * Np, thresh);
    auto a = probe_values(g, p_diamond, pr, true);
    auto b = probe_values(g2, p_diamond, pr, true);
    const bool single = pr.method == Reconstruction::SinglePoint;
    const auto& va = single ? a.single : a.integral;
    const auto& vb = single ? b.single : b.integral;
    double change = 0.0;
    for (size_t k = 0; k < va.size(); ++k) change = std::max(change, std::abs(va[k] - vb[k]));
    hist.emplace_back(Np, change);
    if (change < delta_fourier / 4.0) {
      g.delta_fourier = delta_fourier;
      g.p_diamond = p_diamond;
      g.probe = pr;
      g.refinement = hist;
      g.probe_result = probe_errors(g, p_diamond, pr);
      g.probe_result.value_change = change;
      return g;
    }
  }
  throw NumericalError("build_grid: refinement did not converge within Np = " + std::to_string(Np_cap));
}

enum class ModeSolver { Auto, Dense, Chebyshev };

/// Mode coefficients of the warped state; column k holds c_ell with ell = k - Np/2.
struct SchrodingerizedSystem {
  HermitianSplit split;
  PGrid grid;
  Mat modes;
  double t = 0.0;
  double norm0_sq = 0.0;
  // spectral enclosures for the mode Hamiltonians
  double a1_min = 0.0, a1_max = 0.0, a2_min = 0.0, a2_max = 0.0;

  int dim() const { return static_cast<int>(split.herm.rows()); }

  Mat mode_ham(int k) const { return grid.mu(k) * split.herm - split.antiherm; }

  double norm_sq() const { return modes.squaredNorm(); }

  double drift() const { return norm0_sq == 0.0 ? 0.0 : std::abs(norm_sq() - norm0_sq) / norm0_sq; }
};

/// c_ell = unitary DFT_j of e^{-|p_j|} v0.
inline Mat warped_initial(const Vec& v0, const PGrid& g)
{
  std::vector<cplx> w(g.Np);
  for (int j = 0; j < g.Np; ++j) w[j] = detail::kink(g.p(j));
  auto gh = detail::fft_unitary(w, false);
  Mat modes(v0.size(), g.Np);
  for (int k = 0; k < g.Np; ++k) {
    int ell = g.ell(k);
    int bin = ell < 0 ? ell + g.Np : ell;
    modes.col(k) = gh[bin] * v0;
  }
  return modes;
}

/// Warped samples w(p_j) for all j; row i is component i.
inline Mat warped_samples(const SchrodingerizedSystem& s)
{
  const int Np = s.grid.Np;
  Mat W(s.modes.rows(), Np);
  std::vector<cplx> c(Np);
  for (Eigen::Index i = 0; i < s.modes.rows(); ++i) {
    for (int k = 0; k < Np; ++k) {
      int ell = s.grid.ell(k);
      c[ell < 0 ? ell + Np : ell] = s.modes(i, k);
    }
    auto w = detail::fft_unitary(c, true);
    for (int j = 0; j < Np; ++j) W(i, j) = w[j];
  }
  return W;
}

inline SchrodingerizedSystem schrodingerize(const Mat& A, const Vec& v0, const PGrid& g)
{
  require_square(A, "schrodingerize");
  require(v0.size() == A.rows(), "schrodingerize: v0 has the wrong length");
  SchrodingerizedSystem s;
  s.split = hermitian_split(A);
  s.grid = g;
  s.modes = warped_initial(v0, g);
  s.norm0_sq = s.modes.squaredNorm();
  RVec e1 = hermitian_eigenvalues(s.split.herm);
  RVec e2 = hermitian_eigenvalues(s.split.antiherm);
  if (e1.size() > 0) {
    s.a1_min = e1(0);
    s.a1_max = e1(e1.size() - 1);
    s.a2_min = e2(0);
    s.a2_max = e2(e2.size() - 1);
  }
  return s;
}

struct EvolveOptions {
  ModeSolver solver = ModeSolver::Auto;
  int threads = 1;
  bool use_conjugate_symmetry = true;
  int dense_max_dim = 96;
  int batch = 32;
};

/// True when A is real and the current modes satisfy c_{-ell} = conj(c_ell).
inline bool conjugate_symmetric(const SchrodingerizedSystem& s)
{
  if (!is_real(s.split.herm) || s.split.antiherm.real().cwiseAbs().maxCoeff() != 0.0) return false;
  const int Np = s.grid.Np;
  const double scale = std::max(s.modes.cwiseAbs().maxCoeff(), 1e-300);
  for (int k = 1; k < Np; ++k) {
    int mirror = Np - k;  // ell -> -ell
    if ((s.modes.col(k) - s.modes.col(mirror).conjugate()).cwiseAbs().maxCoeff() > 1e-13 * scale)
      return false;
  }
  return true;
}

/// c_ell <- e^{-i(mu_ell A1 - A2) t} c_ell for every mode.
inline SchrodingerizedSystem evolve(const SchrodingerizedSystem& in, double t, const EvolveOptions& opt = {})
{
  require(t >= 0.0, "evolve: t must be >= 0");
  SchrodingerizedSystem s = in;
  s.t = in.t + t;
  if (t == 0.0) return s;
  const int Np = s.grid.Np;
  const int n = s.dim();
  const bool sym = opt.use_conjugate_symmetry && conjugate_symmetric(in);
  // with symmetry only ell <= 0 (columns 0..Np/2) are propagated
  const int kend = sym ? Np / 2 + 1 : Np;
  bool dense = opt.solver == ModeSolver::Dense ||
               (opt.solver == ModeSolver::Auto && n <= opt.dense_max_dim);
  auto interval = [&](int k) {
    const double mu = s.grid.mu(k);
    return std::pair{std::min(mu * s.a1_min, mu * s.a1_max) - s.a2_max,
                     std::max(mu * s.a1_min, mu * s.a1_max) - s.a2_min};
  };
  const bool real_gen = is_real(s.split.herm) && s.split.antiherm.real().cwiseAbs().maxCoeff() == 0.0;
  if (!dense && real_gen && opt.batch > 1) {
    // A2 = -i S with S real antisymmetric
    const detail::SpMatR A1r = s.split.herm.real().sparseView();
    const detail::SpMatR Sr = (-s.split.antiherm.imag()).sparseView();
    const int B = opt.batch;
    const int nb = (kend + B - 1) / B;
    detail::parallel_for(0, nb, opt.threads, [&](int b) {
      const int k0 = b * B, k1 = std::min(kend, k0 + B);
      std::vector<double> mu, lo, hi;
      for (int k = k0; k < k1; ++k) {
        auto [l, h] = interval(k);
        mu.push_back(s.grid.mu(k));
        lo.push_back(l);
        hi.push_back(h);
      }
      s.modes.middleCols(k0, k1 - k0) =
          detail::chebyshev_expv_real_batch(A1r, Sr, in.modes.middleCols(k0, k1 - k0), mu, lo, hi, t);
    });
    if (sym)
      for (int k = Np / 2 + 1; k < Np; ++k) s.modes.col(k) = s.modes.col(Np - k).conjugate();
    return s;
  }
  SpMat A1, A2;
  if (!dense) {
    A1 = to_sparse(s.split.herm);
    A2 = to_sparse(s.split.antiherm);
  }
  detail::parallel_for(0, kend, opt.threads, [&](int k) {
    const double mu = s.grid.mu(k);
    if (dense) {
      s.modes.col(k) = expm_hermitian(s.mode_ham(k), t) * in.modes.col(k);
    } else {
      SpMat Hk = mu * A1 - A2;
      auto [lo, hi] = interval(k);
      s.modes.col(k) = detail::chebyshev_expv(Hk, in.modes.col(k), t, lo, hi);
    }
  });
  if (sym)
    for (int k = Np / 2 + 1; k < Np; ++k) s.modes.col(k) = s.modes.col(Np - k).conjugate();
  return s;
}

/// e^{p*} w(t,p*) or e^{p*} * trapezoid of w over [p*, Rp].
inline Vec reconstruct(const SchrodingerizedSystem& s, Reconstruction method, double p_diamond)
{
  const PGrid& g = s.grid;
  const int js = pstar_index(g, p_diamond);
  const double ps = g.p(js);
  Mat W = warped_samples(s);
  if (method == Reconstruction::SinglePoint) return std::exp(ps) * W.col(js);
  Vec acc = 0.5 * W.col(js);
  for (int j = js + 1; j < g.Np; ++j) acc += W.col(j);
  acc += 0.5 * W.col(0);  // periodic image at p = Rp
  return std::exp(ps) * g.dp * acc;
}

inline double pstar_value(const PGrid& g, double p_diamond) { return g.p(pstar_index(g, p_diamond)); }

/// Both reconstructions from one set of warped samples.
inline std::pair<Vec, Vec> reconstruct_both(const SchrodingerizedSystem& s, double p_diamond)
{
  const PGrid& g = s.grid;
  const int js = pstar_index(g, p_diamond);
  const double ps = g.p(js);
  Mat W = warped_samples(s);
  Vec single = std::exp(ps) * W.col(js);
  Vec acc = 0.5 * W.col(js);
  for (int j = js + 1; j < g.Np; ++j) acc += W.col(j);
  acc += 0.5 * W.col(0);
  return {single, std::exp(ps) * g.dp * acc};
}

/// ( sum_{p_j >= p_lo} dp |w(t,p_j) - e^{-p_j} v_inf|^2 )^{1/2}, the warped-space distance
/// to the lifted steady state.
inline double warped_steady_distance(const SchrodingerizedSystem& s, const Vec& v_inf, double p_lo)
{
  require(v_inf.size() == s.dim(), "warped_steady_distance: v_inf has the wrong length");
  const PGrid& g = s.grid;
  Mat W = warped_samples(s);
  double acc = 0.0;
  for (int j = 0; j < g.Np; ++j)
    if (g.p(j) >= p_lo) acc += (W.col(j) - std::exp(-g.p(j)) * v_inf).squaredNorm();
  return std::sqrt(acc * g.dp);
}

/// H_schr with mode index outer: block k is mu_k A1 - A2 (small sizes only).
inline Mat assemble_schr_hamiltonian(const SchrodingerizedSystem& s)
{
  const int n = s.dim(), Np = s.grid.Np;
  require(static_cast<long long>(n) * Np <= 4096, "assemble_schr_hamiltonian: too large");
  Mat H = Mat::Zero(n * Np, n * Np);
  for (int k = 0; k < Np; ++k) H.block(k * n, k * n, n, n) = s.mode_ham(k);
  return H;
}

enum class PDiamondRule { Zero, LambdaMax };

struct PipelineOptions {
  double delta_fourier = 1e-2 / 3.0;
  PDiamondRule p_rule = PDiamondRule::LambdaMax;
  Reconstruction method = Reconstruction::SinglePoint;
  EvolveOptions evolve;
  int Np_start = 512;
  int Np_cap = 1 << 14;
  int Np_fixed = 0;           // > 0: sizing formula for Lp, Rp with this Np
  std::optional<PGrid> grid;  // override
};

struct PipelineResult {
  Vec u;                 // selected reconstruction, physical block
  Vec u_single;
  Vec u_integral;
  std::vector<Vec> blocks;  // u_1..u_Nt from the selected reconstruction
  PGrid grid;
  double T_evol = 0.0;
  double p_diamond = 0.0;          // value used
  double p_diamond_general = 0.0;  // max(lambda_max(A1) T_evol, 0)
  double p_star = 0.0;
  double a1_min = 0.0, a1_max = 0.0;
  double drift = 0.0;
  double init_norm = 0.0;
  double seconds = 0.0;
};

/// Warped init -> evolve to T_evol -> reconstruct -> drop auxiliary block.
inline PipelineResult run_pipeline(const HomogeneousEmbedding& emb, const DecayCertificate& cert,
                                   int block_dim, const PipelineOptions& opt = {})
{
  auto t0 = std::chrono::steady_clock::now();
  PipelineResult r;
  r.T_evol = cert.T_evol;
  const Mat& A = emb.generator;
  RVec e1 = hermitian_eigenvalues(hermitian_split(A).herm);
  r.a1_min = e1(0);
  r.a1_max = e1(e1.size() - 1);
  r.p_diamond_general = std::max(r.a1_max * r.T_evol, 0.0);
  r.p_diamond = opt.p_rule == PDiamondRule::Zero ? 0.0 : r.p_diamond_general;
  GridProbe pr{r.a1_min, r.a1_max, r.T_evol, opt.method};
  const bool fixed = opt.grid || opt.Np_fixed > 0;
  if (opt.grid) {
    r.grid = *opt.grid;
  } else if (opt.Np_fixed > 0) {
    auto [Lp, Rp] = grid_extent(opt.delta_fourier, r.p_diamond, pr);
    r.grid = make_grid(Lp, Rp, opt.Np_fixed, opt.delta_fourier);
    r.grid.delta_fourier = opt.delta_fourier;
  } else {
    r.grid = build_grid(opt.delta_fourier, r.p_diamond, pr, opt.Np_start, opt.Np_cap);
  }
  if (fixed) {
    r.grid.probe = pr;
    r.grid.p_diamond = r.p_diamond;
    r.grid.probe_result = probe_errors(r.grid, r.p_diamond, pr);
  }
  SchrodingerizedSystem s = schrodingerize(A, emb.init, r.grid);
  s = evolve(s, r.T_evol, opt.evolve);
  r.drift = s.drift();
  auto [single, integral] = reconstruct_both(s, r.p_diamond);
  r.p_star = pstar_value(r.grid, r.p_diamond);
  r.u_single = single.head(emb.n_phys);
  r.u_integral = integral.head(emb.n_phys);
  r.u = opt.method == Reconstruction::SinglePoint ? r.u_single : r.u_integral;
  r.init_norm = emb.init.norm();
  const int Nt = emb.n_phys / block_dim;
  for (int n = 1; n <= Nt; ++n)
    r.blocks.push_back(r.u.segment(static_cast<Eigen::Index>(Nt - n) * block_dim, block_dim));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Relative truncation estimate for a vector run: probe error scaled by ||init|| / ||u||.
inline double truncation_estimate(const PipelineResult& r, Reconstruction m)
{
  double e = m == Reconstruction::SinglePoint ? r.grid.probe_result.est_single
                                              : r.grid.probe_result.est_integral;
  double un = r.u.norm();
  return un > 0.0 ? e * r.init_norm / un : e;
}

} // namespace qimex

#endif // QIMEX_SCHRODINGERIZER_HPP

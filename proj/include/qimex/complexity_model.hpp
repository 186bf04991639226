#ifndef QIMEX_COMPLEXITY_MODEL_HPP
#define QIMEX_COMPLEXITY_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "imex_engine.hpp"
#include "pde_frontends.hpp"
#include "richardson_embed.hpp"
#include "schrodingerizer.hpp"
#include "spectral_core.hpp"

namespace qimex {

// All outputs here are order estimates with every hidden constant set to 1.

struct BerryQueries {
  double chi = 0.0;  // s ||H||_max T_evol
  double queries = 0.0;
  bool flagged = false;  // chi/delta <= e^e: log log too small for the formula
};

inline BerryQueries berry_queries(double s, double hmax, double T_evol, double delta)
{
  require(s > 0.0 && hmax > 0.0 && T_evol > 0.0, "berry_queries: inputs must be positive");
  require(delta > 0.0 && delta < 1.0, "berry_queries: delta must lie in (0,1)");
  BerryQueries q;
  q.chi = s * hmax * T_evol;
  const double x = q.chi / delta;
  if (x <= std::exp(std::numbers::e)) {
    q.flagged = true;
    q.queries = q.chi;
    return q;
  }
  q.queries = q.chi * std::log(x) / std::log(std::log(x));
  return q;
}

/// Order N_x^2 log N_x (log 1/delta)^2 quoted for the heat equation.
inline double heat_query_target(int Nx, double delta)
{
  const double L = std::log(1.0 / delta);
  return static_cast<double>(Nx) * Nx * std::log(static_cast<double>(Nx)) * L * L;
}

/// Largest number of nonzeros in any row.
inline int row_sparsity(const Mat& M, double tol = 0.0)
{
  int best = 0;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    int c = 0;
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      if (std::abs(M(i, j)) > tol) ++c;
    best = std::max(best, c);
  }
  return best;
}

struct HmaxSparsity {
  int s = 0;                // max_n [s(P_n) + s(Q_n)]
  int s_exact = 0;          // row sparsity of the mode Hamiltonians
  double hmax_estimate = 0; // Np max_n [2|P_n| + |Q_n| + |b_n + 1_{n=0} Q_0 u_0|]
  double hmax_exact = 0;    // max entry of H_schr over all modes
};

/// Sparsity and max-norm of H_schr for the embedding with K = 1 on the grid g.
inline HmaxSparsity schr_hmax_and_sparsity(const ImexSystem& sys, const Vec& u0, const PGrid& g,
                                           const HomogeneousEmbedding* emb = nullptr)
{
  require(sys.Nt >= 1 && u0.size() == sys.dim(), "schr_hmax_and_sparsity: invalid system");
  HmaxSparsity r;
  double worst = 0.0;
  for (int n = 0; n < sys.Nt; ++n) {
    const auto& st = sys.steps[n];
    r.s = std::max(r.s, row_sparsity(st.P) + row_sparsity(st.Q));
    Vec src = st.b;
    if (n == 0) src += st.Q * u0;
    worst = std::max(worst, 2.0 * max_norm(st.P) + max_norm(st.Q) + max_norm(src));
  }
  r.hmax_estimate = g.Np * worst;
  HomogeneousEmbedding local;
  if (!emb) {
    local = embed_homogeneous(assemble_block_system(sys, u0), 1.0);
    emb = &local;
  }
  HermitianSplit sp = hermitian_split(emb->generator);
  double mu_max = g.mu.cwiseAbs().maxCoeff();
  // |mu A1 - A2| entrywise is convex in mu, so the extreme modes attain the maximum
  for (double mu : {g.mu.minCoeff(), g.mu.maxCoeff(), 0.0})
    r.hmax_exact = std::max(r.hmax_exact, max_norm(Mat(mu * sp.herm - sp.antiherm)));
  r.s_exact = row_sparsity(Mat(mu_max * sp.herm - sp.antiherm), 1e-300);
  return r;
}

enum class RepetitionMode { Full, Final };

struct Repetitions {
  double raw = 0.0;
  double value = 1.0;  // max(1, raw)
  bool source_free = false;
};

/// T T_evol ||b1||_{2,max} / (Nt ||u||_{2,min}); FINAL multiplies by sqrt(Nt).
inline Repetitions repetition_counts(double T, double T_evol, int Nt, double b1_norm_max,
                                     double u_norm_min, RepetitionMode mode)
{
  require(Nt >= 1 && T > 0.0 && T_evol > 0.0, "repetition_counts: invalid inputs");
  if (!(u_norm_min > 0.0)) throw NumericalError("repetition_counts: vanishing trajectory norm");
  Repetitions r;
  r.raw = T * T_evol * b1_norm_max / (Nt * u_norm_min);
  if (mode == RepetitionMode::Final) r.raw *= std::sqrt(static_cast<double>(Nt));
  r.source_free = b1_norm_max == 0.0;
  r.value = std::max(1.0, r.raw);
  return r;
}

/// 1/2 e^{-2 p} |w(T)|^2 / (|w0|^2 + T^2 |b|^2).
inline double success_probability(double w0_norm, double b_norm, double wT_norm, double T,
                                  double p_diamond)
{
  require(w0_norm >= 0.0 && b_norm >= 0.0 && wT_norm >= 0.0, "success_probability: negative norm");
  double den = w0_norm * w0_norm + T * T * b_norm * b_norm;
  if (!(den > 0.0)) throw NumericalError("success_probability: zero denominator");
  return 0.5 * std::exp(-2.0 * p_diamond) * wT_norm * wT_norm / den;
}

/// Same probability for the homogeneous state [u; K chi].
inline double embedding_success_probability(double u_norm, double K, double chi_norm,
                                            double p_diamond)
{
  double den = u_norm * u_norm + K * K * chi_norm * chi_norm;
  if (!(den > 0.0)) throw NumericalError("success_probability: zero denominator");
  return 0.5 * std::exp(-2.0 * p_diamond) * u_norm * u_norm / den;
}

/// e^{p} (|w0| + T |b|) / |w(T)|.
inline double repetitions_from_success(double w0_norm, double b_norm, double wT_norm, double T,
                                       double p_diamond)
{
  if (!(wT_norm > 0.0)) throw NumericalError("repetitions: vanishing final state");
  return std::exp(p_diamond) * (w0_norm + T * b_norm) / wT_norm;
}

struct ComplexityReport {
  int s = 0;
  double hmax = 0.0;
  double hmax_exact = 0.0;
  double T_evol = 0.0;
  double chi_berry = 0.0;
  double queries = 0.0;
  bool queries_flagged = false;
  double reps_full = 1.0, reps_final = 1.0;
  double reps_full_raw = 0.0, reps_final_raw = 0.0;
  bool source_free = false;
  double reps_success = 0.0;  // e^{p}(|w0| + T_evol |F|)/|u|
  double success_prob = 0.0;
  double p_diamond = 0.0;
  double composite = 0.0;  // queries x reps_full
  int n_p = 0;             // log2 Np
};

struct ComplexityInputs {
  const ImexSystem* sys = nullptr;
  Vec u0;
  const HomogeneousEmbedding* emb = nullptr;
  PGrid grid;
  double T = 0.0;
  double T_evol = 0.0;
  double delta = 1e-2;
  double p_diamond = 0.0;
  double b1_norm_max = 0.0;
  double u_norm_min = 0.0;
  double u_stacked_norm = 0.0;  // |u(T_evol)| of the physical block
  double F_norm = 0.0;
};

inline ComplexityReport complexity_report(const ComplexityInputs& in)
{
  require(in.sys != nullptr, "complexity_report: missing system");
  ComplexityReport c;
  auto hs = schr_hmax_and_sparsity(*in.sys, in.u0, in.grid, in.emb);
  c.s = hs.s;
  c.hmax = hs.hmax_estimate;
  c.hmax_exact = hs.hmax_exact;
  c.T_evol = in.T_evol;
  auto bq = berry_queries(c.s, c.hmax, c.T_evol, in.delta);
  c.chi_berry = bq.chi;
  c.queries = bq.queries;
  c.queries_flagged = bq.flagged;
  auto full = repetition_counts(in.T, in.T_evol, in.sys->Nt, in.b1_norm_max, in.u_norm_min,
                                RepetitionMode::Full);
  auto fin = repetition_counts(in.T, in.T_evol, in.sys->Nt, in.b1_norm_max, in.u_norm_min,
                               RepetitionMode::Final);
  c.reps_full = full.value;
  c.reps_full_raw = full.raw;
  c.reps_final = fin.value;
  c.reps_final_raw = fin.raw;
  c.source_free = full.source_free;
  c.p_diamond = in.p_diamond;
  c.reps_success = repetitions_from_success(0.0, in.F_norm, in.u_stacked_norm, in.T_evol, in.p_diamond);
  if (in.emb)
    c.success_prob = embedding_success_probability(in.u_stacked_norm, in.emb->K,
                                                   std::sqrt(in.emb->chi.sum()), in.p_diamond);
  else
    c.success_prob = success_probability(0.0, in.F_norm, in.u_stacked_norm, in.T_evol, in.p_diamond);
  c.composite = c.queries * c.reps_full;
  c.n_p = static_cast<int>(std::lround(std::log2(static_cast<double>(in.grid.Np))));
  return c;
}

// ------------------------------------------------ telegraph branch

struct PhysicalBranch {
  int Nx = 0, Nt = 0;
  double lambda_tilde = 0.0;
  double epsilon = 0.0, tau = 0.0;
  std::vector<double> theta_r, ell_s, q_s;
  Vec u11;
  double lam_phys_formula = 0.0;
  double lam_phys_numeric = 0.0;   // eigenvalue of H~1 on the branch of u11
  double overlap_tilde = 0.0;
  double coupling = 0.0;           // |diag(F)^H u11|
  double K_required = 0.0;
  double K = 0.0;                  // K used for the embedding checks
  double chi_norm_sq = 0.0;
  double u_norm = 0.0;             // |u(T)| of the stacked trajectory
  double gK = 0.0;                 // 1 + K_required |chi| / |u(T)|
  double first_order = 0.0;        // v*^H E_K v*
  double delta_lambda = 0.0;       // second-order shift at K
  double lam_phys_perturbative = 0.0;
  double lam_homo_numeric = 0.0;   // branch eigenvalue of H_homo,1 at K
  double overlap_homo = 0.0;
  double remainder_scale = 0.0;    // eps^2/tau
  std::string diagnostics;
};

namespace detail {

using RSp = Eigen::SparseMatrix<double>;

/// Real part of the Hermitian part of the block system, sparse.
inline RSp block_hermitian_part(const ImexSystem& sys)
{
  const int N = sys.dim(), Nt = sys.Nt;
  std::vector<Eigen::Triplet<double>> trip;
  auto add = [&](int r0, int c0, const Mat& B, double s) {
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        double v = s * B(i, j).real();
        if (v != 0.0) trip.emplace_back(r0 + i, c0 + j, v);
      }
  };
  for (int k = 0; k < Nt; ++k) {
    const auto& st = sys.steps[Nt - 1 - k];
    Mat Ph = (st.P + st.P.adjoint()) / 2.0;
    add(k * N, k * N, Ph, 1.0);
    if (k + 1 < Nt) {
      add(k * N, (k + 1) * N, st.Q, -0.5);
      add((k + 1) * N, k * N, Mat(st.Q.adjoint()), -0.5);
    }
  }
  RSp H(static_cast<Eigen::Index>(N) * Nt, static_cast<Eigen::Index>(N) * Nt);
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

/// F = [b_{Nt-1}; ...; b_1; Q_0 w_0 + b_0].
inline Vec stacked_source(const ImexSystem& sys, const Vec& w0)
{
  const int N = sys.dim(), Nt = sys.Nt;
  Vec F(static_cast<Eigen::Index>(N) * Nt);
  for (int k = 0; k < Nt; ++k) F.segment(k * N, N) = sys.steps[Nt - 1 - k].b;
  F.segment(static_cast<Eigen::Index>(Nt - 1) * N, N) = sys.steps[0].Q * w0 + sys.steps[0].b;
  return F;
}

struct EigPair {
  double value = 0.0;
  RVec vec;
  double overlap = 0.0;
};

/// Eigenpair of symmetric S nearest the branch of v0: dense with max overlap for small
/// sizes, shifted inverse iteration from v0 otherwise.
inline EigPair branch_eigenpair(const RSp& S, const RVec& v0, double shift)
{
  EigPair out;
  const Eigen::Index n = S.rows();
  if (n <= 2000) {
    Eigen::SelfAdjointEigenSolver<RMat> es{RMat(S)};
    Eigen::Index best = 0;
    double ov = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double o = std::abs(es.eigenvectors().col(i).dot(v0));
      if (o > ov) {
        ov = o;
        best = i;
      }
    }
    out.value = es.eigenvalues()(best);
    out.vec = es.eigenvectors().col(best);
    out.overlap = ov;
    return out;
  }
  RSp Id(n, n);
  Id.setIdentity();
  RSp M = S - shift * Id;
  Eigen::SparseLU<RSp> lu;
  lu.compute(M);
  if (lu.info() != Eigen::Success) throw NumericalError("branch eigenpair: factorization failed");
  RVec x = v0.normalized();
  double lam = x.dot(S * x);
  for (int it = 0; it < 200; ++it) {
    RVec y = lu.solve(x);
    y.normalize();
    double lam_new = y.dot(S * y);
    double res = (S * y - lam_new * y).norm();
    x = y;
    lam = lam_new;
    if (res < 1e-13 * std::max(1.0, std::abs(lam))) break;
  }
  out.value = lam;
  out.vec = x;
  out.overlap = std::abs(x.dot(v0.normalized()));
  return out;
}

} // namespace detail

/// Physical-branch analysis of the rescaled telegraph block system.
inline PhysicalBranch telegraph_branch(const TelegraphSystem& ts, const RVec& chi, double K = 0.0)
{
  const int Nx = ts.Nx, Nt = ts.sys.Nt;
  require(Nx >= 2 && Nt >= 2, "telegraph_branch: need Nx, Nt >= 2");
  const double lt = ts.lambda_tilde;
  require(lt > 0.0 && lt < 1.0, "telegraph_branch: lambda_tilde must lie in (0,1)");
  const double pi = std::numbers::pi;
  PhysicalBranch b;
  b.Nx = Nx;
  b.Nt = Nt;
  b.lambda_tilde = lt;
  b.epsilon = ts.epsilon;
  b.tau = ts.tau;
  b.remainder_scale = ts.epsilon * ts.epsilon / ts.tau;
  for (int r = 1; r <= Nt; ++r) b.theta_r.push_back(2.0 * std::cos(r * pi / (Nt + 1)));
  for (int s = 1; s <= Nx; ++s) {
    b.ell_s.push_back(-2.0 + 2.0 * std::cos(s * pi / (Nx + 1)));
    b.q_s.push_back(1.0 - lt * (1.0 - std::cos(s * pi / (Nx + 1))));
  }
  b.lam_phys_formula = 1.0 - std::cos(pi / (Nt + 1)) * (1.0 - lt + lt * std::cos(pi / (Nx + 1)));

  // u11 = xi^(1) (x) [zeta^(1); 0], block j = 1..Nt in the stacked order
  const Eigen::Index B = 2 * Nx, n = B * Nt;
  RVec u11 = RVec::Zero(n);
  for (int j = 1; j <= Nt; ++j) {
    double xi = std::sqrt(2.0 / (Nt + 1)) * std::sin(j * pi / (Nt + 1));
    for (int m = 1; m <= Nx; ++m)
      u11((j - 1) * B + (m - 1)) = xi * std::sqrt(2.0 / (Nx + 1)) * std::sin(m * pi / (Nx + 1));
  }
  b.u11 = u11.cast<cplx>();

  detail::RSp H1 = detail::block_hermitian_part(ts.sys);
  auto tilde = detail::branch_eigenpair(H1, u11, 0.0);
  b.lam_phys_numeric = tilde.value;
  b.overlap_tilde = tilde.overlap;
  if (tilde.overlap < 0.5)
    b.diagnostics += "H~1 branch overlap " + std::to_string(tilde.overlap) + " < 0.5; ";

  const Vec F = detail::stacked_source(ts.sys, ts.w0_hat);
  b.coupling = F.conjugate().cwiseProduct(b.u11).norm();
  b.K_required = b.coupling / (std::sqrt(2.0) * b.lam_phys_formula);
  b.chi_norm_sq = chi.squaredNorm();
  auto traj = classical_imex_solve(ts.sys, ts.w0_hat);
  double un2 = 0.0;
  for (int k = 1; k <= Nt; ++k) un2 += traj[k].squaredNorm();
  b.u_norm = std::sqrt(un2);
  b.gK = 1.0 + b.K_required * std::sqrt(b.chi_norm_sq) / b.u_norm;

  // H_homo,1 = [[H~1, -diag(F)/(2K) on chi columns], [transpose, 0]]
  b.K = K > 0.0 ? K : std::max(b.K_required, 1e-300);
  std::vector<int> support;
  require(chi.size() == n, "telegraph_branch: chi has the wrong length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (chi(i) == 1.0) support.push_back(static_cast<int>(i));
  const Eigen::Index m = static_cast<Eigen::Index>(support.size());
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < H1.outerSize(); ++k)
    for (detail::RSp::InnerIterator it(H1, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  detail::RSp E(n + m, n + m);
  std::vector<Eigen::Triplet<double>> etrip;
  for (Eigen::Index j = 0; j < m; ++j) {
    double v = -F(support[j]).real() / (2.0 * b.K);
    if (v == 0.0) continue;
    trip.emplace_back(support[j], n + j, v);
    trip.emplace_back(n + j, support[j], v);
    etrip.emplace_back(support[j], n + j, v);
    etrip.emplace_back(n + j, support[j], v);
  }
  detail::RSp Hh(n + m, n + m);
  Hh.setFromTriplets(trip.begin(), trip.end());
  E.setFromTriplets(etrip.begin(), etrip.end());
  RVec vstar = RVec::Zero(n + m);
  vstar.head(n) = u11;
  b.first_order = vstar.dot(E * vstar);
  b.delta_lambda = -b.coupling * b.coupling / (4.0 * b.K * b.K * b.lam_phys_formula);
  b.lam_phys_perturbative = b.lam_phys_formula + b.delta_lambda;
  auto homo = detail::branch_eigenpair(Hh, vstar, b.lam_phys_perturbative);
  b.lam_homo_numeric = homo.value;
  b.overlap_homo = homo.overlap;
  if (homo.overlap < 0.5)
    b.diagnostics += "H_homo,1 branch overlap " + std::to_string(homo.overlap) + " < 0.5; ";
  return b;
}

} // namespace qimex

#endif // QIMEX_COMPLEXITY_MODEL_HPP

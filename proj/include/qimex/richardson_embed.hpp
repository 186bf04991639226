#ifndef QIMEX_RICHARDSON_EMBED_HPP
#define QIMEX_RICHARDSON_EMBED_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "imex_engine.hpp"
#include "spectral_core.hpp"

namespace qimex {

/// All-at-once system H u = F with u = [u_Nt; ...; u_1] (newest block first).
struct BlockSystem {
  Mat H;
  Vec F;
  int block_dim = 0;
  int Nt = 0;
  std::vector<Mat> P;  // P_0..P_{Nt-1}
  std::vector<Mat> Q;  // Q_0..Q_{Nt-1}

  /// Block k of a stacked vector holds u_{Nt-k}.
  Vec time_block(const Vec& stacked, int n) const
  {
    return stacked.segment(static_cast<Eigen::Index>(Nt - n) * block_dim, block_dim);
  }
};

inline BlockSystem assemble_block_system(const ImexSystem& sys, const Vec& u0)
{
  require(sys.Nt >= 1, "assemble_block_system: Nt must be >= 1");
  const int N = sys.dim();
  require(u0.size() == N, "assemble_block_system: dimension mismatch");
  const int Nt = sys.Nt;
  BlockSystem bs;
  bs.block_dim = N;
  bs.Nt = Nt;
  bs.H = Mat::Zero(static_cast<Eigen::Index>(Nt) * N, static_cast<Eigen::Index>(Nt) * N);
  bs.F = Vec::Zero(static_cast<Eigen::Index>(Nt) * N);
  for (const auto& s : sys.steps) {
    require(s.P.rows() == N && s.Q.rows() == N && s.b.size() == N,
            "assemble_block_system: dimension mismatch");
    bs.P.push_back(s.P);
    bs.Q.push_back(s.Q);
  }
  for (int k = 0; k < Nt; ++k) {
    const int n = Nt - 1 - k;
    const auto& s = sys.steps[n];
    bs.H.block(k * N, k * N, N, N) = s.P;
    if (k + 1 < Nt) bs.H.block(k * N, (k + 1) * N, N, N) = -s.Q;
    bs.F.segment(k * N, N) = s.b;
  }
  bs.F.segment((Nt - 1) * N, N) = sys.steps[0].Q * u0 + sys.steps[0].b;
  return bs;
}

/// u_inf = H^{-1} F.
inline Vec steady_state(const BlockSystem& bs)
{
  Eigen::PartialPivLU<Mat> lu(bs.H);
  if (!(lu_rcond(lu) > 1e-12)) throw NumericalError("steady_state: condition number > 1e12");
  return lu.solve(bs.F);
}

/// Generator [[-H, diag(F)/K restricted to chi], [0, 0]] of the homogeneous flow.
struct HomogeneousEmbedding {
  Mat generator;
  double K = 1.0;
  RVec chi;                   // 0/1 over the physical unknowns
  std::vector<int> support;   // indices where chi = 1, one auxiliary column each
  Vec init;
  int n_phys = 0;

  int n_aux() const { return static_cast<int>(support.size()); }
  int size() const { return n_phys + n_aux(); }
};

/// Indicator of the nonzero entries of F.
inline RVec support_indicator(const Vec& F)
{
  RVec chi = RVec::Zero(F.size());
  for (Eigen::Index i = 0; i < F.size(); ++i)
    if (F(i) != cplx(0.0)) chi(i) = 1.0;
  return chi;
}

inline HomogeneousEmbedding embed_homogeneous(const BlockSystem& bs, double K,
                                              const std::optional<RVec>& chi_in = std::nullopt,
                                              const std::optional<Vec>& u0_stacked = std::nullopt)
{
  require(K > 0.0, "embed_homogeneous: K must be positive");
  const Eigen::Index n = bs.H.rows();
  HomogeneousEmbedding emb;
  emb.K = K;
  emb.n_phys = static_cast<int>(n);
  emb.chi = chi_in ? *chi_in : support_indicator(bs.F);
  require(emb.chi.size() == n, "embed_homogeneous: chi has the wrong length");
  for (Eigen::Index i = 0; i < n; ++i) {
    double c = emb.chi(i);
    require(c == 0.0 || c == 1.0, "embed_homogeneous: chi must be a 0/1 vector");
    if (bs.F(i) != cplx(0.0) && c != 1.0)
      throw ValidationError("embed_homogeneous: chi does not cover the support of F");
    if (c == 1.0) emb.support.push_back(static_cast<int>(i));
  }
  const Eigen::Index m = emb.n_aux();
  emb.generator = Mat::Zero(n + m, n + m);
  emb.generator.topLeftCorner(n, n) = -bs.H;
  for (Eigen::Index j = 0; j < m; ++j) {
    int i = emb.support[j];
    emb.generator(i, n + j) = bs.F(i) / K;
  }
  emb.init = Vec::Zero(n + m);
  if (u0_stacked) {
    require(u0_stacked->size() == n, "embed_homogeneous: u0 has the wrong length");
    emb.init.head(n) = *u0_stacked;
  }
  emb.init.tail(m).setConstant(K);
  return emb;
}

struct DecayCertificate {
  double lambda_min_H1 = 0.0;
  double weyl_bound = 0.0;
  double T_evol = 0.0;
  double T_evol_weyl = NAN;     // from the Weyl bound, NaN when it is not positive
  double T_evol_numeric = 0.0;  // from the numeric gap
  double delta_ss = 0.0;
  bool weyl_certified = true;   // false: WARN, numeric gap used
  bool eigenvalue_only = false; // spectrum of H in the right half plane but H_1 indefinite
};

inline DecayCertificate decay_certificate(const BlockSystem& bs, double delta_ss)
{
  require(delta_ss > 0.0 && delta_ss < 1.0, "decay_certificate: delta_ss must lie in (0,1)");
  DecayCertificate c;
  c.delta_ss = delta_ss;
  c.lambda_min_H1 = lambda_min_herm(bs.H);
  c.weyl_bound = weyl_gap_bound(bs.P, bs.Q);
  const double L = std::log(1.0 / delta_ss);
  if (!(c.lambda_min_H1 > 0.0)) {
    Eigen::ComplexEigenSolver<Mat> es(bs.H, false);
    c.eigenvalue_only = es.eigenvalues().real().minCoeff() > 0.0;
    throw NumericalError(
        "decay_certificate: lambda_min(H_1) = " + std::to_string(c.lambda_min_H1) +
        " <= 0 (Weyl bound " + std::to_string(c.weyl_bound) + ")" +
        (c.eigenvalue_only ? "; eigenvalues of H are in the right half plane: UNCERTIFIED" : ""));
  }
  c.T_evol_numeric = L / c.lambda_min_H1;
  if (c.weyl_bound > 0.0) {
    c.T_evol_weyl = L / c.weyl_bound;
    c.T_evol = c.T_evol_weyl;
  } else {
    c.weyl_certified = false;
    c.T_evol = c.T_evol_numeric;
  }
  return c;
}

/// Full homogeneous state e^{A t} init.
inline Vec homogeneous_flow(const HomogeneousEmbedding& emb, double t)
{
  require(t >= 0.0, "richardson_flow_reference: t must be >= 0");
  if (t == 0.0) return emb.init;
  return matrix_exp(emb.generator, t) * emb.init;
}

/// Physical block of e^{A t} init.
inline Vec richardson_flow_reference(const HomogeneousEmbedding& emb, double t)
{
  return homogeneous_flow(emb, t).head(emb.n_phys);
}

/// Physical block of e^{A t} init by substepped Taylor series on the sparse generator.
inline Vec richardson_flow_action(const HomogeneousEmbedding& emb, double t)
{
  require(t >= 0.0, "richardson_flow_action: t must be >= 0");
  if (t == 0.0) return emb.init.head(emb.n_phys);
  const SpMat A = to_sparse(emb.generator);
  double a1 = 0.0;  // max column sum
  for (int k = 0; k < A.outerSize(); ++k) {
    double c = 0.0;
    for (SpMat::InnerIterator it(A, k); it; ++it) c += std::abs(it.value());
    a1 = std::max(a1, c);
  }
  const long long m = std::max(1LL, static_cast<long long>(std::ceil(a1 * t)));
  const double dt = t / static_cast<double>(m);
  Vec v = emb.init;
  for (long long s = 0; s < m; ++s) {
    Vec term = v, acc = v;
    for (int k = 1; k <= 60; ++k) {
      term = (dt / k) * (A * term);
      acc += term;
      if (term.norm() <= 1e-17 * acc.norm()) break;
    }
    v = acc;
  }
  return v.head(emb.n_phys);
}

} // namespace qimex

#endif // QIMEX_RICHARDSON_EMBED_HPP

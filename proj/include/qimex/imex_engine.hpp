#ifndef QIMEX_IMEX_ENGINE_HPP
#define QIMEX_IMEX_ENGINE_HPP

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "spectral_core.hpp"

namespace qimex {

/// du/dt = (L1 u + b1)/eps + L2 u + b2 on [0, T].
struct MultiscaleProblem {
  int dim = 0;
  std::function<Mat(double)> L1;
  std::function<Mat(double)> L2;
  std::function<Vec(double)> b1;
  std::function<Vec(double)> b2;
  double epsilon = 1.0;
  Vec u0;
  double T = 1.0;
};

struct ImexStep {
  Mat P;
  Mat Q;
  Vec b;
};

/// P_n u_{n+1} = Q_n u_n + b_n, n = 0..Nt-1.
struct ImexSystem {
  std::vector<ImexStep> steps;
  double tau = 0.0;
  int Nt = 0;

  int dim() const { return steps.empty() ? 0 : static_cast<int>(steps[0].P.rows()); }
};

inline Mat zero_if_empty(const std::function<Mat(double)>& f, double t, int n)
{
  return f ? f(t) : Mat::Zero(n, n);
}

inline Vec zero_if_empty(const std::function<Vec(double)>& f, double t, int n)
{
  return f ? f(t) : Vec::Zero(n);
}

inline void validate(const MultiscaleProblem& pb)
{
  require(pb.dim >= 1, "problem: dim must be >= 1");
  require(pb.epsilon > 0.0, "problem: epsilon must be positive");
  require(pb.T > 0.0, "problem: T must be positive");
  require(pb.u0.size() == pb.dim, "problem: u0 has the wrong length");
}

inline ImexSystem build_imex(const MultiscaleProblem& pb, int Nt)
{
  validate(pb);
  require(Nt >= 1, "build_imex: Nt must be >= 1");
  const int n = pb.dim;
  const double eps = pb.epsilon;
  ImexSystem sys;
  sys.Nt = Nt;
  sys.tau = pb.T / Nt;
  const double tau = sys.tau;
  const Mat Id = Mat::Identity(n, n);
  sys.steps.reserve(Nt);
  for (int k = 0; k < Nt; ++k) {
    Mat L1 = zero_if_empty(pb.L1, (k + 1) * tau, n);
    Mat L2 = zero_if_empty(pb.L2, k * tau, n);
    require(L1.rows() == n && L1.cols() == n, "build_imex: L1 has the wrong size");
    require(L2.rows() == n && L2.cols() == n, "build_imex: L2 has the wrong size");
    ImexStep s;
    s.P = eps * Id - tau * L1;
    s.Q = eps * (Id + tau * L2);
    s.b = tau * zero_if_empty(pb.b1, k * tau, n) + tau * eps * zero_if_empty(pb.b2, k * tau, n);
    Eigen::FullPivLU<Mat> lu(s.P);
    if (!lu.isInvertible())
      throw NumericalError("build_imex: singular P_n at n = " + std::to_string(k));
    sys.steps.push_back(std::move(s));
  }
  return sys;
}

/// Sequential oracle. Returns u_0..u_Nt.
inline std::vector<Vec> classical_imex_solve(const ImexSystem& sys, const Vec& u0)
{
  require(u0.size() == sys.dim(), "classical_imex_solve: u0 has the wrong length");
  std::vector<Vec> traj;
  traj.reserve(sys.Nt + 1);
  traj.push_back(u0);
  for (int k = 0; k < sys.Nt; ++k) {
    const auto& s = sys.steps[k];
    Eigen::PartialPivLU<Mat> lu(s.P);
    double rc = lu_rcond(lu);
    if (!(rc > 1e-12))
      throw NumericalError("classical_imex_solve: ill-conditioned P_n at n = " +
                           std::to_string(k));
    traj.push_back(lu.solve(s.Q * traj.back() + s.b));
  }
  return traj;
}

/// max_n ||P_n^{-1} Q_n||_2; below one means the error recursion contracts.
inline double contraction_factor(const ImexSystem& sys)
{
  double worst = 0.0;
  for (const auto& s : sys.steps) worst = std::max(worst, norm2(s.P.partialPivLu().solve(s.Q)));
  return worst;
}

struct StepCountEstimate {
  long long Nt_required = 1;
  double Nt_raw = 1.0;        // unrounded bound
  bool saturated = false;     // bound exceeded Nt_cap
  long long Nt_full = -1;  // from the unsimplified global bound, -1 when not contractive
  double u_dd_max = 0.0;
  double L2u_d_max = 0.0;
  double b1_d_max = 0.0;
  double b2_d_max = 0.0;
  double uT_norm = 0.0;
  double gap = 0.0;
  double L2_norm_max = 0.0;
  double delta = 0.0;
  double numerator = 0.0;
};

/// Step count for relative final-time error delta, constants from a coarse Nt=32 run.
inline StepCountEstimate estimate_step_count(const MultiscaleProblem& pb, double delta)
{
  validate(pb);
  require(delta > 0.0 && delta < 1.0, "estimate_step_count: delta must lie in (0,1)");
  constexpr int Nc = 32;
  constexpr double inflate = 2.0;
  const int n = pb.dim;
  const double eps = pb.epsilon;
  const double tau = pb.T / Nc;

  StepCountEstimate est;
  est.delta = delta;
  double sup_lmax = -INFINITY;
  for (int k = 0; k <= Nc; ++k) {
    double t = k * tau;
    Mat L1 = zero_if_empty(pb.L1, t, n);
    sup_lmax = std::max(sup_lmax, lambda_max_herm(L1));
    est.L2_norm_max = std::max(est.L2_norm_max, norm2(zero_if_empty(pb.L2, t, n)));
  }
  est.gap = -sup_lmax;
  if (!(est.gap > 0.0))
    throw ValidationError("estimate_step_count: sup lambda_max(sym L1) >= 0, no dissipativity");

  ImexSystem coarse = build_imex(pb, Nc);
  auto u = classical_imex_solve(coarse, pb.u0);
  for (int k = 1; k < Nc; ++k)
    est.u_dd_max = std::max(est.u_dd_max, (u[k + 1] - 2.0 * u[k] + u[k - 1]).norm() / (tau * tau));
  for (int k = 0; k < Nc; ++k) {
    double t0 = k * tau, t1 = (k + 1) * tau;
    Vec l2a = zero_if_empty(pb.L2, t0, n) * u[k];
    Vec l2b = zero_if_empty(pb.L2, t1, n) * u[k + 1];
    est.L2u_d_max = std::max(est.L2u_d_max, (l2b - l2a).norm() / tau);
    est.b1_d_max = std::max(
        est.b1_d_max, (zero_if_empty(pb.b1, t1, n) - zero_if_empty(pb.b1, t0, n)).norm() / tau);
    est.b2_d_max = std::max(
        est.b2_d_max, (zero_if_empty(pb.b2, t1, n) - zero_if_empty(pb.b2, t0, n)).norm() / tau);
  }
  est.u_dd_max *= inflate;
  est.L2u_d_max *= inflate;
  est.b1_d_max *= inflate;
  est.b2_d_max *= inflate;
  est.uT_norm = u.back().norm();
  if (!(est.uT_norm > 0.0)) throw NumericalError("estimate_step_count: u(T) vanishes");

  est.numerator = eps / 2.0 * est.u_dd_max + eps * est.L2u_d_max + est.b1_d_max + eps * est.b2_d_max;
  double Nt = pb.T / delta * est.numerator / (est.gap * est.uT_norm);
  constexpr double Nt_cap = 1e15;
  est.Nt_raw = Nt;
  est.saturated = !(Nt <= Nt_cap);
  est.Nt_required = est.saturated ? static_cast<long long>(Nt_cap)
                                  : static_cast<long long>(std::max(1.0, std::ceil(Nt - 1e-9)));

  // unsimplified bound with ||P^-1|| <= 1/(eps+tau g), ||P^-1 Q|| <= eps(1+tau||L2||)/(eps+tau g)
  auto full_err = [&](long long N) -> double {
    double tk = pb.T / static_cast<double>(N);
    double pinv = 1.0 / (eps + tk * est.gap);
    double amp = eps * (1.0 + tk * est.L2_norm_max) * pinv;
    if (amp >= 1.0) return INFINITY;
    return pinv * est.numerator * tk * tk / (1.0 - amp);
  };
  const double target = delta * est.uT_norm;
  long long hi = 1;
  while (hi < (1LL << 40) && !(full_err(hi) < target)) hi *= 2;
  if (full_err(hi) < target) {
    long long lo = hi / 2;
    while (hi - lo > 1) {
      long long mid = lo + (hi - lo) / 2;
      if (full_err(mid) < target) hi = mid;
      else lo = mid;
    }
    est.Nt_full = std::max(1LL, hi);
  }
  return est;
}

} // namespace qimex

#endif // QIMEX_IMEX_ENGINE_HPP

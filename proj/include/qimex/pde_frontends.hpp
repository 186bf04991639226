#ifndef QIMEX_PDE_FRONTENDS_HPP
#define QIMEX_PDE_FRONTENDS_HPP

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "imex_engine.hpp"
#include "spectral_core.hpp"

namespace qimex {

using TimeFn = std::function<double(double)>;
using PointFn = std::function<double(const std::vector<double>&)>;
using TraceFn = std::function<double(double, const std::vector<double>&)>;

/// Number of steps for a target step size; tau = T/Nt never exceeds dt.
inline int steps_for(double T, double dt)
{
  require(T > 0.0 && dt > 0.0, "steps_for: T and dt must be positive");
  return static_cast<int>(std::max(1.0, std::ceil(T / dt - 1e-9)));
}

// ---------------------------------------------------------------- heat

/// eps u_t = sum_k a_k(t) d_kk u on (0,1)^d, Dirichlet data g(t,x).
struct HeatConfig {
  int d = 1;
  int Nx = 15;  // interior points per axis
  std::vector<TimeFn> a_funcs;
  double epsilon = 1.0;
  PointFn u0_func;
  TraceFn boundary_func;  // empty: homogeneous
  double T = 0.1;
  double delta = 1e-2;

  double h() const { return 1.0 / (Nx + 1); }
  long long size() const
  {
    long long n = 1;
    for (int k = 0; k < d; ++k) n *= Nx;
    return n;
  }
};

inline constexpr long long heat_state_cap = 4096;

inline void validate(const HeatConfig& cfg)
{
  require(cfg.d >= 1, "heat: d must be >= 1");
  require(cfg.Nx >= 1, "heat: Nx must be >= 1");
  require(cfg.size() <= heat_state_cap, "heat: state dimension exceeds 4096");
  require(static_cast<int>(cfg.a_funcs.size()) == cfg.d, "heat: need one diffusivity per axis");
  for (const auto& a : cfg.a_funcs) require(static_cast<bool>(a), "heat: empty diffusivity");
  require(cfg.epsilon > 0.0, "heat: epsilon must be positive");
  require(cfg.T > 0.0, "heat: T must be positive");
}

/// Axis 0 is the slowest index, matching L (x) I (x) ... (x) I for k = 0.
inline std::vector<double> heat_point(const HeatConfig& cfg, long long idx)
{
  std::vector<double> x(cfg.d);
  for (int k = cfg.d - 1; k >= 0; --k) {
    x[k] = (idx % cfg.Nx + 1) * cfg.h();
    idx /= cfg.Nx;
  }
  return x;
}

/// sum_k w_k I^{(x)k} (x) L_h (x) I^{(x)(d-k-1)}.
inline Mat heat_operator(int d, int Nx, const std::vector<double>& w)
{
  require(static_cast<int>(w.size()) == d, "heat_operator: need d weights");
  const Mat L = second_derivative_matrix(Nx).L;
  const Mat I1 = Mat::Identity(Nx, Nx);
  Mat total;
  for (int k = 0; k < d; ++k) {
    Mat term = Mat::Identity(1, 1);
    for (int j = 0; j < d; ++j) term = kron(term, j == k ? L : I1);
    total = k == 0 ? Mat(w[k] * term) : Mat(total + w[k] * term);
  }
  return total;
}

inline MultiscaleProblem heat_problem(const HeatConfig& cfg)
{
  validate(cfg);
  const int d = cfg.d, Nx = cfg.Nx;
  const double h2 = cfg.h() * cfg.h();
  const auto n = static_cast<int>(cfg.size());
  MultiscaleProblem pb;
  pb.dim = n;
  pb.epsilon = cfg.epsilon;
  pb.T = cfg.T;
  std::vector<Mat> axis;
  for (int k = 0; k < d; ++k) {
    std::vector<double> w(d, 0.0);
    w[k] = 1.0 / h2;
    axis.push_back(heat_operator(d, Nx, w));
  }
  auto a = cfg.a_funcs;
  pb.L1 = [axis, a](double t) {
    Mat L = a[0](t) * axis[0];
    for (size_t k = 1; k < axis.size(); ++k) L += a[k](t) * axis[k];
    return L;
  };
  if (cfg.boundary_func) {
    auto g = cfg.boundary_func;
    pb.b1 = [cfg, g, a, h2, n](double t) {
      Vec b = Vec::Zero(n);
      for (long long i = 0; i < n; ++i) {
        auto x = heat_point(cfg, i);
        for (int k = 0; k < cfg.d; ++k) {
          double xk = x[k];
          if (xk == cfg.h()) {
            x[k] = 0.0;
            b(i) += a[k](t) * g(t, x) / h2;
          }
          if (std::abs(xk - cfg.Nx * cfg.h()) < 1e-14) {
            x[k] = 1.0;
            b(i) += a[k](t) * g(t, x) / h2;
          }
          x[k] = xk;
        }
      }
      return b;
    };
  }
  pb.u0 = Vec::Zero(n);
  for (long long i = 0; i < n; ++i) pb.u0(i) = cfg.u0_func ? cfg.u0_func(heat_point(cfg, i)) : 0.0;
  return pb;
}

inline double heat_lambda(const HeatConfig& cfg, int Nt)
{
  return cfg.T / Nt / (cfg.h() * cfg.h());
}

/// P_n = eps I - lambda sum_k a_k((n+1)tau) L_k, Q_n = eps I.
inline ImexSystem heat_build(const HeatConfig& cfg, int Nt)
{
  require(Nt >= 1, "heat_build: Nt must be >= 1");
  MultiscaleProblem pb = heat_problem(cfg);
  const double tau = cfg.T / Nt;
  for (int n = 0; n <= Nt; ++n)
    for (const auto& a : cfg.a_funcs)
      if (!(a(n * tau) >= 0.0))
        throw ValidationError("heat_build: negative diffusivity at t = " + std::to_string(n * tau));
  return build_imex(pb, Nt);
}

// ----------------------------------------------------------- telegraph

/// Which source vector closes the boundary stencils.
enum class TelegraphBoundary {
  Verbatim,   // b_hat as displayed with the rescaled scheme
  Consistent  // derived from the stencils term by term
};

/// u_t + v_x = 0, eps^2 v_t + a(t) u_x = -v with artificial viscosity h^{1/beta}/2.
struct TelegraphConfig {
  int Nx = 16;
  double beta = 2.0;
  double epsilon = 1e-2;
  TimeFn a_func;
  TimeFn u0_func;     // of x
  TimeFn u0_dx_func;  // of x, for well-prepared v0 = -A_0 u0'
  TimeFn v0_func;     // of x; overrides the well-prepared default
  TimeFn u_left, u_right, v_left, v_right;  // traces in t; empty: zero
  double T = 0.1;
  double dt_factor = 0.5;  // dt = dt_factor * h^{2-1/beta}
  double K = 0.0;          // 0: sqrt(Nx)
  TelegraphBoundary boundary = TelegraphBoundary::Verbatim;

  double h() const { return 1.0 / (Nx + 1); }
  double dt() const { return dt_factor * std::pow(h(), 2.0 - 1.0 / beta); }
  int Nt() const { return steps_for(T, dt()); }
  double K_value() const { return K > 0.0 ? K : std::sqrt(static_cast<double>(Nx)); }
};

struct TelegraphSystem {
  ImexSystem sys;
  Vec w0_hat;
  Vec u0, v0;
  std::vector<double> A;  // A_0..A_Nt
  int Nx = 0;
  double h = 0.0;
  double tau = 0.0;
  double lambda = 0.0;        // tau/h
  double lambda_tilde = 0.0;  // tau/h^{2-1/beta}
  double epsilon = 0.0;

  /// sqrt(A_n/tau), the factor restoring v_n from the lower block.
  double recovery_factor(int n) const { return std::sqrt(A.at(n) / tau); }
};

inline double trace(const TimeFn& f, double t) { return f ? f(t) : 0.0; }

inline void validate(const TelegraphConfig& cfg)
{
  require(cfg.Nx >= 2, "telegraph: Nx must be >= 2");
  require(cfg.beta >= 1.0, "telegraph: beta must be >= 1");
  require(cfg.epsilon > 0.0, "telegraph: epsilon must be positive");
  require(cfg.T > 0.0, "telegraph: T must be positive");
  require(cfg.dt_factor > 0.0, "telegraph: dt_factor must be positive");
  require(static_cast<bool>(cfg.a_func), "telegraph: a(t) missing");
  require(static_cast<bool>(cfg.u0_func), "telegraph: u0 missing");
  require(cfg.v0_func || cfg.u0_dx_func, "telegraph: need v0 or u0' for well-prepared data");
}

namespace detail {

struct TelegraphOps {
  Mat L, M, I;
};

inline TelegraphOps telegraph_ops(int Nx)
{
  return {second_derivative_matrix(Nx).L, central_difference_matrix(Nx).M, Mat::Identity(Nx, Nx)};
}

struct Traces {
  Vec b1, b2, c1, c2;
};

/// b1=[u0;0;..;uN], b2=[-u0;..;uN], c1=[v0;..;vN], c2=[-v0;..;vN] at time t.
inline Traces traces_at(const TelegraphConfig& cfg, double t)
{
  const int N = cfg.Nx;
  Traces tr{Vec::Zero(N), Vec::Zero(N), Vec::Zero(N), Vec::Zero(N)};
  double ul = trace(cfg.u_left, t), ur = trace(cfg.u_right, t);
  double vl = trace(cfg.v_left, t), vr = trace(cfg.v_right, t);
  tr.b1(0) += ul;
  tr.b1(N - 1) += ur;
  tr.b2(0) -= ul;
  tr.b2(N - 1) += ur;
  tr.c1(0) += vl;
  tr.c1(N - 1) += vr;
  tr.c2(0) -= vl;
  tr.c2(N - 1) += vr;
  return tr;
}

/// Unrescaled source for step n: upper and lower halves.
inline std::pair<Vec, Vec> telegraph_source(const TelegraphConfig& cfg, int n, double tau, double An)
{
  const double h = cfg.h();
  const double lam = tau / h;
  const double lt = tau / std::pow(h, 2.0 - 1.0 / cfg.beta);
  const double e2 = cfg.epsilon * cfg.epsilon;
  Traces now = traces_at(cfg, n * tau), next = traces_at(cfg, (n + 1) * tau);
  if (cfg.boundary == TelegraphBoundary::Verbatim) {
    Vec up = lt / 2.0 * (next.b1 - next.c2);
    Vec lo = -lt / 2.0 * (now.b2 - now.c1) - lam * An / (2.0 * e2) * next.b2;
    return {up, lo};
  }
  Vec up = lt / 2.0 * now.b1 - lam / 2.0 * next.c2;
  Vec lo = -lam / 2.0 * now.b2 + lt / 2.0 * now.c1 - lam * An / (2.0 * e2) * next.b2;
  return {up, lo};
}

inline void telegraph_initial(const TelegraphConfig& cfg, double A0, Vec& u0, Vec& v0)
{
  const int N = cfg.Nx;
  u0.resize(N);
  v0.resize(N);
  for (int j = 0; j < N; ++j) {
    double x = (j + 1) * cfg.h();
    u0(j) = cfg.u0_func(x);
    v0(j) = cfg.v0_func ? cfg.v0_func(x) : -A0 * cfg.u0_dx_func(x);
  }
}

inline void telegraph_common(const TelegraphConfig& cfg, int Nt, TelegraphSystem& ts)
{
  validate(cfg);
  require(Nt >= 1, "telegraph_build: Nt must be >= 1");
  ts.Nx = cfg.Nx;
  ts.h = cfg.h();
  ts.tau = cfg.T / Nt;
  ts.lambda = ts.tau / ts.h;
  ts.lambda_tilde = ts.tau / std::pow(ts.h, 2.0 - 1.0 / cfg.beta);
  ts.epsilon = cfg.epsilon;
  if (!(ts.lambda_tilde < 1.0))
    throw ValidationError("telegraph_build: lambda_tilde = " + std::to_string(ts.lambda_tilde) +
                          " must be < 1");
  const double e2 = cfg.epsilon * cfg.epsilon;
  ts.A.clear();
  for (int n = 0; n <= Nt; ++n) {
    double An = cfg.a_func(n * ts.tau) - e2;
    if (!(An > 0.0))
      throw ValidationError("telegraph_build: A_n = a(n tau) - eps^2 not positive at n = " +
                            std::to_string(n));
    ts.A.push_back(An);
  }
  telegraph_initial(cfg, ts.A[0], ts.u0, ts.v0);
  ts.sys.Nt = Nt;
  ts.sys.tau = ts.tau;
  ts.sys.steps.clear();
}

} // namespace detail

/// Rescaled scheme P_hat w_{n+1} = Q_hat w_n + b_hat in w_hat = [u; sqrt(tau/A_n) v].
inline TelegraphSystem telegraph_build(const TelegraphConfig& cfg, int Nt)
{
  TelegraphSystem ts;
  detail::telegraph_common(cfg, Nt, ts);
  const int N = cfg.Nx;
  const double h = ts.h, tau = ts.tau, lt = ts.lambda_tilde;
  const double e2 = cfg.epsilon * cfg.epsilon;
  auto ops = detail::telegraph_ops(N);
  const Mat D = ops.I + lt / 2.0 * ops.L;
  for (int n = 0; n < Nt; ++n) {
    const double An = ts.A[n];
    const double s = std::sqrt(tau * An) / (2.0 * h);
    ImexStep st;
    st.P = Mat::Zero(2 * N, 2 * N);
    st.P.topLeftCorner(N, N) = ops.I;
    st.P.topRightCorner(N, N) = s * ops.M;
    st.P.bottomLeftCorner(N, N) = s * ops.M;
    st.P.bottomRightCorner(N, N) = (1.0 + e2 / tau) * ops.I;
    st.Q = Mat::Zero(2 * N, 2 * N);
    st.Q.topLeftCorner(N, N) = D;
    st.Q.bottomLeftCorner(N, N) = -(e2 / (2.0 * h)) * std::sqrt(tau / An) * ops.M;
    st.Q.bottomRightCorner(N, N) = (e2 / tau) * D;
    auto [up, lo] = detail::telegraph_source(cfg, n, tau, An);
    st.b.resize(2 * N);
    st.b << up, e2 / std::sqrt(tau * An) * lo;
    ts.sys.steps.push_back(std::move(st));
  }
  ts.w0_hat.resize(2 * N);
  ts.w0_hat << ts.u0, std::sqrt(tau / ts.A[0]) * ts.v0;
  return ts;
}

/// Unrescaled scheme in w = [u; v].
inline TelegraphSystem telegraph_build_unrescaled(const TelegraphConfig& cfg, int Nt)
{
  TelegraphSystem ts;
  detail::telegraph_common(cfg, Nt, ts);
  const int N = cfg.Nx;
  const double tau = ts.tau, lam = ts.lambda, lt = ts.lambda_tilde;
  const double e2 = cfg.epsilon * cfg.epsilon;
  auto ops = detail::telegraph_ops(N);
  const Mat D = ops.I + lt / 2.0 * ops.L;
  for (int n = 0; n < Nt; ++n) {
    const double An = ts.A[n];
    ImexStep st;
    st.P = Mat::Zero(2 * N, 2 * N);
    st.P.topLeftCorner(N, N) = ops.I;
    st.P.topRightCorner(N, N) = lam / 2.0 * ops.M;
    st.P.bottomLeftCorner(N, N) = lam * An / (2.0 * e2) * ops.M;
    st.P.bottomRightCorner(N, N) = (1.0 + tau / e2) * ops.I;
    st.Q = Mat::Zero(2 * N, 2 * N);
    st.Q.topLeftCorner(N, N) = D;
    st.Q.bottomLeftCorner(N, N) = -lam / 2.0 * ops.M;
    st.Q.bottomRightCorner(N, N) = D;
    auto [up, lo] = detail::telegraph_source(cfg, n, tau, An);
    st.b.resize(2 * N);
    st.b << up, lo;
    ts.sys.steps.push_back(std::move(st));
  }
  ts.w0_hat.resize(2 * N);
  ts.w0_hat << ts.u0, ts.v0;
  return ts;
}

/// (u_n, v_n) from w_hat_n.
inline std::pair<Vec, Vec> telegraph_recover(const Vec& w_hat, double An, double tau)
{
  require(w_hat.size() % 2 == 0, "telegraph_recover: odd length");
  require(An > 0.0 && tau > 0.0, "telegraph_recover: A_n and tau must be positive");
  const Eigen::Index N = w_hat.size() / 2;
  return {w_hat.head(N), std::sqrt(An / tau) * w_hat.tail(N)};
}

/// Boundary entries of both components in the first Nt-1 blocks, the full last block.
inline RVec telegraph_chi(int Nx, int Nt)
{
  require(Nx >= 2 && Nt >= 1, "telegraph_chi: need Nx >= 2, Nt >= 1");
  const Eigen::Index B = 2 * Nx;
  RVec chi = RVec::Zero(B * Nt);
  for (int k = 0; k + 1 < Nt; ++k) {
    chi(k * B) = 1.0;
    chi(k * B + Nx - 1) = 1.0;
    chi(k * B + Nx) = 1.0;
    chi(k * B + 2 * Nx - 1) = 1.0;
  }
  chi.segment((Nt - 1) * B, B).setOnes();
  return chi;
}

// ---------------------------------------------------- order study

struct OrderStudy {
  double beta = 1.0;
  std::vector<int> Nx;
  std::vector<double> h;
  std::vector<int> Nt;
  std::vector<double> error;
  double slope = 0.0;
  double predicted = 0.0;
  bool monotone = true;
};

/// min(2 - 1/beta, 2, 1/beta) for tau ~ h^{2-1/beta}.
inline double predicted_order(double beta)
{
  return std::min({2.0 - 1.0 / beta, 2.0, 1.0 / beta});
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need >= 2 points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Amplitudes (alpha, gamma) of u = alpha sin(pi x), v = gamma cos(pi x) solving the
/// undamped-viscosity telegraph system, by exponential midpoint substeps.
inline std::vector<std::pair<double, double>> telegraph_modal_reference(
    const TimeFn& a, double eps, double alpha0, double gamma0, double tau, int Nt, int substeps = 64)
{
  const double pi = std::numbers::pi;
  const double e2 = eps * eps;
  std::vector<std::pair<double, double>> out{{alpha0, gamma0}};
  RVec y(2);
  y << alpha0, gamma0;
  const double ds = tau / substeps;
  for (int n = 0; n < Nt; ++n) {
    for (int k = 0; k < substeps; ++k) {
      double tm = n * tau + (k + 0.5) * ds;
      RMat G(2, 2);
      G << 0.0, pi, -a(tm) * pi / e2, -1.0 / e2;
      RMat Gs = G * ds;
      RMat E = Gs.exp();
      y = E * y;
    }
    out.emplace_back(y(0), y(1));
  }
  return out;
}

/// Convergence of the dissipative scheme to the telegraph solution u = alpha(t) sin(pi x).
/// Error is max_n (|u_n - u(t_n)|_h + eps |v_n - v(t_n)|_h) in the grid l2 norm.
inline OrderStudy dissipative_order_study(const TelegraphConfig& tmpl, double beta,
                                          const std::vector<int>& Nx_list)
{
  require(Nx_list.size() >= 3, "order study: need at least 3 grid levels");
  constexpr double pi = std::numbers::pi;
  OrderStudy st;
  st.beta = beta;
  st.predicted = predicted_order(beta);
  for (int Nx : Nx_list) {
    TelegraphConfig cfg = tmpl;
    cfg.Nx = Nx;
    cfg.beta = beta;
    const double A0 = cfg.a_func(0.0) - cfg.epsilon * cfg.epsilon;
    const double alpha0 = 1.0, gamma0 = -A0 * pi;
    cfg.u0_func = [](double x) { return std::sin(pi * x); };
    cfg.v0_func = [gamma0](double x) { return gamma0 * std::cos(pi * x); };
    cfg.u0_dx_func = nullptr;
    const int Nt = cfg.Nt();
    const double tau = cfg.T / Nt;
    auto ref = telegraph_modal_reference(cfg.a_func, cfg.epsilon, alpha0, gamma0, tau, Nt);
    // v = gamma cos(pi x): traces gamma at x = 0 and -gamma at x = 1
    auto gamma_at = [ref, tau](double t) {
      int n = static_cast<int>(std::lround(t / tau));
      return ref.at(std::min<size_t>(n, ref.size() - 1)).second;
    };
    cfg.u_left = cfg.u_right = nullptr;
    cfg.v_left = gamma_at;
    cfg.v_right = [gamma_at](double t) { return -gamma_at(t); };
    TelegraphSystem ts = telegraph_build(cfg, Nt);
    auto traj = classical_imex_solve(ts.sys, ts.w0_hat);
    const double h = cfg.h();
    double worst = 0.0;
    for (int n = 0; n <= Nt; ++n) {
      auto [u, v] = telegraph_recover(traj[n], ts.A[n], tau);
      Vec ue(Nx), ve(Nx);
      for (int j = 0; j < Nx; ++j) {
        double x = (j + 1) * h;
        ue(j) = ref[n].first * std::sin(pi * x);
        ve(j) = ref[n].second * std::cos(pi * x);
      }
      double e = std::sqrt(h) * ((u - ue).norm() + cfg.epsilon * (v - ve).norm());
      worst = std::max(worst, e);
    }
    st.Nx.push_back(Nx);
    st.h.push_back(h);
    st.Nt.push_back(Nt);
    st.error.push_back(worst);
  }
  for (size_t i = 1; i < st.error.size(); ++i)
    if (!(st.error[i] < st.error[i - 1])) st.monotone = false;
  st.slope = loglog_slope(st.h, st.error);
  return st;
}

} // namespace qimex

#endif // QIMEX_PDE_FRONTENDS_HPP

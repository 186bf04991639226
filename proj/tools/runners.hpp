#ifndef QIMEX_TOOLS_RUNNERS_HPP
#define QIMEX_TOOLS_RUNNERS_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <thread>

#include "config.hpp"

namespace qimex::cli {

struct RunContext {
  std::optional<std::uint64_t> seed;  // command line override
  int threads = 1;
};

struct Output {
  json report = json::object();
  std::optional<Table> solution;
  std::optional<Table> bounds;
};

inline const std::vector<std::string>& known_kinds()
{
  static const std::vector<std::string> k{"heat1d",           "heat2d",        "telegraph",  "evoltime-bench",
                                          "complexity-report", "epsilon-sweep", "order-study"};
  return k;
}

// ------------------------------------------------------------ pipeline

inline PipelineOptions parse_pipeline(Fields& top, double delta, const RunContext& ctx)
{
  PipelineOptions o;
  o.delta_fourier = delta / 3.0;
  o.evolve.threads = ctx.threads;
  if (!top.has("pipeline")) return o;
  Fields f(top.raw("pipeline"), "pipeline");
  auto rec = f.get<std::string>("reconstruction", "single_point");
  if (rec == "single_point") o.method = Reconstruction::SinglePoint;
  else if (rec == "integral") o.method = Reconstruction::Integral;
  else throw ValidationError("pipeline: reconstruction must be single_point or integral");
  auto rule = f.get<std::string>("p_diamond_rule", "general");
  if (rule == "general") o.p_rule = PDiamondRule::LambdaMax;
  else if (rule == "zero") o.p_rule = PDiamondRule::Zero;
  else throw ValidationError("pipeline: p_diamond_rule must be general or zero");
  o.Np_fixed = f.get<int>("Np", 0);
  if (o.Np_fixed != 0 && (!is_pow2(o.Np_fixed) || o.Np_fixed < 4))
    throw ValidationError("pipeline: Np must be a power of two >= 4");
  o.Np_start = f.get<int>("Np_start", o.Np_start);
  o.Np_cap = f.get<int>("Np_cap", o.Np_cap);
  if (!is_pow2(o.Np_start) || !is_pow2(o.Np_cap) || o.Np_start > o.Np_cap)
    throw ValidationError("pipeline: Np_start and Np_cap must be powers of two with Np_start <= Np_cap");
  if (f.has("grid")) {
    Fields g(f.raw("grid"), "pipeline.grid");
    double Lp = g.need<double>("Lp"), Rp = g.need<double>("Rp");
    int Np = g.need<int>("Np");
    g.finish();
    o.grid = make_grid(Lp, Rp, Np, o.delta_fourier);
    o.grid->delta_fourier = o.delta_fourier;
  }
  auto solver = f.get<std::string>("solver", "auto");
  if (solver == "auto") o.evolve.solver = ModeSolver::Auto;
  else if (solver == "dense") o.evolve.solver = ModeSolver::Dense;
  else if (solver == "chebyshev") o.evolve.solver = ModeSolver::Chebyshev;
  else throw ValidationError("pipeline: solver must be auto, dense or chebyshev");
  o.evolve.use_conjugate_symmetry = f.get<bool>("conjugate_symmetry", true);
  o.evolve.dense_max_dim = f.get<int>("dense_max_dim", o.evolve.dense_max_dim);
  f.finish();
  return o;
}

struct QuantumRun {
  BlockSystem bs;
  DecayCertificate cert;
  HomogeneousEmbedding emb;
  PipelineResult res;
  std::vector<Vec> traj;
  Vec ref;    // classical trajectory stacked newest first
  Vec u_inf;  // H^{-1} F
  Vec flow;   // Richardson flow at T_evol
};

inline QuantumRun run_quantum(const ImexSystem& sys, const Vec& u0, double delta, double K,
                              const std::optional<RVec>& chi, const PipelineOptions& opt)
{
  QuantumRun q;
  q.traj = classical_imex_solve(sys, u0);
  q.bs = assemble_block_system(sys, u0);
  q.cert = decay_certificate(q.bs, delta / 3.0);
  q.emb = embed_homogeneous(q.bs, K, chi);
  q.res = run_pipeline(q.emb, q.cert, sys.dim(), opt);
  const int N = sys.dim(), Nt = sys.Nt;
  q.ref.resize(static_cast<Eigen::Index>(N) * Nt);
  for (int n = 1; n <= Nt; ++n) q.ref.segment(static_cast<Eigen::Index>(Nt - n) * N, N) = q.traj[n];
  q.u_inf = steady_state(q.bs);
  q.flow = richardson_flow_action(q.emb, q.cert.T_evol);
  return q;
}

inline double rel_err(const Vec& a, const Vec& ref)
{
  double d = ref.norm();
  return d > 0.0 ? (a - ref).norm() / d : (a - ref).norm();
}

inline json certificate_json(const DecayCertificate& c)
{
  return {{"operation", "decay_certificate"},
          {"lambda_min_H1", num(c.lambda_min_H1)},
          {"weyl_bound", num(c.weyl_bound)},
          {"T_evol", num(c.T_evol)},
          {"T_evol_weyl", num(c.T_evol_weyl)},
          {"T_evol_numeric", num(c.T_evol_numeric)},
          {"delta_ss", num(c.delta_ss)},
          {"weyl_certified", c.weyl_certified}};
}

inline json grid_json(const PipelineResult& r, const PipelineOptions& opt)
{
  json ref = json::array();
  for (auto [n, c] : r.grid.refinement) ref.push_back({{"Np", n}, {"change", num(c)}});
  return {{"operation", "build_grid"},
          {"Lp", num(r.grid.Lp)},
          {"Rp", num(r.grid.Rp)},
          {"Np", r.grid.Np},
          {"dp", num(r.grid.dp)},
          {"fixed", opt.grid.has_value() || opt.Np_fixed > 0},
          {"p_diamond_rule", opt.p_rule == PDiamondRule::Zero ? "zero" : "general"},
          {"p_diamond", num(r.p_diamond)},
          {"p_diamond_general", num(r.p_diamond_general)},
          {"p_star", num(r.p_star)},
          {"a1_min", num(r.a1_min)},
          {"a1_max", num(r.a1_max)},
          {"refinement", ref},
          {"probe_error_single", num(r.grid.probe_result.est_single)},
          {"probe_error_integral", num(r.grid.probe_result.est_integral)}};
}

inline json errors_json(const QuantumRun& q, const PipelineOptions& opt)
{
  const auto& r = q.res;
  const int Nt = q.bs.Nt;
  const Vec uq_final = r.blocks.back();
  const double diff = rel_err(r.u_single, r.u_integral);
  const double est_s = truncation_estimate(r, Reconstruction::SinglePoint);
  const double est_i = truncation_estimate(r, Reconstruction::Integral);
  return {{"operation", "run_pipeline against classical_imex_solve"},
          {"reconstruction", opt.method == Reconstruction::SinglePoint ? "single_point" : "integral"},
          {"trajectory_rel_l2", num(rel_err(r.u, q.ref))},
          {"trajectory_rel_l2_single_point", num(rel_err(r.u_single, q.ref))},
          {"trajectory_rel_l2_integral", num(rel_err(r.u_integral, q.ref))},
          {"final_rel_l2", num(rel_err(uq_final, q.traj[Nt]))},
          {"final_norm_classical", num(q.traj[Nt].norm())},
          {"method_difference_rel", num(diff)},
          {"truncation_estimate_single_point", num(est_s)},
          {"truncation_estimate_integral", num(est_i)},
          {"steady_state_vs_oracle_rel", num(rel_err(q.u_inf, q.ref))},
          {"steady_state_residual_rel", num(rel_err(q.flow, q.u_inf))},
          {"pipeline_vs_flow_rel", num(rel_err(r.u, q.flow))},
          {"unitarity_drift", num(r.drift)},
          {"pipeline_seconds", num(r.seconds)}};
}

inline json complexity_json(const ImexSystem& sys, const Vec& u0, const QuantumRun& q, double T,
                            double delta)
{
  double bmax = 0.0;
  for (const auto& s : sys.steps) bmax = std::max(bmax, s.b.norm());
  double umin = INFINITY;
  for (int n = 1; n <= sys.Nt; ++n) umin = std::min(umin, q.traj[n].norm());
  ComplexityInputs in;
  in.sys = &sys;
  in.u0 = u0;
  in.emb = &q.emb;
  in.grid = q.res.grid;
  in.T = T;
  in.T_evol = q.cert.T_evol;
  in.delta = delta;
  in.p_diamond = q.res.p_diamond;
  in.b1_norm_max = bmax;
  in.u_norm_min = umin;
  in.u_stacked_norm = q.u_inf.norm();
  in.F_norm = q.bs.F.norm();
  json j = {{"operation", "complexity_report"}};
  try {
    ComplexityReport c = complexity_report(in);
    j.update({{"s", c.s},
              {"hmax_estimate", num(c.hmax)},
              {"hmax_exact", num(c.hmax_exact)},
              {"T_evol", num(c.T_evol)},
              {"chi_berry", num(c.chi_berry)},
              {"queries", num(c.queries)},
              {"queries_flagged", c.queries_flagged},
              {"repetitions_full", num(c.reps_full)},
              {"repetitions_full_raw", num(c.reps_full_raw)},
              {"repetitions_final", num(c.reps_final)},
              {"repetitions_final_raw", num(c.reps_final_raw)},
              {"source_free", c.source_free},
              {"repetitions_success", num(c.reps_success)},
              {"success_probability", num(c.success_prob)},
              {"p_diamond", num(c.p_diamond)},
              {"composite_queries", num(c.composite)},
              {"n_p", c.n_p}});
  } catch (const NumericalError& e) {
    j["error"] = e.what();
  }
  return j;
}

// ---------------------------------------------------------------- heat

struct HeatSetup {
  HeatConfig cfg;
  int Nt = 0;
  double delta = 1e-2;
  double K = 1.0;
  // step rule, one of
  int Nt_given = 0;
  double dt_given = 0.0;
  double dt_factor = 0.5;

  int steps(const HeatConfig& c) const
  {
    if (Nt_given > 0) return Nt_given;
    if (dt_given > 0.0) return steps_for(c.T, dt_given);
    return steps_for(c.T, dt_factor * c.h() * c.h());
  }
};

inline HeatSetup parse_heat(Fields& f, int d)
{
  HeatSetup h;
  HeatConfig& c = h.cfg;
  c.d = d;
  c.Nx = f.get<int>("Nx", d == 1 ? 15 : 7);
  c.epsilon = f.get<double>("epsilon", 1.0);
  c.T = f.get<double>("T", 0.1);
  if (!(c.epsilon > 0.0)) throw ValidationError("heat: epsilon must be positive");
  if (!(c.T > 0.0)) throw ValidationError("heat: T must be positive");
  if (c.Nx < 1) throw ValidationError("heat: Nx must be >= 1");
  std::vector<TimeFn> a;
  if (f.has("a")) {
    const json& ja = f.raw("a");
    if (ja.is_array()) {
      if (static_cast<int>(ja.size()) != d) throw ValidationError("heat: a needs one profile per axis");
      for (size_t k = 0; k < ja.size(); ++k) a.push_back(parse_time_fn(ja[k], "a[" + std::to_string(k) + "]"));
    } else {
      a.assign(d, parse_time_fn(ja, "a"));
    }
  } else {
    a.assign(d, [](double t) { return 100.0 / (t + 1.0); });
  }
  if (f.get<bool>("hold_ratio", false)) {
    const double eps = c.epsilon;
    for (auto& fk : a) fk = [fk, eps](double t) { return eps * fk(t); };
  }
  c.a_funcs = a;
  SpatialFn u0 = f.has("u0") ? parse_spatial_fn(f.raw("u0"), "u0") : SpatialFn{"constant", 1.0, 1};
  c.u0_func = [u0](const std::vector<double>& x) { return u0.product(x); };
  if (f.has("boundary")) {
    TimeFn g = parse_time_fn(f.raw("boundary"), "boundary");
    c.boundary_func = [g](double t, const std::vector<double>&) { return g(t); };
  }
  h.delta = f.get<double>("delta", 1e-2);
  if (!(h.delta > 0.0 && h.delta < 1.0)) throw ValidationError("delta must lie in (0,1)");
  h.K = f.get<double>("K", 1.0);
  if (!(h.K > 0.0)) throw ValidationError("K must be positive");
  const int given = static_cast<int>(f.has("Nt")) + f.has("dt") + f.has("dt_factor");
  if (given > 1) throw ValidationError("heat: give at most one of Nt, dt, dt_factor");
  if (f.has("Nt")) {
    h.Nt_given = f.get<int>("Nt", 0);
    if (h.Nt_given < 1) throw ValidationError("heat: Nt must be >= 1");
  } else if (f.has("dt")) {
    h.dt_given = f.get<double>("dt", 0.0);
    if (!(h.dt_given > 0.0)) throw ValidationError("heat: dt must be positive");
  } else {
    h.dt_factor = f.get<double>("dt_factor", 0.5);
    if (!(h.dt_factor > 0.0)) throw ValidationError("heat: dt_factor must be positive");
  }
  validate(c);
  h.Nt = h.steps(c);
  return h;
}

inline Output run_heat(Fields& f, int d, const RunContext& ctx)
{
  HeatSetup h = parse_heat(f, d);
  PipelineOptions opt = parse_pipeline(f, h.delta, ctx);
  f.finish();
  const HeatConfig& c = h.cfg;
  ImexSystem sys = heat_build(c, h.Nt);
  MultiscaleProblem pb = heat_problem(c);
  QuantumRun q = run_quantum(sys, pb.u0, h.delta, h.K, std::nullopt, opt);

  Output out;
  const auto n = static_cast<long long>(c.size());
  Table t;
  t.header = {"t"};
  for (int k = 0; k < d; ++k) t.header.push_back(d == 1 ? "x" : "x" + std::to_string(k + 1));
  t.header.insert(t.header.end(), {"u_classical", "u_quantum"});
  for (int s = 1; s <= h.Nt; ++s) {
    const Vec& uc = q.traj[s];
    const Vec& uq = q.res.blocks[s - 1];
    for (long long i = 0; i < n; ++i) {
      std::vector<Cell> row{s * sys.tau};
      for (double x : heat_point(c, i)) row.emplace_back(x);
      row.emplace_back(uc(i).real());
      row.emplace_back(uq(i).real());
      t.add(std::move(row));
    }
  }
  out.solution = std::move(t);

  json& r = out.report;
  r["sizes"] = {{"operation", "heat_build"},
                {"d", d},
                {"Nx", c.Nx},
                {"h", num(c.h())},
                {"Nt", h.Nt},
                {"tau", num(sys.tau)},
                {"lambda", num(heat_lambda(c, h.Nt))},
                {"state_dim", n},
                {"stacked_dim", n * h.Nt},
                {"embedding_dim", q.emb.size()},
                {"K", num(h.K)}};
  try {
    StepCountEstimate est = estimate_step_count(pb, h.delta / 3.0);
    r["step_count"] = {{"operation", "estimate_step_count"},
                       {"Nt_required", est.Nt_required},
                       {"Nt_raw", num(est.Nt_raw)},
                       {"saturated", est.saturated},
                       {"Nt_used", h.Nt},
                       {"Nt_full", est.Nt_full},
                       {"uT_norm", num(est.uT_norm)},
                       {"gap", num(est.gap)}};
  } catch (const std::exception& e) {
    r["step_count"] = {{"operation", "estimate_step_count"}, {"error", e.what()}};
  }
  r["certificate"] = certificate_json(q.cert);
  r["grid"] = grid_json(q.res, opt);
  r["errors"] = errors_json(q, opt);
  r["complexity"] = complexity_json(sys, pb.u0, q, c.T, h.delta);
  r["complexity"]["heat_query_target"] = num(heat_query_target(c.Nx, h.delta));
  return out;
}

// ----------------------------------------------------------- telegraph

struct TelegraphSetup {
  TelegraphConfig cfg;
  int Nt = 0;
  double delta = 1e-2;
};

inline TelegraphBoundary parse_boundary_source(const std::string& s)
{
  if (s == "verbatim") return TelegraphBoundary::Verbatim;
  if (s == "consistent") return TelegraphBoundary::Consistent;
  throw ValidationError("telegraph: boundary_source must be verbatim or consistent");
}

inline TelegraphSetup parse_telegraph(Fields& f)
{
  TelegraphSetup s;
  TelegraphConfig& c = s.cfg;
  c.Nx = f.get<int>("Nx", 16);
  c.beta = f.get<double>("beta", 2.0);
  c.epsilon = f.get<double>("epsilon", 1e-2);
  c.T = f.get<double>("T", 0.1);
  c.dt_factor = f.get<double>("dt_factor", 0.5);
  c.K = f.get<double>("K", 0.0);
  if (c.K < 0.0) throw ValidationError("telegraph: K must be >= 0 (0 selects sqrt(Nx))");
  c.a_func = f.has("a") ? parse_time_fn(f.raw("a"), "a") : [](double t) { return 0.5 * t + 0.25; };
  SpatialFn u0 = f.has("u0") ? parse_spatial_fn(f.raw("u0"), "u0") : SpatialFn{"sine", 1.0, 1};
  c.u0_func = [u0](double x) { return u0(x); };
  c.u0_dx_func = [u0](double x) { return u0.dx(x); };
  if (f.has("v0")) {
    SpatialFn v0 = parse_spatial_fn(f.raw("v0"), "v0");
    c.v0_func = [v0](double x) { return v0(x); };
  }
  if (f.has("traces")) {
    Fields tr(f.raw("traces"), "traces");
    if (tr.has("u_left")) c.u_left = parse_time_fn(tr.raw("u_left"), "traces.u_left");
    if (tr.has("u_right")) c.u_right = parse_time_fn(tr.raw("u_right"), "traces.u_right");
    if (tr.has("v_left")) c.v_left = parse_time_fn(tr.raw("v_left"), "traces.v_left");
    if (tr.has("v_right")) c.v_right = parse_time_fn(tr.raw("v_right"), "traces.v_right");
    tr.finish();
  }
  c.boundary = parse_boundary_source(f.get<std::string>("boundary_source", "verbatim"));
  s.delta = f.get<double>("delta", 1e-2);
  if (!(s.delta > 0.0 && s.delta < 1.0)) throw ValidationError("delta must lie in (0,1)");
  validate(c);
  s.Nt = f.has("Nt") ? f.get<int>("Nt", 0) : c.Nt();
  if (s.Nt < 1) throw ValidationError("telegraph: Nt must be >= 1");
  return s;
}

inline json branch_json(const PhysicalBranch& b)
{
  return {{"operation", "telegraph_branch"},
          {"lambda_phys_formula", num(b.lam_phys_formula)},
          {"lambda_phys_numeric", num(b.lam_phys_numeric)},
          {"formula_numeric_diff", num(std::abs(b.lam_phys_formula - b.lam_phys_numeric))},
          {"remainder_scale", num(b.remainder_scale)},
          {"overlap", num(b.overlap_tilde)},
          {"coupling", num(b.coupling)},
          {"K_required", num(b.K_required)},
          {"chi_norm_sq", num(b.chi_norm_sq)},
          {"u_norm", num(b.u_norm)},
          {"gK", num(b.gK)},
          {"first_order", num(b.first_order)},
          {"delta_lambda", num(b.delta_lambda)},
          {"lambda_phys_perturbative", num(b.lam_phys_perturbative)},
          {"lambda_homo_numeric", num(b.lam_homo_numeric)},
          {"overlap_homo", num(b.overlap_homo)},
          {"diagnostics", b.diagnostics}};
}

inline Output run_telegraph(Fields& f, const RunContext& ctx)
{
  TelegraphSetup s = parse_telegraph(f);
  PipelineOptions opt = parse_pipeline(f, s.delta, ctx);
  f.finish();
  const TelegraphConfig& c = s.cfg;
  TelegraphSystem ts = telegraph_build(c, s.Nt);
  const RVec chi = telegraph_chi(c.Nx, s.Nt);
  const double K = c.K_value();
  QuantumRun q = run_quantum(ts.sys, ts.w0_hat, s.delta, K, chi, opt);

  Output out;
  Table t;
  t.header = {"t", "x", "u_classical", "u_quantum", "v_classical", "v_quantum"};
  double num2 = 0.0, den2 = 0.0;
  for (int n = 1; n <= s.Nt; ++n) {
    auto [uc, vc] = telegraph_recover(q.traj[n], ts.A[n], ts.tau);
    auto [uq, vq] = telegraph_recover(q.res.blocks[n - 1], ts.A[n], ts.tau);
    num2 += (uq - uc).squaredNorm() + (vq - vc).squaredNorm();
    den2 += uc.squaredNorm() + vc.squaredNorm();
    for (int j = 0; j < c.Nx; ++j)
      t.add({n * ts.tau, (j + 1) * ts.h, uc(j).real(), uq(j).real(), vc(j).real(), vq(j).real()});
  }
  out.solution = std::move(t);
  auto [ucT, vcT] = telegraph_recover(q.traj[s.Nt], ts.A[s.Nt], ts.tau);
  auto [uqT, vqT] = telegraph_recover(q.res.blocks.back(), ts.A[s.Nt], ts.tau);
  const double finT = std::sqrt(((uqT - ucT).squaredNorm() + (vqT - vcT).squaredNorm()) /
                                (ucT.squaredNorm() + vcT.squaredNorm()));

  json& r = out.report;
  r["sizes"] = {{"operation", "telegraph_build"},
                {"Nx", c.Nx},
                {"beta", num(c.beta)},
                {"epsilon", num(c.epsilon)},
                {"h", num(ts.h)},
                {"Nt", s.Nt},
                {"tau", num(ts.tau)},
                {"lambda", num(ts.lambda)},
                {"lambda_tilde", num(ts.lambda_tilde)},
                {"K", num(K)},
                {"chi_norm_sq", num(chi.squaredNorm())},
                {"boundary_source", c.boundary == TelegraphBoundary::Verbatim ? "verbatim" : "consistent"},
                {"stacked_dim", 2LL * c.Nx * s.Nt},
                {"embedding_dim", q.emb.size()}};
  r["certificate"] = certificate_json(q.cert);
  r["grid"] = grid_json(q.res, opt);
  r["errors"] = errors_json(q, opt);
  r["errors"]["uv_trajectory_rel_l2"] = num(std::sqrt(num2 / den2));
  r["errors"]["uv_final_rel_l2"] = num(finT);
  r["complexity"] = complexity_json(ts.sys, ts.w0_hat, q, c.T, s.delta);
  if (s.Nt >= 2) r["complexity"]["branch"] = branch_json(telegraph_branch(ts, chi, K));
  return out;
}

// ------------------------------------------------------ evoltime bench

inline Mat parse_matrix(const json& j, const std::string& where)
{
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array of rows");
  const size_t n = j.size();
  Mat M(n, n);
  for (size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != n) throw ValidationError(where + ": matrix must be square");
    for (size_t k = 0; k < n; ++k) M(i, k) = finite_number(j[i][k], where);
  }
  return M;
}

inline Mat random_matrix(std::mt19937_64& rng, int n)
{
  std::normal_distribution<double> g(0.0, 1.0);
  Mat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) M(i, k) = g(rng) / std::sqrt(static_cast<double>(n));
  return M;
}

inline std::vector<double> time_samples(double t_max, int samples)
{
  std::vector<double> ts;
  for (int k = 0; k < samples; ++k) ts.push_back(t_max * k / (samples - 1));
  return ts;
}

struct ChainCheck {
  int violations = 0;
  double worst = 0.0;  // largest relative excess
};

/// e^{alpha t} <= exact <= lognorm <= e^{|A| t}, relative slack 1e-10.
inline void check_chain(const std::vector<double>& lo, const std::vector<double>& exact,
                        const std::vector<double>& mid, const std::vector<double>& hi, ChainCheck& c)
{
  auto le = [&](double a, double b) {
    double ex = (a - b) / std::max(std::abs(b), 1e-300);
    if (ex > 1e-10) {
      ++c.violations;
      c.worst = std::max(c.worst, ex);
    }
  };
  for (size_t k = 0; k < exact.size(); ++k) {
    le(lo[k], exact[k]);
    le(exact[k], mid[k]);
    le(mid[k], hi[k]);
  }
}

inline void add_bound_rows(Table& t, const std::string& name, const std::vector<double>& ts,
                           const std::vector<double>& exact, const std::vector<double>& absc,
                           const std::vector<double>& logn,
                           const std::optional<std::vector<double>>& jord, const std::vector<double>& schur,
                           const std::vector<double>& nexp, const std::vector<double>& tord,
                           const std::vector<double>& series)
{
  for (size_t k = 0; k < ts.size(); ++k) {
    auto opt = [&](const std::vector<double>& v) -> Cell {
      return k < v.size() ? Cell(v[k]) : Cell(std::string());
    };
    t.add({name, ts[k], exact[k], absc[k], logn[k], jord ? Cell((*jord)[k]) : Cell(std::string()), schur[k],
           nexp[k], opt(tord), opt(series)});
  }
}

inline Output run_bench(Fields& f, const RunContext& ctx, std::uint64_t seed)
{
  (void)ctx;
  const auto family = f.get<std::string>("family", "remark");
  const double t_max = f.get<double>("t_max", 5.0);
  const int samples = f.get<int>("samples", 51);
  if (!(t_max > 0.0)) throw ValidationError("bench: t_max must be positive");
  if (samples < 2) throw ValidationError("bench: samples must be >= 2");
  const auto ts = time_samples(t_max, samples);
  Output out;
  Table t;
  t.header = {"case", "t", "exact", "abscissa", "lognorm", "jordan", "schur", "norm_exp", "timeordered", "series"};
  json& r = out.report;
  r["family"] = family;
  ChainCheck chain;
  if (family == "remark") {
    const double a = f.get<double>("a", 8.0);
    f.finish();
    Mat A(2, 2);
    A << -1.0, a, 0.0, -2.0;
    JordanInfo ji;
    auto ex = exact_norm_curve(-A, ts);
    auto ab = bound_abscissa(A, ts);
    auto ln = bound_lognorm(A, ts);
    auto jo = bound_jordan(A, ts, &ji);
    auto sc = bound_schur(A, ts);
    auto ne = bound_norm_exp(A, ts);
    check_chain(ab, ex, ln, ne, chain);
    add_bound_rows(t, "remark", ts, ex, ab, ln, jo, sc, ne, {}, {});
    r["jordan"] = {{"operation", "bound_jordan"}, {"available", ji.available}, {"kappa", num(ji.kappa)},
                   {"alpha", ji.alpha}, {"lambda", num(ji.lambda)}, {"reason", ji.reason}};
    r["log_norm"] = num(log_norm(A));
    r["jordan_beats_lognorm_at_t_max"] = jo.has_value() && jo->back() < ln.back();
  } else if (family == "random") {
    const int count = f.get<int>("count", 50);
    const int dim = f.get<int>("dim", 4);
    f.finish();
    if (count < 1 || dim < 1 || dim > exact_curve_cap) throw ValidationError("bench: invalid count or dim");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> shift(0.0, 2.0);
    int jordan_avail = 0;
    for (int m = 0; m < count; ++m) {
      Mat A = random_matrix(rng, dim) - shift(rng) * Mat::Identity(dim, dim);
      auto ex = exact_norm_curve(-A, ts);
      auto ab = bound_abscissa(A, ts);
      auto ln = bound_lognorm(A, ts);
      auto jo = bound_jordan(A, ts);
      auto sc = bound_schur(A, ts);
      auto ne = bound_norm_exp(A, ts);
      if (jo) ++jordan_avail;
      check_chain(ab, ex, ln, ne, chain);
      add_bound_rows(t, "random_" + std::to_string(m), ts, ex, ab, ln, jo, sc, ne, {}, {});
    }
    r["count"] = count;
    r["jordan_available"] = jordan_avail;
  } else if (family == "block") {
    const int Nt = f.get<int>("Nt", 3);
    const int dim = f.get<int>("dim", 4);
    std::optional<Mat> P, Q;
    if (f.has("P")) P = parse_matrix(f.raw("P"), "P");
    if (f.has("Q")) Q = parse_matrix(f.raw("Q"), "Q");
    f.finish();
    if (Nt < 1 || Nt > 6) throw ValidationError("bench: block family needs 1 <= Nt <= 6");
    std::mt19937_64 rng(seed);
    if (!P) P = 2.0 * Mat::Identity(dim, dim) + 0.5 * random_matrix(rng, dim);
    if (!Q) Q = 0.5 * Mat::Identity(P->rows(), P->rows()) + 0.25 * random_matrix(rng, static_cast<int>(P->rows()));
    if (P->rows() != Q->rows()) throw ValidationError("bench: P and Q sizes differ");
    if (P->rows() > laplace_max_block) throw ValidationError("bench: block size exceeds 8");
    BoundCurve bc = bound_curve(*P, *Q, Nt, ts);
    check_chain(bc.abscissa, bc.exact, bc.lognorm, bc.norm_exp, chain);
    int below = 0;
    for (size_t k = 0; k < ts.size(); ++k)
      if (bc.laplace_timeordered[k] < bc.exact[k] * (1.0 - 1e-9)) ++below;
    add_bound_rows(t, "block", ts, bc.exact, bc.abscissa, bc.lognorm, bc.jordan, bc.schur, bc.norm_exp,
                   bc.laplace_timeordered, bc.laplace_series);
    r["Nt"] = Nt;
    r["timeordered_violations"] = below;
    r["jordan_available"] = bc.jordan.has_value();
  } else {
    throw ValidationError("bench: family must be remark, random or block");
  }
  r["chain"] = {{"operation", "exact_norm_curve, bound_abscissa, bound_lognorm, bound_norm_exp"},
                {"violations", chain.violations},
                {"worst_relative_excess", num(chain.worst)}};
  r["samples"] = samples;
  r["t_max"] = num(t_max);
  // last sample of each case
  Table s;
  s.header = {"case", "t", "exact", "lognorm", "jordan", "schur", "norm_exp"};
  for (size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    if (k + 1 == t.rows.size() || std::get<std::string>(t.rows[k + 1][0]) != std::get<std::string>(row[0]))
      s.add({row[0], row[1], row[2], row[4], row[5], row[6], row[7]});
  }
  out.bounds = std::move(t);
  out.solution = std::move(s);
  return out;
}

// ------------------------------------------------- complexity report

inline Output run_complexity(Fields& f, const RunContext& ctx)
{
  const json& prob = f.raw("problem");
  std::vector<int> Nx_list;
  if (f.has("Nx_list")) {
    const json& l = f.raw("Nx_list");
    if (!l.is_array() || l.empty()) throw ValidationError("complexity-report: Nx_list must be a non-empty array");
    for (const auto& v : l) {
      if (!v.is_number_integer()) throw ValidationError("complexity-report: Nx_list entries must be integers");
      Nx_list.push_back(v.get<int>());
    }
  }
  const long long dense_cap = f.get<long long>("dense_cap", 2400);
  f.finish();
  Fields pf(prob, "problem");
  const auto kind = pf.need<std::string>("kind");
  const bool tele = kind == "telegraph";
  if (!tele && kind != "heat1d" && kind != "heat2d")
    throw ValidationError("complexity-report: problem kind must be heat1d, heat2d or telegraph");
  // parse once to validate every key
  std::optional<HeatSetup> hs;
  std::optional<TelegraphSetup> tsu;
  if (tele) tsu = parse_telegraph(pf);
  else hs = parse_heat(pf, kind == "heat1d" ? 1 : 2);
  const double delta = tele ? tsu->delta : hs->delta;
  PipelineOptions opt = parse_pipeline(pf, delta, ctx);
  pf.has("seed");
  pf.finish();
  if (Nx_list.empty()) Nx_list.push_back(tele ? tsu->cfg.Nx : hs->cfg.Nx);

  Output out;
  Table t;
  t.header = {"Nx", "Nt", "stacked_dim", "weyl_bound", "T_evol_weyl", "s", "hmax_estimate", "queries",
              "query_target", "repetitions_full", "success_probability"};
  if (tele)
    t.header.insert(t.header.end(), {"lambda_phys_formula", "lambda_phys_numeric", "Nx2_lambda",
                                     "lambda_tilde_pi2_half", "coupling", "K_required", "chi_norm_sq", "gK",
                                     "first_order", "lambda_homo_numeric", "lambda_phys_perturbative"});
  json rows = json::array();
  std::vector<double> nxs, couplings;
  double gk_max = 0.0, first_max = 0.0, diff_max = 0.0, ratio_last = NAN;
  for (int Nx : Nx_list) {
    ImexSystem sys;
    Vec u0;
    std::optional<TelegraphSystem> ts;
    int Nt = 0;
    double K = 1.0;
    double T = 0.0;
    if (tele) {
      TelegraphConfig c = tsu->cfg;
      c.Nx = Nx;
      validate(c);
      Nt = c.Nt();
      ts = telegraph_build(c, Nt);
      sys = ts->sys;
      u0 = ts->w0_hat;
      K = c.K_value();
      T = c.T;
    } else {
      HeatConfig c = hs->cfg;
      c.Nx = Nx;
      validate(c);
      Nt = hs->steps(c);
      sys = heat_build(c, Nt);
      u0 = heat_problem(c).u0;
      K = hs->K;
      T = c.T;
    }
    std::vector<Mat> P, Q;
    int s = 0;
    for (const auto& st : sys.steps) {
      P.push_back(st.P);
      Q.push_back(st.Q);
      s = std::max(s, row_sparsity(st.P) + row_sparsity(st.Q));
    }
    const double weyl = weyl_gap_bound(P, Q);
    const double Tw = weyl > 0.0 ? std::log(3.0 / delta) / weyl : NAN;
    const long long stacked = static_cast<long long>(sys.dim()) * Nt;
    json row = {{"Nx", Nx}, {"Nt", Nt}, {"stacked_dim", stacked}, {"s", s}, {"weyl_bound", num(weyl)},
                {"T_evol_weyl", num(Tw)}};
    double hmax = NAN, queries = NAN, reps = NAN, prob_s = NAN;
    if (stacked <= dense_cap) {
      BlockSystem bs = assemble_block_system(sys, u0);
      DecayCertificate cert = decay_certificate(bs, delta / 3.0);
      std::optional<RVec> chi;
      if (tele) chi = telegraph_chi(Nx, Nt);
      HomogeneousEmbedding emb = embed_homogeneous(bs, K, chi);
      RVec e1 = hermitian_eigenvalues(hermitian_split(emb.generator).herm);
      const double a1max = e1(e1.size() - 1);
      const double pd = opt.p_rule == PDiamondRule::Zero ? 0.0 : std::max(0.0, a1max * cert.T_evol);
      GridProbe pr{e1(0), a1max, cert.T_evol, opt.method};
      const auto [Lp, Rp] = grid_extent(opt.delta_fourier, pd, pr);
      PGrid g;
      bool grid_converged = true;
      if (opt.Np_fixed > 0) {
        g = make_grid(Lp, Rp, opt.Np_fixed, opt.delta_fourier);
      } else {
        try {
          g = build_grid(opt.delta_fourier, pd, pr, opt.Np_start, opt.Np_cap);
        } catch (const NumericalError&) {
          // sizes are still reported at the cap
          grid_converged = false;
          g = make_grid(Lp, Rp, opt.Np_cap, opt.delta_fourier);
        }
      }
      auto traj = classical_imex_solve(sys, u0);
      Vec uinf = steady_state(bs);
      QuantumRun q;
      q.bs = bs;
      q.cert = cert;
      q.emb = emb;
      q.res.grid = g;
      q.res.p_diamond = pd;
      q.traj = traj;
      q.u_inf = uinf;
      json cj = complexity_json(sys, u0, q, T, delta);
      row["certificate"] = certificate_json(cert);
      row["complexity"] = cj;
      row["Np"] = g.Np;
      row["grid_converged"] = grid_converged;
      if (!cj.contains("error")) {
        hmax = cj["hmax_estimate"].get<double>();
        queries = cj["queries"].get<double>();
        reps = cj["repetitions_full"].get<double>();
        prob_s = cj["success_probability"].is_null() ? NAN : cj["success_probability"].get<double>();
      }
    }
    const double target = tele ? NAN : heat_query_target(Nx, delta);
    std::vector<Cell> cells{static_cast<long long>(Nx), static_cast<long long>(Nt), stacked, weyl, Tw,
                            static_cast<long long>(s), hmax, queries, target, reps, prob_s};
    if (tele) {
      PhysicalBranch b = telegraph_branch(*ts, telegraph_chi(Nx, Nt), 0.0);
      row["branch"] = branch_json(b);
      const double tgt = b.lambda_tilde * std::numbers::pi * std::numbers::pi / 2.0;
      const double nx2 = static_cast<double>(Nx) * Nx * b.lam_phys_formula;
      cells.insert(cells.end(), {b.lam_phys_formula, b.lam_phys_numeric, nx2, tgt, b.coupling, b.K_required,
                                 b.chi_norm_sq, b.gK, b.first_order, b.lam_homo_numeric, b.lam_phys_perturbative});
      nxs.push_back(Nx);
      couplings.push_back(b.coupling);
      gk_max = std::max(gk_max, b.gK);
      first_max = std::max(first_max, std::abs(b.first_order));
      diff_max = std::max(diff_max, std::abs(b.lam_phys_formula - b.lam_phys_numeric));
      ratio_last = nx2 / tgt;
    } else {
      row["query_target"] = num(target);
    }
    t.add(std::move(cells));
    rows.push_back(row);
  }
  out.solution = std::move(t);
  out.report["problem_kind"] = kind;
  out.report["sizes"] = rows;
  if (tele) {
    json sm = {{"gK_max", num(gk_max)},
               {"first_order_max_abs", num(first_max)},
               {"formula_numeric_max_diff", num(diff_max)},
               {"Nx2_lambda_over_limit_at_largest_Nx", num(ratio_last)}};
    if (nxs.size() >= 2) sm["coupling_loglog_slope"] = num(loglog_slope(nxs, couplings));
    out.report["summary"] = sm;
  }
  return out;
}

// -------------------------------------------------------- order study

inline std::vector<double> number_list(const json& j, const std::string& where)
{
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array");
  std::vector<double> v;
  for (size_t k = 0; k < j.size(); ++k) v.push_back(finite_number(j[k], where));
  return v;
}

inline Output run_order(Fields& f, const RunContext&)
{
  auto betas = f.has("betas") ? number_list(f.raw("betas"), "betas") : std::vector<double>{1.0, 2.0, 4.0};
  std::vector<int> Nx_list{16, 32, 64, 128};
  if (f.has("Nx_list")) {
    Nx_list.clear();
    for (double v : number_list(f.raw("Nx_list"), "Nx_list")) {
      if (v != std::floor(v) || v < 2) throw ValidationError("Nx_list: entries must be integers >= 2");
      Nx_list.push_back(static_cast<int>(v));
    }
  }
  TelegraphConfig c;
  c.epsilon = f.get<double>("epsilon", 1e-6);
  c.T = f.get<double>("T", 0.1);
  c.dt_factor = f.get<double>("dt_factor", 0.5);
  c.a_func = f.has("a") ? parse_time_fn(f.raw("a"), "a") : [](double t) { return 0.5 * t + 0.25; };
  c.boundary = parse_boundary_source(f.get<std::string>("boundary_source", "consistent"));
  const double tol = f.get<double>("tolerance", 0.25);
  f.finish();
  c.u0_func = [](double x) { return std::sin(std::numbers::pi * x); };  // replaced per level
  c.v0_func = [](double) { return 0.0; };
  for (double b : betas)
    if (!(b >= 1.0)) throw ValidationError("order-study: beta must be >= 1");
  validate(c);

  Output out;
  Table t;
  t.header = {"beta", "Nx", "h", "Nt", "error"};
  json studies = json::array();
  for (double beta : betas) {
    OrderStudy st = dissipative_order_study(c, beta, Nx_list);
    for (size_t i = 0; i < st.Nx.size(); ++i)
      t.add({beta, static_cast<long long>(st.Nx[i]), st.h[i], static_cast<long long>(st.Nt[i]), st.error[i]});
    studies.push_back({{"operation", "dissipative_order_study"},
                       {"beta", num(beta)},
                       {"slope", num(st.slope)},
                       {"predicted", num(st.predicted)},
                       {"monotone", st.monotone},
                       {"within_tolerance", std::abs(st.slope - st.predicted) <= tol}});
  }
  out.solution = std::move(t);
  out.report["studies"] = studies;
  out.report["tolerance"] = num(tol);
  return out;
}

// -------------------------------------------------------------- sweep

inline Output run_config(const json& cfg, const RunContext& ctx);

inline Output run_epsilon_sweep(Fields& f, const RunContext& ctx)
{
  auto eps = number_list(f.raw("epsilons"), "epsilons");
  const json base = f.raw("base");
  f.finish();
  if (eps.size() < 2) throw ValidationError("sweep: need at least 2 epsilon values");
  for (double e : eps)
    if (!(e > 0.0)) throw ValidationError("sweep: epsilon values must be positive");
  if (!base.is_object() || !base.contains("kind") || !base["kind"].is_string())
    throw ValidationError("sweep: base must be an object with a kind");
  const auto kind = base["kind"].get<std::string>();
  if (kind != "telegraph" && kind != "heat1d" && kind != "heat2d")
    throw ValidationError("sweep: base kind must be telegraph, heat1d or heat2d");
  const double delta = base.contains("delta") && base["delta"].is_number() ? base["delta"].get<double>() : 1e-2;

  std::vector<json> cfgs;
  for (double e : eps) {
    json c = base;
    c["epsilon"] = e;
    cfgs.push_back(c);
  }
  // validate every point before running any
  for (const auto& c : cfgs) {
    Fields probe(c, "base");
    probe.need<std::string>("kind");
    probe.has("seed");
    if (kind == "telegraph") parse_telegraph(probe);
    else parse_heat(probe, kind == "heat1d" ? 1 : 2);
    parse_pipeline(probe, delta, ctx);
    probe.finish();
  }

  std::vector<Output> results(cfgs.size());
  std::vector<std::string> errors(cfgs.size());
  std::vector<int> codes(cfgs.size(), 0);
  const int workers = std::max(1, std::min<int>(ctx.threads, static_cast<int>(cfgs.size())));
  RunContext inner = ctx;
  inner.threads = workers > 1 ? 1 : ctx.threads;
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i; (i = next.fetch_add(1)) < cfgs.size();) {
      try {
        results[i] = run_config(cfgs[i], inner);
      } catch (const NumericalError& e) {
        errors[i] = e.what();
        codes[i] = 2;
      } catch (const ValidationError& e) {
        errors[i] = e.what();
        codes[i] = 1;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (size_t i = 0; i < cfgs.size(); ++i) {
    if (codes[i] == 1) throw ValidationError("sweep point epsilon=" + format_double(eps[i]) + ": " + errors[i]);
    if (codes[i] == 2) throw NumericalError("sweep point epsilon=" + format_double(eps[i]) + ": " + errors[i]);
  }

  Output out;
  Table t;
  t.header = {"epsilon", "Nt", "T_evol", "Np", "trajectory_rel_l2", "final_rel_l2", "unitarity_drift"};
  json points = json::array();
  std::vector<double> errs, nts;
  const std::string err_key = kind == "telegraph" ? "uv_trajectory_rel_l2" : "trajectory_rel_l2";
  const std::string fin_key = kind == "telegraph" ? "uv_final_rel_l2" : "final_rel_l2";
  for (size_t i = 0; i < cfgs.size(); ++i) {
    const json& r = results[i].report;
    const int Nt = r["sizes"]["Nt"].get<int>();
    auto getd = [](const json& v) { return v.is_null() ? NAN : v.get<double>(); };
    const double e = getd(r["errors"][err_key]);
    t.add({eps[i], static_cast<long long>(Nt), getd(r["certificate"]["T_evol"]),
           static_cast<long long>(r["grid"]["Np"].get<int>()), e, getd(r["errors"][fin_key]),
           getd(r["errors"]["unitarity_drift"])});
    errs.push_back(e);
    nts.push_back(Nt);
    points.push_back({{"epsilon", num(eps[i])},
                      {"sizes", r["sizes"]},
                      {"certificate", r["certificate"]},
                      {"grid", r["grid"]},
                      {"errors", r["errors"]}});
  }
  auto [emin, emax] = std::minmax_element(errs.begin(), errs.end());
  auto [nmin, nmax] = std::minmax_element(nts.begin(), nts.end());
  out.solution = std::move(t);
  out.report["base_kind"] = kind;
  out.report["points"] = points;
  out.report["spread"] = {{"error_abs", num(*emax - *emin)},
                          {"error_rel", num(*emax > 0.0 ? (*emax - *emin) / *emax : 0.0)},
                          {"Nt_rel", num(*nmax > 0.0 ? (*nmax - *nmin) / *nmax : 0.0)},
                          {"delta", num(delta)},
                          {"error_abs_within_2delta", (*emax - *emin) <= 2.0 * delta}};
  return out;
}

// ----------------------------------------------------------- dispatch

inline Output run_config(const json& cfg, const RunContext& ctx)
{
  const auto t0 = std::chrono::steady_clock::now();
  Fields f(cfg, "config");
  const auto kind = f.need<std::string>("kind");
  if (std::find(known_kinds().begin(), known_kinds().end(), kind) == known_kinds().end())
    throw ValidationError("config: unknown kind '" + kind + "'");
  std::uint64_t seed = 0;
  if (f.has("seed")) {
    auto s = f.get<long long>("seed", 0);
    if (s < 0) throw ValidationError("config: seed must be >= 0");
    seed = static_cast<std::uint64_t>(s);
  }
  if (ctx.seed) seed = *ctx.seed;
  Output out;
  if (kind == "heat1d") out = run_heat(f, 1, ctx);
  else if (kind == "heat2d") out = run_heat(f, 2, ctx);
  else if (kind == "telegraph") out = run_telegraph(f, ctx);
  else if (kind == "evoltime-bench") out = run_bench(f, ctx, seed);
  else if (kind == "complexity-report") out = run_complexity(f, ctx);
  else if (kind == "order-study") out = run_order(f, ctx);
  else out = run_epsilon_sweep(f, ctx);
  json head = {{"schema", 1},
               {"tool", "qimex"},
               {"version", QIMEX_VERSION},
               {"status", "ok"},
               {"kind", kind},
               {"seed", seed},
               {"threads", ctx.threads},
               {"config", cfg}};
  head.update(out.report);
  head["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.report = std::move(head);
  return out;
}

} // namespace qimex::cli

#endif // QIMEX_TOOLS_RUNNERS_HPP

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace qt;

namespace {

ImexSystem constant_system(const Mat& P, const Mat& Q, const Vec& b, int Nt)
{
  ImexSystem sys;
  sys.Nt = Nt;
  sys.tau = 1.0 / Nt;
  for (int n = 0; n < Nt; ++n) sys.steps.push_back({P, Q, b});
  return sys;
}

} // namespace

TEST(BlockSystem, SingleStep)
{
  Mat P = Mat::Constant(1, 1, 2.0), Q = Mat::Constant(1, 1, 0.5);
  auto bs = assemble_block_system(constant_system(P, Q, Vec::Constant(1, 0.25), 1), Vec::Constant(1, 3.0));
  EXPECT_EQ(bs.H(0, 0), cplx(2.0));
  EXPECT_EQ(bs.F(0), cplx(0.5 * 3.0 + 0.25));
  EXPECT_NEAR(steady_state(bs)(0).real(), 1.75 / 2.0, 1e-15);
}

TEST(BlockSystem, TwoStepLayout)
{
  ImexSystem sys;
  sys.Nt = 2;
  Mat P0 = Mat::Constant(1, 1, 2.0), P1 = Mat::Constant(1, 1, 3.0);
  Mat Q0 = Mat::Constant(1, 1, 0.5), Q1 = Mat::Constant(1, 1, 0.7);
  Vec b0 = Vec::Constant(1, 0.1), b1 = Vec::Constant(1, 0.2);
  sys.steps = {{P0, Q0, b0}, {P1, Q1, b1}};
  auto bs = assemble_block_system(sys, Vec::Constant(1, 4.0));
  Mat H(2, 2);
  H << 3.0, -0.7, 0.0, 2.0;
  EXPECT_EQ((bs.H - H).norm(), 0.0);
  EXPECT_EQ(bs.F(0), cplx(0.2));
  EXPECT_EQ(bs.F(1), cplx(0.5 * 4.0 + 0.1));
}

TEST(BlockSystem, RejectsMismatch)
{
  Mat P = Mat::Identity(2, 2);
  EXPECT_THROW(assemble_block_system(constant_system(P, P, Vec::Zero(2), 2), Vec::Zero(3)), ValidationError);
}

TEST(SteadyState, IdentityReturnsSource)
{
  BlockSystem bs;
  bs.H = Mat::Identity(3, 3);
  bs.F = Vec::LinSpaced(3, 1.0, 3.0);
  EXPECT_EQ((steady_state(bs) - bs.F).norm(), 0.0);
  bs.H(2, 2) = 0.0;
  EXPECT_THROW(steady_state(bs), NumericalError);
}

TEST(SteadyState, MatchesHeatTrajectory)
{
  HeatConfig c;
  c.Nx = 7;
  c.a_funcs = {[](double t) { return 100.0 / (t + 1.0); }};
  c.u0_func = [](const std::vector<double>&) { return 1.0; };
  auto sys = heat_build(c, 20);
  Vec u0 = Vec::Ones(7);
  auto traj = classical_imex_solve(sys, u0);
  auto bs = assemble_block_system(sys, u0);
  Vec u = steady_state(bs);
  for (int n = 1; n <= sys.Nt; ++n)
    EXPECT_LT((bs.time_block(u, n) - traj[n]).norm(), 1e-9 * std::max(traj[n].norm(), 1e-300));
}

TEST(Embedding, AllOnesChiReproducesPlainForm)
{
  std::mt19937_64 rng(8);
  auto pb = random_problem(rng, 2, 0.5, 1.0);
  auto sys = build_imex(pb, 3);
  auto bs = assemble_block_system(sys, pb.u0);
  const auto n = bs.H.rows();
  auto emb = embed_homogeneous(bs, 1.0, RVec::Ones(n));
  ASSERT_EQ(emb.n_aux(), n);
  EXPECT_EQ((emb.generator.topLeftCorner(n, n) + bs.H).norm(), 0.0);
  EXPECT_EQ((Mat(emb.generator.topRightCorner(n, n)) - Mat(bs.F.asDiagonal())).norm(), 0.0);
  EXPECT_EQ(emb.generator.bottomRows(n).norm(), 0.0);
  EXPECT_EQ((emb.init.tail(n) - Vec::Ones(n)).norm(), 0.0);
  EXPECT_EQ(emb.init.head(n).norm(), 0.0);
  EXPECT_NEAR(emb.chi.squaredNorm(), emb.chi.sum(), 0.0);
}

TEST(Embedding, ScaledSource)
{
  Mat P = Mat::Identity(2, 2) * 2.0, Q = Mat::Identity(2, 2);
  Vec b(2);
  b << 1.0, 0.0;
  auto bs = assemble_block_system(constant_system(P, Q, b, 2), Vec::Zero(2));
  auto emb = embed_homogeneous(bs, 4.0);
  ASSERT_EQ(emb.n_aux(), 2);  // first entry of each block
  EXPECT_EQ(emb.generator(0, 4), cplx(0.25));
  EXPECT_EQ(emb.init(4), cplx(4.0));
  // the flow of [0; K chi] solves H u = F at large t regardless of K
  Vec u = richardson_flow_reference(emb, 60.0);
  EXPECT_LT((u - steady_state(bs)).norm(), 1e-12);
}

TEST(Embedding, ZeroSourceDecouples)
{
  Mat P = Mat::Identity(2, 2) * 2.0, Q = Mat::Identity(2, 2);
  auto bs = assemble_block_system(constant_system(P, Q, Vec::Zero(2), 2), Vec::Zero(2));
  auto emb = embed_homogeneous(bs, 1.0, RVec::Zero(4));
  EXPECT_EQ(emb.n_aux(), 0);
  EXPECT_EQ((emb.generator + bs.H).norm(), 0.0);
}

TEST(Embedding, RejectsUncoveredSupport)
{
  Mat P = Mat::Identity(1, 1) * 2.0;
  auto bs = assemble_block_system(constant_system(P, P, Vec::Ones(1), 2), Vec::Zero(1));
  EXPECT_THROW(embed_homogeneous(bs, 1.0, RVec::Zero(2)), ValidationError);
  EXPECT_THROW(embed_homogeneous(bs, 0.0), ValidationError);
}

TEST(DecayCertificate, IdentityAndWeyl)
{
  BlockSystem bs;
  bs.H = Mat::Identity(2, 2);
  bs.F = Vec::Zero(2);
  bs.P = {Mat::Identity(2, 2)};
  bs.Q = {Mat::Zero(2, 2)};
  auto c = decay_certificate(bs, 1e-3);
  EXPECT_NEAR(c.T_evol, std::log(1000.0), 1e-12);

  Mat P = 2.0 * Mat::Identity(2, 2), Q = Mat::Identity(2, 2);
  auto bs2 = assemble_block_system(constant_system(P, Q, Vec::Zero(2), 3), Vec::Zero(2));
  auto c2 = decay_certificate(bs2, 1e-3);
  EXPECT_NEAR(c2.weyl_bound, 1.0, 1e-14);
  EXPECT_NEAR(c2.T_evol, std::log(1000.0), 1e-12);
  EXPECT_TRUE(c2.weyl_certified);
  EXPECT_LE(c2.weyl_bound, c2.lambda_min_H1 + 1e-14);
}

TEST(DecayCertificate, WarnsWhenOnlyNumericGapPositive)
{
  Mat P = 0.9 * Mat::Identity(1, 1), Q = Mat::Identity(1, 1);
  auto bs = assemble_block_system(constant_system(P, Q, Vec::Zero(1), 3), Vec::Zero(1));
  auto c = decay_certificate(bs, 1e-2);
  EXPECT_LT(c.weyl_bound, 0.0);
  EXPECT_GT(c.lambda_min_H1, 0.0);
  EXPECT_FALSE(c.weyl_certified);
  EXPECT_NEAR(c.T_evol, std::log(100.0) / c.lambda_min_H1, 1e-12);
}

TEST(DecayCertificate, RefusesIndefinite)
{
  Mat P = 0.5 * Mat::Identity(1, 1), Q = Mat::Identity(1, 1);
  auto bs = assemble_block_system(constant_system(P, Q, Vec::Zero(1), 4), Vec::Zero(1));
  EXPECT_THROW(decay_certificate(bs, 1e-2), NumericalError);
}

TEST(DecayCertificate, HeatTrendInNx)
{
  // T_evol against log(1/delta_ss) Nx^2 / (lambda pi^2 min a) for a = 1, fixed lambda
  for (int Nx : {8, 16, 32}) {
    HeatConfig c;
    c.Nx = Nx;
    c.a_funcs = {[](double) { return 1.0; }};
    c.u0_func = [](const std::vector<double>&) { return 1.0; };
    const double h = c.h(), lambda = 0.5;
    c.T = 4 * lambda * h * h;
    auto sys = heat_build(c, 4);
    auto bs = assemble_block_system(sys, Vec::Ones(Nx));
    auto cert = decay_certificate(bs, 1e-3);
    double trend = std::log(1e3) * (Nx + 1.0) * (Nx + 1.0) / (lambda * std::numbers::pi * std::numbers::pi);
    EXPECT_GT(cert.T_evol / trend, 0.5) << Nx;
    EXPECT_LT(cert.T_evol / trend, 2.0) << Nx;
  }
}

TEST(FlowReference, ScalarClosedForm)
{
  Mat P = Mat::Ones(1, 1);
  auto bs = assemble_block_system(constant_system(P, Mat::Zero(1, 1), Vec::Ones(1), 1), Vec::Zero(1));
  auto emb = embed_homogeneous(bs, 1.0);
  EXPECT_EQ((richardson_flow_reference(emb, 0.0) - emb.init.head(1)).norm(), 0.0);
  for (double t : {0.1, 1.0, 3.0}) {
    EXPECT_NEAR(richardson_flow_reference(emb, t)(0).real(), 1.0 - std::exp(-t), 1e-14);
    EXPECT_NEAR(richardson_flow_action(emb, t)(0).real(), 1.0 - std::exp(-t), 1e-14);
  }
}

TEST(FlowReference, WithinBudgetAtEvolutionTime)
{
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto pb = random_problem(rng, 3, 0.5, 1.0);
    auto bs = assemble_block_system(build_imex(pb, 5), pb.u0);
    auto cert = decay_certificate(bs, 1e-3);
    auto emb = embed_homogeneous(bs, 1.0);
    Vec uinf = steady_state(bs);
    Vec u = richardson_flow_reference(emb, cert.T_evol);
    EXPECT_LE((u - uinf).norm(), cert.delta_ss * uinf.norm() * (1.0 + 1e-8));
    EXPECT_LT((richardson_flow_action(emb, cert.T_evol) - u).norm(), 1e-10 * uinf.norm());
  }
}

TEST(DecayLaw, RandomSystems)
{
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> dim(1, 8), steps(1, 16);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto pb = random_problem(rng, dim(rng), trial % 3 == 0 ? 1e-3 : 0.5, 1.0);
    auto bs = assemble_block_system(build_imex(pb, steps(rng)), pb.u0);
    auto cert = decay_certificate(bs, 1e-3);
    const double g = cert.lambda_min_H1;
    auto emb = embed_homogeneous(bs, 1.0);
    Vec uinf = steady_state(bs);
    const double e0 = uinf.norm();  // u(0) = 0
    for (double f : {0.5, 1.0, 2.0}) {
      double t = f * cert.T_evol;
      double e = (richardson_flow_reference(emb, t) - uinf).norm();
      EXPECT_LE(e, std::exp(-g * t) * e0 + 1e-8);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 60);
}

TEST(WarpedDistance, InitialLiftIsHalfNorm)
{
  std::mt19937_64 rng(2);
  auto pb = random_problem(rng, 2, 0.5, 1.0);
  auto bs = assemble_block_system(build_imex(pb, 2), pb.u0);
  auto emb = embed_homogeneous(bs, 1.0);
  Vec uinf = steady_state(bs);
  Vec vinf(emb.size());
  vinf << uinf, Vec::Ones(emb.n_aux());
  auto g = make_grid(-20.0, 20.0, 1 << 14);
  auto s = schrodingerize(emb.generator, emb.init, g);
  // w(0,p) = e^{-p} init on p >= 0, so the distance is |u0 - u_inf| / sqrt(2)
  EXPECT_NEAR(warped_steady_distance(s, vinf, 0.0), uinf.norm() / std::sqrt(2.0), 2e-3 * uinf.norm());
}

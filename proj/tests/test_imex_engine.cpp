#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace qt;

namespace {

MultiscaleProblem scalar(double eps, double T, double L1 = -1.0)
{
  MultiscaleProblem pb;
  pb.dim = 1;
  pb.L1 = [L1](double) { return Mat::Constant(1, 1, L1); };
  pb.epsilon = eps;
  pb.T = T;
  pb.u0 = Vec::Ones(1);
  return pb;
}

} // namespace

TEST(BuildImex, ScalarSubstitution)
{
  auto sys = build_imex(scalar(0.1, 0.05), 5);
  ASSERT_EQ(sys.Nt, 5);
  EXPECT_NEAR(sys.tau, 0.01, 1e-16);
  for (const auto& s : sys.steps) {
    EXPECT_NEAR(s.P(0, 0).real(), 0.11, 1e-15);
    EXPECT_NEAR(s.Q(0, 0).real(), 0.1, 1e-15);
    EXPECT_EQ(s.b(0), cplx(0.0));
  }
}

TEST(BuildImex, StiffSourceCarriesNoEpsilon)
{
  auto pb = scalar(1e-3, 1.0);
  pb.b1 = [](double t) { return Vec::Constant(1, 2.0 + t); };
  auto sys = build_imex(pb, 4);
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(sys.steps[n].b(0).real(), 0.25 * (2.0 + 0.25 * n), 1e-15);
  pb.b2 = [](double) { return Vec::Constant(1, 3.0); };
  sys = build_imex(pb, 4);
  EXPECT_NEAR(sys.steps[0].b(0).real(), 0.25 * 2.0 + 0.25 * 1e-3 * 3.0, 1e-15);
}

TEST(BuildImex, SamplingTimes)
{
  MultiscaleProblem pb;
  pb.dim = 1;
  pb.L1 = [](double t) { return Mat::Constant(1, 1, -t); };
  pb.L2 = [](double t) { return Mat::Constant(1, 1, t); };
  pb.epsilon = 1.0;
  pb.T = 1.0;
  pb.u0 = Vec::Ones(1);
  auto sys = build_imex(pb, 4);
  for (int n = 0; n < 4; ++n) {
    EXPECT_NEAR(sys.steps[n].P(0, 0).real(), 1.0 + 0.25 * (n + 1) * 0.25, 1e-15);
    EXPECT_NEAR(sys.steps[n].Q(0, 0).real(), 1.0 + 0.25 * n * 0.25, 1e-15);
  }
}

TEST(BuildImex, SingularStepReported)
{
  auto pb = scalar(1.0, 1.0, 1.0);  // P = 1 - tau = 0 for Nt = 1
  try {
    build_imex(pb, 1);
    FAIL() << "expected a singular P_n";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("n = 0"), std::string::npos);
  }
}

TEST(ClassicalSolve, GeometricRecursion)
{
  auto traj = classical_imex_solve(build_imex(scalar(0.1, 0.05), 5), Vec::Ones(1));
  for (int n = 0; n <= 5; ++n) EXPECT_NEAR(traj[n](0).real(), std::pow(10.0 / 11.0, n), 1e-14);
}

TEST(ClassicalSolve, AsymptoticLimit)
{
  for (double eps : {1e-2, 1e-6}) {
    auto traj = classical_imex_solve(build_imex(scalar(eps, 0.1), 10), Vec::Ones(1));
    EXPECT_NEAR(traj[1](0).real(), eps / (eps + 0.01), 1e-14);
  }
}

TEST(ClassicalSolve, MatchesReferenceTrajectory)
{
  MultiscaleProblem pb;
  pb.dim = 6;
  Mat L1 = to_mat(ref::imex_L1), L2 = to_mat(ref::imex_L2);
  Vec b1 = to_vec(ref::imex_b1), b2 = to_vec(ref::imex_b2);
  pb.L1 = [L1](double) { return L1; };
  pb.L2 = [L2](double) { return L2; };
  pb.b1 = [b1](double) { return b1; };
  pb.b2 = [b2](double) { return b2; };
  pb.epsilon = 0.1;
  pb.T = 1.0;
  pb.u0 = to_vec(ref::imex_u0);
  auto traj = classical_imex_solve(build_imex(pb, 64), pb.u0);
  Vec expect = to_vec(ref::imex_uT);
  EXPECT_LT((traj.back() - expect).norm() / expect.norm(), 1e-12);
}

TEST(ClassicalSolve, EqualsAllAtOnceSolve)
{
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 8), steps(1, 64);
  for (int trial = 0; trial < 20; ++trial) {
    auto pb = random_problem(rng, dim(rng), trial % 2 ? 1e-3 : 0.5, 1.0);
    auto sys = build_imex(pb, steps(rng));
    auto traj = classical_imex_solve(sys, pb.u0);
    auto bs = assemble_block_system(sys, pb.u0);
    Vec u = steady_state(bs);
    for (int n = 1; n <= sys.Nt; ++n) {
      Vec blk = bs.time_block(u, n);
      EXPECT_LT((blk - traj[n]).norm(), 1e-9 * std::max(1.0, traj[n].norm()));
    }
  }
}

TEST(ContractionCertificate, BelowThreshold)
{
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto pb = random_problem(rng, 5, 1.0, 1.0);
    Mat L1 = pb.L1(0.0), L2 = pb.L2(0.0);
    double g = -lambda_max_herm(L1);
    ASSERT_GT(g, 0.0);
    pb.epsilon = 0.9 * g / norm2(L2);  // eps ||L2|| < g
    EXPECT_LT(contraction_factor(build_imex(pb, 16)), 1.0);
  }
}

TEST(FirstOrderConvergence, UniformInEpsilon)
{
  for (double eps : {1.0, 1e-3, 1e-6}) {
    double prev = manufactured_error(eps, 32);
    for (int Nt : {64, 128}) {
      double e = manufactured_error(eps, Nt);
      double ratio = prev / e;
      EXPECT_GT(ratio, 1.6) << "eps " << eps << " Nt " << Nt;
      EXPECT_LT(ratio, 2.4) << "eps " << eps << " Nt " << Nt;
      prev = e;
    }
  }
}

TEST(StepCount, ConstantProblemClampsToOne)
{
  MultiscaleProblem pb;
  pb.dim = 2;
  pb.L1 = [](double) { return Mat(-Mat::Identity(2, 2)); };
  pb.b1 = [](double) { return Vec(Vec::Ones(2)); };
  pb.epsilon = 0.5;
  pb.T = 1.0;
  pb.u0 = Vec::Ones(2);  // steady: L1 u + b1 = 0
  auto est = estimate_step_count(pb, 1e-2);
  EXPECT_EQ(est.Nt_required, 1);
  EXPECT_FALSE(est.saturated);
}

TEST(StepCount, HalvingDeltaDoubles)
{
  auto pb = manufactured_problem(1e-2);
  auto a = estimate_step_count(pb, 1e-2);
  auto b = estimate_step_count(pb, 5e-3);
  EXPECT_NEAR(b.Nt_raw / a.Nt_raw, 2.0, 1e-12);
  EXPECT_GE(b.Nt_required, 2 * a.Nt_required - 1);
  EXPECT_LE(b.Nt_required, 2 * a.Nt_required);
}

TEST(StepCount, IndependentOfEpsilon)
{
  std::vector<double> Nt;
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) Nt.push_back(estimate_step_count(manufactured_problem(eps), 1e-2).Nt_raw);
  double lo = *std::min_element(Nt.begin(), Nt.end()), hi = *std::max_element(Nt.begin(), Nt.end());
  EXPECT_LT((hi - lo) / lo, 0.05);
}

TEST(StepCount, RefusesWithoutGap)
{
  auto pb = scalar(1.0, 1.0, 0.5);
  EXPECT_THROW(estimate_step_count(pb, 1e-2), ValidationError);
}

TEST(StepCount, SaturatesInsteadOfOverflowing)
{
  // u(T) ~ 1e-48 on the coarse run: the bound is astronomically large
  auto est = estimate_step_count(scalar(1.0, 1.0, -1000.0), 1e-2);
  EXPECT_TRUE(est.saturated);
  EXPECT_GT(est.Nt_raw, 1e15);
  EXPECT_EQ(est.Nt_required, 1000000000000000LL);
}

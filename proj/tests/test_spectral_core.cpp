#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"

using namespace qt;

TEST(HermitianSplit, Identity)
{
  auto s = hermitian_split(Mat::Identity(3, 3));
  EXPECT_LT((s.herm - Mat::Identity(3, 3)).norm(), 1e-15);
  EXPECT_LT(s.antiherm.norm(), 1e-15);
}

TEST(HermitianSplit, SkewHermitian)
{
  Mat A(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  auto s = hermitian_split(A);
  Mat expect(2, 2);
  expect << 0.0, -I_unit, I_unit, 0.0;
  EXPECT_LT(s.herm.norm(), 1e-15);
  EXPECT_LT((s.antiherm - expect).norm(), 1e-15);
}

TEST(HermitianSplit, Reconstructs)
{
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Mat A = random_mat(rng, 5, 5, true);
    auto s = hermitian_split(A);
    EXPECT_LT(rel(s.herm + I_unit * s.antiherm, A), 1e-12);
    EXPECT_LT(rel(s.herm.adjoint(), s.herm), 1e-12);
    EXPECT_LT(rel(s.antiherm.adjoint(), s.antiherm), 1e-12);
  }
}

TEST(HermitianSplit, RejectsNonSquare) { EXPECT_THROW(hermitian_split(Mat::Zero(2, 3)), ValidationError); }

TEST(LogNorm, Basic)
{
  EXPECT_NEAR(log_norm(-Mat::Identity(3, 3)), -1.0, 1e-15);
  Mat A(2, 2);
  A << -1.0, 4.0, 0.0, -2.0;
  EXPECT_NEAR(log_norm(A), (-3.0 + std::sqrt(17.0)) / 2.0, 1e-14);
  EXPECT_THROW(log_norm(Mat::Zero(2, 3)), ValidationError);
}

TEST(LogNorm, MatchesFiniteDifferenceLimit)
{
  Mat A = to_mat(ref::lognorm_A);
  EXPECT_NEAR(log_norm(A), ref::lognorm_sym, 1e-13);
  EXPECT_NEAR(log_norm(A), ref::lognorm_fd, 1e-6);
}

TEST(MatrixExp, Trivial)
{
  EXPECT_LT((matrix_exp(Mat::Zero(4, 4), 1.0) - Mat::Identity(4, 4)).norm(), 1e-15);
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = -1.0;
  D(1, 1) = -2.0;
  Mat E = matrix_exp(D, 1.0);
  EXPECT_NEAR(E(0, 0).real(), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(E(1, 1).real(), std::exp(-2.0), 1e-15);
  EXPECT_LT(std::abs(E(0, 1)), 1e-16);
}

TEST(MatrixExp, MatchesHighPrecisionTaylor)
{
  Mat E = matrix_exp(to_mat(ref::expm_A), ref::expm_t);
  Mat R = to_mat(ref::expm_ref);
  EXPECT_LT(norm2(E - R) / norm2(R), 1e-10);
}

TEST(MatrixExp, HermitianPathIsUnitary)
{
  std::mt19937_64 rng(5);
  Mat G = random_mat(rng, 6, 6, true);
  Mat H = (G + G.adjoint()) / 2.0;
  Mat U = expm_hermitian(H, 3.7);
  EXPECT_LT((U.adjoint() * U - Mat::Identity(6, 6)).norm(), 1e-13);
  EXPECT_LT(rel(U, matrix_exp(-I_unit * H, 3.7)), 1e-11);
}

TEST(MatrixExp, RejectsHugeArgument)
{
  EXPECT_THROW(matrix_exp(Mat::Identity(2, 2) * 1e3, 100.0), NumericalError);
}

TEST(SecondDerivative, ThreePoints)
{
  auto s = second_derivative_matrix(3);
  EXPECT_NEAR(s.eigenvalues[0], -2.0 + std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.eigenvalues[1], -2.0, 1e-15);
  EXPECT_NEAR(s.eigenvalues[2], -2.0 - std::sqrt(2.0), 1e-15);
}

TEST(SecondDerivative, LargestEigenvalueNegative)
{
  for (int N = 1; N <= 40; ++N) {
    auto s = second_derivative_matrix(N);
    double mx = *std::max_element(s.eigenvalues.begin(), s.eigenvalues.end());
    EXPECT_LT(mx, 0.0);
    EXPECT_NEAR(mx, -2.0 + 2.0 * std::cos(std::numbers::pi / (N + 1)), 1e-15);
  }
}

TEST(SecondDerivative, EightPointsMatchReference)
{
  auto s = second_derivative_matrix(8);
  std::vector<double> ev = s.eigenvalues;
  std::sort(ev.begin(), ev.end());
  for (size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], ref::lh8_eigs[i], 1e-10);
}

TEST(SpectraMatchEigensolver, AllSizes)
{
  for (int N = 2; N <= 32; ++N) {
    auto s = second_derivative_matrix(N);
    RVec num = hermitian_eigenvalues(s.L);
    std::vector<double> ev = s.eigenvalues;
    std::sort(ev.begin(), ev.end());
    for (int i = 0; i < N; ++i) EXPECT_NEAR(num(i), ev[i], 1e-10);

    auto c = central_difference_matrix(N);
    Eigen::ComplexEigenSolver<Mat> es(c.M, false);
    std::vector<double> im_num, im_ana;
    for (int i = 0; i < N; ++i) {
      im_num.push_back(es.eigenvalues()(i).imag());
      im_ana.push_back(c.eigenvalues[i].imag());
      EXPECT_LT(std::abs(es.eigenvalues()(i).real()), 1e-10);
    }
    std::sort(im_num.begin(), im_num.end());
    std::sort(im_ana.begin(), im_ana.end());
    for (int i = 0; i < N; ++i) EXPECT_NEAR(im_num[i], im_ana[i], 1e-10);
  }
}

TEST(CentralDifference, ThreePointsAndSkewSymmetry)
{
  auto c = central_difference_matrix(3);
  std::vector<double> im;
  for (auto z : c.eigenvalues) im.push_back(z.imag());
  std::sort(im.begin(), im.end());
  EXPECT_NEAR(im[0], -std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(im[1], 0.0, 1e-15);
  EXPECT_NEAR(im[2], std::sqrt(2.0), 1e-15);
  for (int N : {1, 4, 9}) {
    auto d = central_difference_matrix(N);
    EXPECT_EQ((d.M + d.adjoint).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(CentralDifference, SquareIsPentadiagonal)
{
  const int N = 8;
  Mat M2 = central_difference_matrix(N).M;
  M2 = M2 * M2;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      double expect = 0.0;
      if (i == j) expect = (i == 0 || i == N - 1) ? -1.0 : -2.0;
      if (std::abs(i - j) == 2) expect = 1.0;
      EXPECT_EQ(M2(i, j).real(), expect) << i << "," << j;
    }
}

TEST(BlockNormBound, Trivial)
{
  const Mat I2 = Mat::Identity(2, 2), Z = Mat::Zero(2, 2);
  EXPECT_NEAR(block_norm_bound({{I2, Z, Z}, {Z, I2, Z}, {Z, Z, I2}}), 1.0, 1e-15);
  Mat p = Mat::Constant(1, 1, 3.0), q = Mat::Constant(1, 1, -0.5), z = Mat::Zero(1, 1);
  EXPECT_NEAR(block_norm_bound({{p, -q}, {z, p}}), 3.5, 1e-15);
  EXPECT_THROW(block_norm_bound({{p, q}, {z}}), ValidationError);
}

TEST(BlockNormBound, ReferenceGrid)
{
  Mat A = to_mat(ref::blockgrid_full);
  BlockGrid B(3, std::vector<Mat>(3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) B[i][j] = A.block(2 * i, 2 * j, 2, 2);
  EXPECT_NEAR(block_norm_bound(B), ref::blockgrid_bound, 1e-12);
  EXPECT_NEAR(norm2(assemble_blocks(B)), ref::blockgrid_norm, 1e-12);
}

TEST(BlockNormBound, DominatesNormOnRandomGrids)
{
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> sz(1, 4);
  for (int trial = 0; trial < 100; ++trial) {
    int m = sz(rng), b = sz(rng);
    BlockGrid B(m, std::vector<Mat>(m));
    for (auto& row : B)
      for (auto& blk : row) blk = random_mat(rng, b, b, true);
    EXPECT_GE(block_norm_bound(B), norm2(assemble_blocks(B)) * (1.0 - 1e-12));
  }
}

TEST(WeylGapBound, Trivial)
{
  std::vector<Mat> P(3, 2.0 * Mat::Identity(2, 2)), Q(3, Mat::Identity(2, 2));
  EXPECT_NEAR(weyl_gap_bound(P, Q), 1.0, 1e-15);
  EXPECT_THROW(weyl_gap_bound({}, {}), ValidationError);
}

TEST(WeylGapBound, HeatStructure)
{
  const int N = 6;
  const double eps = 0.3, lam = 0.8;
  Mat L = second_derivative_matrix(N).L;
  Mat P = eps * Mat::Identity(N, N) - lam * L, Q = eps * Mat::Identity(N, N);
  double lmax = -2.0 + 2.0 * std::cos(std::numbers::pi / (N + 1));
  EXPECT_NEAR(weyl_gap_bound({P, P}, {Q, Q}), eps - lam * lmax - eps, 1e-13);
}

TEST(WeylGapBound, ReferenceBlocks)
{
  std::vector<Mat> P{to_mat(ref::weyl_P0), to_mat(ref::weyl_P1), to_mat(ref::weyl_P2), to_mat(ref::weyl_P3)};
  std::vector<Mat> Q{to_mat(ref::weyl_Q0), to_mat(ref::weyl_Q1), to_mat(ref::weyl_Q2), to_mat(ref::weyl_Q3)};
  EXPECT_NEAR(weyl_gap_bound(P, Q), ref::weyl_bound, 1e-12);
  ImexSystem sys;
  sys.Nt = 4;
  for (int j = 0; j < 4; ++j) sys.steps.push_back({P[j], Q[j], Vec::Zero(3)});
  auto bs = assemble_block_system(sys, Vec::Zero(3));
  EXPECT_NEAR(lambda_min_herm(bs.H), ref::weyl_lmin_H1, 1e-12);
  EXPECT_LE(ref::weyl_bound, ref::weyl_lmin_H1);
}

TEST(NormChain, RandomMatrices)
{
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    Mat A = random_mat(rng, 5, 5, trial % 2 == 1) - 1.5 * Mat::Identity(5, 5);
    EXPECT_GE(log_norm(A), spectral_abscissa(A) - 1e-12);
    for (double t : {0.1, 1.0, 5.0}) {
      double ex = norm2(matrix_exp(A, t));
      EXPECT_LE(std::exp(spectral_abscissa(A) * t), ex * (1.0 + 1e-8));
      EXPECT_LE(ex, std::exp(log_norm(A) * t) * (1.0 + 1e-8));
      EXPECT_LE(std::exp(log_norm(A) * t), std::exp(norm2(A) * t) * (1.0 + 1e-8));
    }
  }
}

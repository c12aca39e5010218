#include "hemet/sections.hpp"

#include <gtest/gtest.h>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/binomial.hpp>

#include <random>

using namespace hemet;

namespace {

class Flat final : public Metric {
 public:
  explicit Flat(int r) : Metric(BundleSpec(std::vector<int>(r, 0))) {}
  MetricKind kind() const override { return MetricKind::fs; }
  Mat value(const SpherePoint&) const override { return identity(rank()); }
};

// diag(c_i (1+|c|^2)^{-d_i})
class SplitFs final : public Metric {
 public:
  SplitFs(std::vector<int> d, std::vector<real> c) : Metric(BundleSpec(d)), d_(std::move(d)), c_(std::move(c)) {}
  MetricKind kind() const override { return MetricKind::fs; }
  Mat value(const SpherePoint& p) const override {
    Mat h = Mat::Zero(rank(), rank());
    for (int i = 0; i < rank(); ++i) h(i, i) = c_[i] * std::pow(real(1) + std::norm(p.coord), real(-d_[i]));
    return h;
  }

 private:
  std::vector<int> d_;
  std::vector<real> c_;
};

// Plain evaluation of h through the generic FD curvature path.
class ValueOnly final : public Metric {
 public:
  explicit ValueOnly(FsPtr h) : Metric(h->bundle()), h_(std::move(h)) {}
  MetricKind kind() const override { return MetricKind::fs; }
  Mat value(const SpherePoint& p) const override { return h_->value(p); }

 private:
  FsPtr h_;
};

Mat random_hermitian(int n, std::mt19937_64& rng, real scale) {
  std::normal_distribution<double> nd;
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cx(nd(rng), nd(rng));
  return hermitian_part(a) * scale;
}

SpherePoint random_point(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return SpherePoint::from_z(cx(nd(rng), nd(rng)));
}

}  // namespace

TEST(Basis, Sizes) {
  EXPECT_EQ(SectionBasis(BundleSpec({0}), 2).size(), 3);
  EXPECT_EQ(SectionBasis(BundleSpec({1, -1}), 1).size(), 4);
  EXPECT_THROW(SectionBasis(BundleSpec({1, -1}), 0), argument_error);
  try {
    SectionBasis(BundleSpec({-3}), 1);
    FAIL();
  } catch (const argument_error& e) {
    EXPECT_NE(std::string(e.what()).find("minimum admissible k is 3"), std::string::npos);
  }
}

// Chart W values are the Z values times w^{a+k}.
TEST(Basis, ChartTransition) {
  SectionBasis b(BundleSpec({2, 0}), 1);
  cx z(1.7, -0.4);
  auto pz = SpherePoint{Chart::Z, z}, pw = SpherePoint{Chart::W, real(1) / z};
  Mat sz = b.eval(pz), sw = b.eval(pw);
  for (int i = 0; i < 2; ++i) {
    cx f = std::pow(real(1) / z, b.twisted_degree(i));
    for (int c = 0; c < b.size(); ++c) EXPECT_NEAR(static_cast<double>(std::abs(sw(i, c) - sz(i, c) * f)), 0.0, 1e-15);
  }
}

TEST(L2Gram, TrivialLineMatchesBeta) {
  auto rule = build_quadrature(24, 24);
  for (int d : {1, 3, 6}) {
    SectionBasis b(BundleSpec({0}), d);
    Mat g = l2_gram_matrix(b, Flat(1), rule);
    for (int i = 0; i <= d; ++i)
      for (int j = 0; j <= d; ++j) {
        double expect = i == j ? boost::math::beta(i + 1.0, d + 1.0 - i) : 0.0;
        EXPECT_NEAR(static_cast<double>(std::abs(g(i, j) - cx(expect))), 0.0, 1e-16);
      }
  }
}

TEST(L2Gram, SummandPermutationAndScaling) {
  auto rule = build_quadrature(16, 16);
  SectionBasis ab(BundleSpec({2, 0}), 1), ba(BundleSpec({0, 2}), 1);
  Mat g1 = l2_gram_matrix(ab, SplitFs({2, 0}, {1, 3}), rule);
  Mat g2 = l2_gram_matrix(ba, SplitFs({0, 2}, {3, 1}), rule);
  // ab: 4 sections of O(3) then 2 of O(1); ba: 2 then 4
  std::vector<int> perm = {2, 3, 4, 5, 0, 1};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(static_cast<double>(std::abs(g1(i, j) - g2(perm[i], perm[j]))), 0.0, 1e-17);
  Mat g3 = l2_gram_matrix(ab, SplitFs({2, 0}, {std::exp(real(1.5)), 3 * std::exp(real(1.5))}), rule);
  EXPECT_NEAR(static_cast<double>((g3 - g1 * std::exp(real(1.5))).norm()), 0.0, 1e-16);
}

// sum_j (d+1) C(d,j) |z|^{2j} = (d+1)(1+|z|^2)^d
TEST(FsMetric, TrivialLineIsConstant) {
  auto rule = build_quadrature(16, 16);
  std::mt19937_64 rng(2);
  for (int d : {2, 5}) {
    SectionBasis b(BundleSpec({0}), d);
    Mat g = Mat::Zero(d + 1, d + 1);
    for (int j = 0; j <= d; ++j) g(j, j) = real(1) / ((d + 1) * boost::math::binomial_coefficient<double>(d, j));
    auto h = fs_metric(b, PositiveForm::from_matrix(g));
    for (int i = 0; i < 20; ++i)
      EXPECT_NEAR(static_cast<double>(std::abs(h->value(random_point(rng))(0, 0) - cx(real(1) / (d + 1)))), 0.0, 1e-17);
  }
}

TEST(FsMetric, ScalingAndBlocks) {
  std::mt19937_64 rng(5);
  SectionBasis b(BundleSpec({1, 2}), 1);
  PositiveForm g = standard_form(b).conjugated(random_hermitian(b.size(), rng, 0.2));
  auto h = fs_metric(b, g), hc = fs_metric(b, g.scaled(7));
  auto p = random_point(rng);
  EXPECT_NEAR(static_cast<double>((hc->value(p) - h->value(p) * real(7)).norm() / h->value(p).norm()), 0.0, 1e-17);
  Mat blk = Mat::Identity(b.size(), b.size());
  blk.block(0, 0, 3, 3) *= 2;
  auto hb = fs_metric(b, PositiveForm::from_matrix(blk));
  EXPECT_EQ(hb->value(p)(0, 1), cx(0));
}

TEST(FsMetric, StandardMetricIsExactFs) {
  std::mt19937_64 rng(6);
  auto h = standard_metric(BundleSpec({3, -1}), 2);
  for (int i = 0; i < 10; ++i) {
    auto p = random_point(rng);
    Mat v = h->value(p);
    real s = real(1) + std::norm(p.coord);
    EXPECT_NEAR(static_cast<double>(v(0, 0).real() * std::pow(s, 3)), 1.0, 1e-17);
    EXPECT_NEAR(static_cast<double>(v(1, 1).real() * std::pow(s, -1)), 1.0, 1e-17);
  }
}

// Closed-form curvature against the finite-difference path.
TEST(FsMetric, CurvatureMatchesFiniteDifferencesProperty) {
  std::mt19937_64 rng(7);
  for (auto spec : {BundleSpec({1, -1}), BundleSpec({2, 2}), BundleSpec({0, 1, 3})}) {
    SectionBasis b(spec, std::max(1, regularity(spec)));
    auto h = fs_metric(b, standard_form(b).conjugated(random_hermitian(b.size(), rng, 0.4)));
    ValueOnly fd(h);
    for (int i = 0; i < 10; ++i) {
      auto p = random_point(rng);
      Mat a = h->lambda_curvature(p), c = fd.lambda_curvature(p);
      Mat t = h->connection(p);
      EXPECT_LT(static_cast<double>((a - c).norm() / std::max<real>(1, a.norm())), 1e-6);
      EXPECT_LT(static_cast<double>((t - fd.connection(p)).norm() / std::max<real>(1, t.norm())), 1e-6);
    }
  }
}

TEST(PositiveForm, FactorsAndLogs) {
  std::mt19937_64 rng(8);
  Mat z = random_hermitian(4, rng, 0.5);
  PositiveForm f = PositiveForm::from_log(z);
  EXPECT_NEAR(static_cast<double>((f.matrix() - herm_exp(z)).norm()), 0.0, 1e-15);
  EXPECT_NEAR(static_cast<double>((PositiveForm::from_matrix(herm_exp(z)).inverse() - herm_exp(-z)).norm()), 0.0, 1e-15);
  Mat bad = identity(2);
  bad(0, 1) = 1;
  EXPECT_THROW(PositiveForm::from_matrix(bad), argument_error);
  EXPECT_THROW(PositiveForm::from_matrix(-identity(2)), numeric_error);
}

TEST(Bergman, TrivialLineIsExact) {
  auto rule = build_quadrature(24, 24);
  auto h = std::make_shared<Flat>(1);
  for (int k : {2, 5}) {
    auto rep = bergman_kernel(h, k, rule);
    EXPECT_NEAR(static_cast<double>(rep.raw_min), k + 1.0, 1e-12);
    EXPECT_NEAR(static_cast<double>(rep.raw_max), k + 1.0, 1e-12);
    EXPECT_LT(static_cast<double>(rep.sup_dev), 1e-12);
  }
}

TEST(Bergman, SplitFsIsBalanced) {
  auto rule = build_quadrature(24, 24);
  for (int a : {0, 2}) {
    auto h = std::make_shared<SplitFs>(std::vector<int>{a, a}, std::vector<real>{1, 4});
    for (int k : {1, 3}) EXPECT_LT(static_cast<double>(bergman_kernel(h, k, rule).sup_dev), 1e-8);
  }
}

TEST(BoundAudit, Examples) {
  std::mt19937_64 rng(9);
  SectionBasis b(BundleSpec({1, 2}), 1);
  PositiveForm g0 = standard_form(b);
  std::vector<SpherePoint> pts;
  for (int i = 0; i < 50; ++i) pts.push_back(random_point(rng));
  auto zero = fs_pointwise_bound_audit(b, g0, Mat::Zero(b.size(), b.size()), pts);
  EXPECT_EQ(zero.max_log_ratio, real(0));
  EXPECT_EQ(zero.min_log_ratio, real(0));
  auto sc = fs_pointwise_bound_audit(b, g0, identity(b.size()) * real(0.7), pts);
  EXPECT_NEAR(static_cast<double>(sc.max_log_ratio), 1.4, 1e-15);
  EXPECT_NEAR(static_cast<double>(sc.min_log_ratio), 1.4, 1e-15);
  for (int i = 0; i < 10; ++i) {
    Mat z = random_hermitian(b.size(), rng, 1);
    z /= op_norm_herm(z);
    EXPECT_TRUE(fs_pointwise_bound_audit(b, g0, z, pts).pass);
  }
}

// O(0)+O(0) at k = 1, G = diag(e^2,1,1,1): the ratio is (e^{-2}+|z|^2)/(1+|z|^2).
TEST(DeltaBoundedness, NodeScanOracle) {
  auto rule = build_quadrature(12, 12);
  SectionBasis b(BundleSpec({0, 0}), 1);
  Mat g = identity(4);
  g(0, 0) = std::exp(real(2));
  auto h = fs_metric(b, PositiveForm::from_matrix(g)), h0 = fs_metric(b, PositiveForm::from_matrix(identity(4)));
  real expect = 1;
  for (const auto& p : rule.nodes) {
    real s = p.chart == Chart::Z ? std::norm(p.coord) : real(1) / std::norm(p.coord);
    expect = std::min(expect, (std::exp(real(-2)) + s) / (1 + s));
  }
  real d = delta_boundedness(*h, *h0, rule);
  EXPECT_NEAR(static_cast<double>(d), static_cast<double>(expect), 1e-15);
  EXPECT_GT(d, 0);
  EXPECT_LT(d, 1);
}

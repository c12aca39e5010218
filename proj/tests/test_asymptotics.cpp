#include "hemet/asymptotics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace hemet;

namespace {

double d(real x) { return static_cast<double>(x); }

std::vector<GQ> unit(int n, int i) {
  std::vector<GQ> v(n);
  v[i] = GQ(1);
  return v;
}

WeightSpec scalar_spec(int n, int k, mpq_class w) {
  WeightSpec z;
  z.k = k;
  WeightBlock blk{w, {}};
  for (int i = 0; i < n; ++i) blk.vectors.push_back(unit(n, i));
  z.blocks.push_back(blk);
  return z;
}

}  // namespace

TEST(RoundRational, Examples) {
  EXPECT_EQ(round_rational(real(1) / 3).value, mpq_class(1, 3));
  EXPECT_EQ(round_rational(pi, 7).value, mpq_class(22, 7));
  EXPECT_EQ(round_rational(pi, 200).value, mpq_class(355, 113));
  EXPECT_EQ(round_rational(real(-2.5)).value, mpq_class(-5, 2));
  auto r = round_rational(real(0.5) + real(1e-9), 64, real(1e-6));
  EXPECT_EQ(r.value, mpq_class(1, 2));
  EXPECT_NEAR(d(r.error), 1e-9, 1e-15);
  EXPECT_EQ(round_rational(0).value, 0);
}

TEST(BergmanRay, StartAndScalarGenerators) {
  auto rule = build_quadrature(8, 8);
  SectionBasis b(BundleSpec({1, -1}), 1);
  PositiveForm g0 = standard_form(b);
  auto h0 = fs_metric(b, g0);
  for (const auto& p : rule.nodes) EXPECT_LT(d((bergman_ray(b, g0, identity(4), 0)->value(p) - h0->value(p)).norm()), 1e-16);
  // G_t = e^{-2ct} G0, so h_t = e^{-2ct} h0
  const real c = real(0.7), t = real(1.3);
  auto ht = bergman_ray(b, g0, identity(4) * c, t);
  for (const auto& p : rule.nodes) {
    Mat want = h0->value(p) * std::exp(-2 * c * t);
    EXPECT_LT(d((ht->value(p) - want).norm() / want.norm()), 1e-15);
  }
  EXPECT_THROW(bergman_ray(b, g0, identity(4), -1), argument_error);
}

TEST(Ray, RescalesToUnitNorm) {
  SectionBasis b(BundleSpec({1, -1}), 1);
  auto z = summand_weight_spec(BundleSpec({1, -1}), 1, {mpq_class(1), mpq_class(-3)});
  auto ray = ray_from_weights(b, standard_form(b), z);
  EXPECT_EQ(*ray.exact_scale, mpq_class(1, 3));
  EXPECT_NEAR(d(op_norm_herm(ray.zeta)), 1.0, 1e-15);
  auto plain = make_ray(b, standard_form(b), identity(4) * real(0.5));
  EXPECT_EQ(plain.scale, 1);
  Mat bad = Mat::Zero(4, 4);
  bad(0, 1) = 1;
  EXPECT_THROW(make_ray(b, standard_form(b), bad), argument_error);
}

TEST(SlopeEstimate, SplitExamples) {
  auto rule = build_quadrature(24, 24);
  struct Case {
    std::vector<int> degs;
    std::vector<mpq_class> w;
    mpq_class mna;
  };
  for (const auto& c : {Case{{1, -1}, {mpq_class(1, 3), mpq_class(-1)}, mpq_class(-8, 3)},
                        Case{{-1, 1}, {mpq_class(1), mpq_class(-1, 3)}, mpq_class(8, 3)}}) {
    BundleSpec spec(c.degs);
    SectionBasis b(spec, 1);
    auto z = summand_weight_spec(spec, 1, c.w);
    auto ray = ray_from_weights(b, standard_form(b), z);
    auto rep = slope_estimate(ray, z, 20, 11, rule);
    EXPECT_EQ(rep.mna_exact, c.mna);
    EXPECT_TRUE(rep.saturated);
    EXPECT_LT(d(rep.relative_gap), 0.1);
    EXPECT_TRUE(std::isfinite(rep.c_offset));
    EXPECT_EQ(rep.mdon_values.front(), 0);
  }
}

TEST(SlopeEstimate, Errors) {
  auto rule = build_quadrature(8, 8);
  BundleSpec spec({1, -1});
  SectionBasis b(spec, 1);
  auto z = summand_weight_spec(spec, 1, {mpq_class(1, 3), mpq_class(-1)});
  auto ray = ray_from_weights(b, standard_form(b), z);
  EXPECT_THROW(slope_estimate(ray, z, 5, 11, rule), argument_error);
  EXPECT_THROW(slope_estimate(ray, z, 20, 2, rule), argument_error);
  auto other = summand_weight_spec(spec, 1, {mpq_class(1), mpq_class(-1)});
  EXPECT_THROW(slope_estimate(ray, other, 20, 11, rule), argument_error);
}

TEST(RenormalizedLimit, ConvergesToSplitLimit) {
  BundleSpec spec({1, -1});
  SectionBasis b(spec, 1);
  auto z = summand_weight_spec(spec, 1, {mpq_class(1, 3), mpq_class(-1)});
  auto ray = ray_from_weights(b, standard_form(b), z);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<SpherePoint> pts;
  for (int i = 0; i < 6; ++i) pts.push_back(SpherePoint::from_z(cx(nd(rng), nd(rng))));
  auto lim = renormalized_limit(ray, z, {10, 15, 20}, pts);
  ASSERT_EQ(lim.cauchy_defects.size(), 2u);
  EXPECT_LT(d(lim.cauchy_defects.back()), 1e-6);
  for (bool pd : lim.pd_flags) EXPECT_TRUE(pd);
  EXPECT_LT(d(lim.offdiag), 1e-6);
}

TEST(Coercivity, ScalarGeneratorIsFlat) {
  auto rule = build_quadrature(16, 16);
  BundleSpec spec({2, 2});
  SectionBasis b(spec, 2);
  auto z = scalar_spec(b.size(), 2, mpq_class(1, 2));
  auto ray = ray_from_weights(b, standard_form(b), z);
  EXPECT_EQ(mna(spec, z), 0);
  for (real m : mdon_along_ray(ray, {0, 5, 10}, rule)) EXPECT_NEAR(d(m), 0.0, 1e-10);
}

TEST(Coercivity, ProbeTableIsNonnegative) {
  auto rule = build_quadrature(16, 16);
  auto rows = coercivity_probe(BundleSpec({2, 2}), {2}, 2, 10, 6, rule, 7);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].samples, 2);
  EXPECT_EQ(rows[0].per_sample.size(), 2u);
  EXPECT_GE(rows[0].c_k, 0);
  EXPECT_GE(rows[0].min_mna, 0);
}

TEST(Perturb, ScalarGeneratorGetsJna) {
  BundleSpec spec({0, 0});
  auto z = scalar_spec(4, 1, mpq_class(0));
  auto p = perturb_zeta_for_jna(spec, z, mpq_class(1, 8));
  EXPECT_EQ(p.jna_before, 0);
  EXPECT_GE(p.jna_after, mpq_class(1, 8));
  EXPECT_EQ(p.op_change, mpq_class(1, 4));
  mpq_class tr = 0;
  for (const auto& blk : p.xi.blocks) tr += blk.w * mpq_class(static_cast<long>(blk.vectors.size()));
  EXPECT_EQ(tr, 0);
  EXPECT_NO_THROW(validate(spec, p.xi));
}

TEST(Perturb, LeavesLargeJnaAloneAndRejectsBadInput) {
  BundleSpec spec({1, -1});
  auto z = summand_weight_spec(spec, 1, {mpq_class(1), mpq_class(-3)});
  auto p = perturb_zeta_for_jna(spec, z, mpq_class(1, 8));
  EXPECT_EQ(p.op_change, 0);
  EXPECT_EQ(p.jna_after, 4);
  EXPECT_THROW(perturb_zeta_for_jna(spec, z, mpq_class(0)), argument_error);
  EXPECT_THROW(perturb_zeta_for_jna(spec, z, mpq_class(1, 4)), argument_error);
  EXPECT_THROW(perturb_zeta_for_jna(BundleSpec({2}), scalar_spec(4, 1, mpq_class(0)), mpq_class(1, 8)), argument_error);
}

TEST(Perturb, MdonShiftVanishesForSameGenerator) {
  auto rule = build_quadrature(12, 12);
  BundleSpec spec({1, -1});
  SectionBasis b(spec, 1);
  auto z = summand_weight_spec(spec, 1, {mpq_class(1, 3), mpq_class(-1)});
  EXPECT_NEAR(d(perturbation_mdon_shift(b, standard_form(b), z, z, 3, rule)), 0.0, 1e-12);
}

#pragma once

#include "hemet/geometry.hpp"

#include <memory>
#include <numeric>
#include <ostream>

namespace hemet {

// Small exact fraction for slopes of split bundles.
struct Fraction {
  long long num = 0;
  long long den = 1;

  Fraction() = default;
  Fraction(long long n, long long d = 1) : num(n), den(d) {
    if (den == 0) throw argument_error("zero denominator");
    if (den < 0) num = -num, den = -den;
    long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) num /= g, den /= g;
  }
  real value() const { return real(num) / real(den); }
  friend bool operator==(const Fraction& a, const Fraction& b) { return a.num == b.num && a.den == b.den; }
  std::string str() const { return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den); }
};

struct BundleSpec {
  std::vector<int> degrees;

  BundleSpec() = default;
  explicit BundleSpec(std::vector<int> d) : degrees(std::move(d)) {
    if (degrees.empty()) throw argument_error("a bundle needs at least one summand");
  }
  int rank() const { return static_cast<int>(degrees.size()); }
  long long degree() const { return std::accumulate(degrees.begin(), degrees.end(), 0LL); }
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < degrees.size(); ++i)
      s += (i ? "+" : "") + std::string("O(") + std::to_string(degrees[i]) + ")";
    return s;
  }
};

inline Fraction slope(const BundleSpec& e) {
  if (e.rank() < 1) throw argument_error("rank must be positive");
  return Fraction(e.degree(), e.rank());
}

// Least k with H^1(E(k-1)) = 0.
inline int regularity(const BundleSpec& e) {
  int m = -e.degrees.front();
  for (int a : e.degrees) m = std::max(m, -a);
  return m;
}

enum class MetricKind { fs, geodesic, scaled, pointwise_exp };

struct Jet {
  Mat value, dz, dzbar, dzdzbar;
};

// Fourth order central differences in the real coordinates of the chart.
template <class F>
Jet fd_jet(F&& f, const SpherePoint& p) {
  const real d = real(1e-3) * (real(1) + std::abs(p.coord));
  const cx ex(d, 0), ey(0, d);
  Mat c = f(p);
  Mat xp1 = f(p.shifted(ex)), xm1 = f(p.shifted(-ex)), xp2 = f(p.shifted(real(2) * ex)), xm2 = f(p.shifted(real(-2) * ex));
  Mat yp1 = f(p.shifted(ey)), ym1 = f(p.shifted(-ey)), yp2 = f(p.shifted(real(2) * ey)), ym2 = f(p.shifted(real(-2) * ey));
  Mat fx = (xm2 - real(8) * xm1 + real(8) * xp1 - xp2) / (real(12) * d);
  Mat fy = (ym2 - real(8) * ym1 + real(8) * yp1 - yp2) / (real(12) * d);
  Mat fxx = (-xp2 + real(16) * xp1 - real(30) * c + real(16) * xm1 - xm2) / (real(12) * d * d);
  Mat fyy = (-yp2 + real(16) * yp1 - real(30) * c + real(16) * ym1 - ym2) / (real(12) * d * d);
  const cx i(0, 1);
  return {c, (fx - i * fy) / real(2), (fx + i * fy) / real(2), (fxx + fyy) / real(4)};
}

// First derivatives only (d/dc, d/dcbar).
template <class F>
std::pair<Mat, Mat> fd_gradient(F&& f, const SpherePoint& p) {
  const real d = real(1e-3) * (real(1) + std::abs(p.coord));
  const cx ex(d, 0), ey(0, d);
  Mat fx = (f(p.shifted(real(-2) * ex)) - real(8) * f(p.shifted(-ex)) + real(8) * f(p.shifted(ex)) - f(p.shifted(real(2) * ex))) / (real(12) * d);
  Mat fy = (f(p.shifted(real(-2) * ey)) - real(8) * f(p.shifted(-ey)) + real(8) * f(p.shifted(ey)) - f(p.shifted(real(2) * ey))) / (real(12) * d);
  const cx i(0, 1);
  return {(fx - i * fy) / real(2), (fx + i * fy) / real(2)};
}

// A hermitian metric on a split bundle, evaluated pointwise in the chart frame
// of the point (chart W components are conj(D) h_Z D with D = diag(z^{a_i})).
class Metric {
 public:
  explicit Metric(BundleSpec b) : bundle_(std::move(b)) {}
  virtual ~Metric() = default;

  virtual MetricKind kind() const = 0;
  virtual Mat value(const SpherePoint& p) const = 0;

  // h^{-1} dh/dc.
  virtual Mat connection(const SpherePoint& p) const {
    Mat h = checked(p);
    auto g = fd_gradient([this](const SpherePoint& q) { return value(q); }, p);
    return h.ldlt().solve(g.first);
  }

  // Lambda_omega F_h with F_h = (i/2pi) dbar(h^{-1} dh).
  virtual Mat lambda_curvature(const SpherePoint& p) const {
    Jet j = fd_jet([this](const SpherePoint& q) { return value(q); }, p);
    auto ldlt = j.value.ldlt();
    Mat g = -(ldlt.solve(j.dzdzbar) - ldlt.solve(j.dzbar) * ldlt.solve(j.dz));
    return contract(g, p);
  }

  Mat checked(const SpherePoint& p) const {
    Mat h = value(p);
    if (!all_finite(h)) throw evaluation_error("non-finite metric at " + p.describe());
    Eigen::LLT<Mat> llt(hermitian_part(h));
    if (llt.info() != Eigen::Success) throw evaluation_error("metric not positive definite at " + p.describe());
    return h;
  }

  const BundleSpec& bundle() const { return bundle_; }
  int rank() const { return bundle_.rank(); }

 private:
  BundleSpec bundle_;
};

using MetricPtr = std::shared_ptr<const Metric>;
using EndomorphismField = std::function<Mat(const SpherePoint&)>;

inline Mat chern_curvature(const Metric& h, const SpherePoint& p) {
  h.checked(p);
  return h.lambda_curvature(p) * omega_coefficient(p);
}

// factor * h
class ScaledMetric final : public Metric {
 public:
  ScaledMetric(MetricPtr base, real factor) : Metric(base->bundle()), base_(std::move(base)), factor_(factor) {
    if (!(factor_ > 0)) throw argument_error("scale factor must be positive");
  }
  MetricKind kind() const override { return MetricKind::scaled; }
  Mat value(const SpherePoint& p) const override { return base_->value(p) * factor_; }
  Mat connection(const SpherePoint& p) const override { return base_->connection(p); }
  Mat lambda_curvature(const SpherePoint& p) const override { return base_->lambda_curvature(p); }
  real factor() const { return factor_; }
  const MetricPtr& base() const { return base_; }

 private:
  MetricPtr base_;
  real factor_;
};

// h0 exp(s v) for an h0-selfadjoint field v.
class PointwiseExpMetric final : public Metric {
 public:
  PointwiseExpMetric(MetricPtr h0, EndomorphismField v, real s)
      : Metric(h0->bundle()), h0_(std::move(h0)), v_(std::move(v)), s_(s) {}
  MetricKind kind() const override { return MetricKind::pointwise_exp; }
  Mat value(const SpherePoint& p) const override {
    Mat h0 = h0_->value(p);
    Mat r = herm_pow(h0, real(0.5));
    Mat ri = pd_inverse(r);
    Mat x = hermitian_part(r * v_(p) * ri) * s_;
    return hermitian_part(r * herm_exp(x) * r);
  }
  const EndomorphismField& field() const { return v_; }

 private:
  MetricPtr h0_;
  EndomorphismField v_;
  real s_;
};

// log(h0^{-1} h1), computed through the symmetric form h0^{-1/2} h1 h0^{-1/2}.
inline Mat relative_log(const Mat& h1, const Mat& h0) {
  Mat r = herm_pow(h0, real(0.5));
  Mat ri = pd_inverse(r);
  Mat l = herm_log(hermitian_part(ri * h1 * ri));
  return ri * l * r;
}

// h_s = exp(s log(h1 h0^{-1})) h0 = h0 exp(s v), v = log(h0^{-1} h1).
class GeodesicMetric final : public Metric {
 public:
  GeodesicMetric(MetricPtr h0, MetricPtr h1, real s) : Metric(h0->bundle()), h0_(std::move(h0)), h1_(std::move(h1)), s_(s) {
    if (h0_->bundle().degrees != h1_->bundle().degrees) throw argument_error("geodesic endpoints live on different bundles");
  }
  MetricKind kind() const override { return MetricKind::geodesic; }
  Mat value(const SpherePoint& p) const override {
    Mat h0 = h0_->value(p);
    Mat r = herm_pow(h0, real(0.5));
    Mat ri = pd_inverse(r);
    Mat l = herm_log(hermitian_part(ri * h1_->value(p) * ri));
    return hermitian_part(r * herm_exp(l * s_) * r);
  }
  // v = h_s^{-1} dh_s/ds, independent of s.
  Mat velocity(const SpherePoint& p) const { return relative_log(h1_->value(p), h0_->value(p)); }
  const MetricPtr& start() const { return h0_; }
  const MetricPtr& end() const { return h1_; }
  real parameter() const { return s_; }

 private:
  MetricPtr h0_, h1_;
  real s_;
};

inline MetricPtr geodesic(MetricPtr h0, MetricPtr h1, real s) {
  return std::make_shared<GeodesicMetric>(std::move(h0), std::move(h1), s);
}

inline MetricPtr scaled(MetricPtr h, real factor) {
  if (auto sm = std::dynamic_pointer_cast<const ScaledMetric>(h))
    return std::make_shared<ScaledMetric>(sm->base(), sm->factor() * factor);
  return std::make_shared<ScaledMetric>(std::move(h), factor);
}

// Lambda F - (mu/Vol) Id.
inline Mat he_residual_at(const Metric& h, const SpherePoint& p) {
  Mat f = h.lambda_curvature(p);
  return f - identity(h.rank()) * slope(h.bundle()).value();
}

inline EndomorphismField he_residual_field(MetricPtr h) {
  return [h](const SpherePoint& p) { return he_residual_at(*h, p); };
}

struct HeResidual {
  real sup = 0;
  real l2 = 0;
  real hermitian_defect = 0;
};

inline HeResidual he_residual(const Metric& h, const QuadratureRule& rule) {
  HeResidual out;
  std::vector<real> sq(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const SpherePoint& p = rule.nodes[i];
    Mat hv = h.checked(p);
    Mat r = he_residual_at(h, p);
    Mat hr = hv * r;
    real scale = std::max<real>(1, hr.cwiseAbs().maxCoeff());
    out.hermitian_defect = std::max(out.hermitian_defect, hemet::hermitian_defect(hr) / scale);
    // h-selfadjoint part of r
    Mat rs = hv.ldlt().solve(hermitian_part(hr));
    RVec ev = selfadjoint_eigenvalues(rs, hv);
    for (Eigen::Index j = 0; j < ev.size(); ++j) out.sup = std::max(out.sup, std::abs(ev(j)));
    sq[i] = ev.squaredNorm();
  }
  out.l2 = std::sqrt(integrate_values(sq, rule));
  return out;
}

// Min over nodes of the least eigenvalue of h h_ref^{-1}; returns h / c and c.
inline std::pair<MetricPtr, real> scale_normalize(MetricPtr h, const Metric& h_ref, const QuadratureRule& rule) {
  real c = std::numeric_limits<real>::infinity();
  for (const auto& p : rule.nodes) c = std::min(c, relative_eigenvalues(h->checked(p), h_ref.checked(p))(0));
  if (!(c > 0)) throw evaluation_error("scale normalization found a degenerate metric");
  return {scaled(std::move(h), real(1) / c), c};
}

// Min over nodes of lambda_min / lambda_max of h h0^{-1}.
inline real delta_boundedness(const Metric& h, const Metric& h0, const QuadratureRule& rule) {
  real d = 1;
  for (const auto& p : rule.nodes) {
    RVec ev = relative_eigenvalues(h.checked(p), h0.checked(p));
    d = std::min(d, ev(0) / ev(ev.size() - 1));
  }
  return d;
}

}  // namespace hemet

#pragma once

#include "hemet/sections.hpp"

#include <optional>

namespace hemet {

// Paths of FS metrics FS(G_t), held through a factor B_t (B_t B_t^* = G_t^{-1}) and a
// generator M_t with d/dt (S G_t^{-1} S^*) = -S (M_t B_t^* + B_t M_t^*) S^*.
struct FormFrame {
  Mat b, m;
};

struct FormPath {
  SectionBasis basis;
  std::function<FormFrame(real)> frame;
  std::string kind;

  FsMetric metric(real t) const { return FsMetric(basis, PositiveForm::from_factor(frame(t).b)); }
};

// G_t = G0^{1/2} (G0^{-1/2} G1 G0^{-1/2})^t G0^{1/2}.
inline FormPath bergman_path(const SectionBasis& basis, const PositiveForm& g0, const PositiveForm& g1) {
  if (g0.size() != basis.size() || g1.size() != basis.size()) throw argument_error("form size does not match dim H^0(E(k))");
  Mat b0 = g0.factor();
  Mat c = g1.factor().partialPivLu().solve(b0);
  Mat d = herm_log(hermitian_part(c.adjoint() * c));
  return {basis,
          [b0, d](real t) {
            Mat e = herm_exp(d * (-t / 2));
            Mat b = b0 * e;
            return FormFrame{b, b * d / real(2)};
          },
          "bergman"};
}

// G_t = e^{-t zeta} G0 e^{-t zeta}.
inline FormPath one_parameter_path(const SectionBasis& basis, const PositiveForm& g0, const Mat& zeta) {
  if (hermitian_defect(zeta) > real(1e-12) * std::max<real>(1, zeta.cwiseAbs().maxCoeff()))
    throw argument_error("the generator must be hermitian");
  Mat b0 = g0.factor();
  Mat z = hermitian_part(zeta);
  return {basis,
          [b0, z](real t) {
            Mat b = herm_exp(z * t) * b0;
            return FormFrame{b, -z * b};
          },
          "one_parameter"};
}

// h_t = e^{ct} FS(G0).
inline FormPath scaling_path(const SectionBasis& basis, const PositiveForm& g0, real c) {
  Mat b0 = g0.factor();
  return {basis,
          [b0, c](real t) {
            Mat b = b0 * std::exp(-c * t / 2);
            return FormFrame{b, b * (c / 2)};
          },
          "scaling"};
}

// h^{-1} dh/dt and the FS jet at one point of a form path.
inline std::pair<Mat, FsJet> path_velocity(const FormPath& path, const FormFrame& f, const SpherePoint& p) {
  FsJet j = fs_jet(path.basis, f.b, p);
  Mat t = path.basis.eval(p) * f.m;
  Mat v = (t * j.shat.adjoint() + j.shat * t.adjoint()) * j.kinv;
  return {v, std::move(j)};
}

inline real trace_re(const Mat& a) { return a.trace().real(); }

// dM/dt along the path.
inline real first_derivative(const FormPath& path, real t, const QuadratureRule& rule) {
  FormFrame f = path.frame(t);
  const real mu = slope(path.basis.bundle()).value();
  const int r = path.basis.rank();
  try {
    return integrate([&](const SpherePoint& p) -> real {
      auto [v, j] = path_velocity(path, f, p);
      return trace_re(v * (j.lambda_f - identity(r) * mu));
    }, rule);
  } catch (const evaluation_error& e) {
    throw evaluation_error(std::string(e.what()) + " (path parameter t=" + std::to_string(static_cast<double>(t)) + ")");
  }
}

struct PathIntegral {
  real value = 0;
  int t_order = 0;
  bool converged = false;
};

// Gauss-Legendre in t with order doubling.
template <class F>
PathIntegral integrate_in_t(F&& derivative, real t0, real t1, int order, real tol = real(1e-8), int max_order = 512) {
  if (order < 4) throw argument_error("t-quadrature order must be at least 4");
  auto eval = [&](int n) {
    auto [ts, ws] = gauss_legendre(n, t0, t1);
    std::vector<real> terms(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) terms[i] = derivative(ts[i]) * ws[i];
    return detail::pairwise_sum(terms, 0, terms.size());
  };
  PathIntegral out;
  real prev = eval(order);
  int n = order;
  while (n < max_order) {
    n *= 2;
    real cur = eval(n);
    bool ok = std::abs(cur - prev) < tol * std::max<real>(1, std::abs(cur));
    prev = cur;
    if (ok) {
      out.converged = true;
      break;
    }
  }
  out.value = prev;
  out.t_order = n;
  return out;
}

inline PathIntegral donaldson_along(const FormPath& path, real t0, real t1, const QuadratureRule& rule, int order = 16) {
  return integrate_in_t([&](real t) { return first_derivative(path, t, rule); }, t0, t1, order);
}

struct PathSpec {
  enum class Kind { automatic, bergman, pointwise_exponential };
  Kind kind = Kind::automatic;
  int t_nodes = 16;
};

inline std::string to_string(PathSpec::Kind k) {
  switch (k) {
    case PathSpec::Kind::bergman: return "bergman";
    case PathSpec::Kind::pointwise_exponential: return "pointwise_exponential";
    default: return "automatic";
  }
}

// FS view of a metric, looking through constant scalings.
inline std::optional<FsMetric> as_fs(const MetricPtr& h) {
  if (auto fs = std::dynamic_pointer_cast<const FsMetric>(h)) return *fs;
  if (auto sm = std::dynamic_pointer_cast<const ScaledMetric>(h)) {
    if (auto base = as_fs(sm->base())) return FsMetric(base->basis(), base->form().scaled(real(1) / sm->factor()));
  }
  return std::nullopt;
}

inline bool same_basis(const SectionBasis& a, const SectionBasis& b) {
  return a.level() == b.level() && a.bundle().degrees == b.bundle().degrees;
}

// dM/ds along the pointwise geodesic from h0 to h1, v = log(h0^{-1} h1) on the nodes.
inline real geodesic_first_derivative(const MetricPtr& h0, const MetricPtr& h1, const std::vector<Mat>& v, real s,
                                      const QuadratureRule& rule) {
  GeodesicMetric hs(h0, h1, s);
  const real mu = slope(h0->bundle()).value();
  std::vector<real> vals(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const SpherePoint& p = rule.nodes[i];
    try {
      hs.checked(p);
      Mat r = hs.lambda_curvature(p) - identity(h0->rank()) * mu;
      vals[i] = trace_re(v[i] * r);
    } catch (const evaluation_error& e) {
      throw evaluation_error(std::string(e.what()) + " (geodesic parameter s=" + std::to_string(static_cast<double>(s)) + ")");
    }
    if (!std::isfinite(vals[i])) throw evaluation_error("non-finite integrand at node " + p.describe());
  }
  return integrate_values(vals, rule);
}

inline std::vector<Mat> relative_log_nodes(const MetricPtr& h0, const MetricPtr& h1, const QuadratureRule& rule) {
  std::vector<Mat> v(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) v[i] = relative_log(h1->checked(rule.nodes[i]), h0->checked(rule.nodes[i]));
  return v;
}

struct DonaldsonResult {
  real value = 0;
  PathSpec::Kind path_kind = PathSpec::Kind::automatic;
  int t_order = 0;
  std::size_t rule_size = 0;
  bool converged = false;
};

// M(h1, h0) = int_0^1 dt int tr(h_t^{-1} dh_t/dt (Lambda F_t - mu Id)) omega.
inline DonaldsonResult donaldson_detailed(const MetricPtr& h1, const MetricPtr& h0, const PathSpec& path, const QuadratureRule& rule) {
  if (h1->bundle().degrees != h0->bundle().degrees) throw argument_error("metrics live on different bundles");
  if (path.t_nodes < 4) throw argument_error("t-quadrature order must be at least 4");
  DonaldsonResult out;
  out.rule_size = rule.size();
  auto f1 = as_fs(h1), f0 = as_fs(h0);
  bool fs_pair = f1 && f0 && same_basis(f1->basis(), f0->basis());
  PathSpec::Kind kind = path.kind;
  if (kind == PathSpec::Kind::automatic) kind = fs_pair ? PathSpec::Kind::bergman : PathSpec::Kind::pointwise_exponential;
  if (kind == PathSpec::Kind::bergman && !fs_pair)
    throw argument_error("a Bergman path needs two FS metrics on the same H^0(E(k))");
  out.path_kind = kind;
  PathIntegral pi;
  if (kind == PathSpec::Kind::bergman) {
    FormPath fp = bergman_path(f0->basis(), f0->form(), f1->form());
    pi = donaldson_along(fp, 0, 1, rule, path.t_nodes);
  } else {
    std::vector<Mat> v = relative_log_nodes(h0, h1, rule);
    pi = integrate_in_t([&](real s) { return geodesic_first_derivative(h0, h1, v, s, rule); }, 0, 1, path.t_nodes);
  }
  out.value = pi.value;
  out.t_order = pi.t_order;
  out.converged = pi.converged;
  return out;
}

inline real donaldson(const MetricPtr& h1, const MetricPtr& h0, const PathSpec& path, const QuadratureRule& rule) {
  return donaldson_detailed(h1, h0, path, rule).value;
}

inline real cocycle_defect(const MetricPtr& h2, const MetricPtr& h1, const MetricPtr& h0, const PathSpec& path,
                           const QuadratureRule& rule) {
  return std::abs(donaldson(h2, h0, path, rule) - donaldson(h2, h1, path, rule) - donaldson(h1, h0, path, rule));
}

// sup over points of |d/ds (h_s^{-1} dh_s/ds)| by finite differences in s, and the
// drift of h_s^{-1} dh_s/ds away from v.
struct GeodesicResidual {
  real equation = 0;
  real velocity_drift = 0;
};

inline GeodesicResidual geodesic_residual(const MetricPtr& h0, const MetricPtr& h1, real s, const std::vector<SpherePoint>& points) {
  const real d = real(1e-3);
  GeodesicResidual out;
  for (const auto& p : points) {
    auto at = [&](real u) { return GeodesicMetric(h0, h1, u).value(p); };
    Mat c = at(s), p1 = at(s + d), m1 = at(s - d), p2 = at(s + 2 * d), m2 = at(s - 2 * d);
    Mat hd = (m2 - real(8) * m1 + real(8) * p1 - p2) / (real(12) * d);
    Mat hdd = (-p2 + real(16) * p1 - real(30) * c + real(16) * m1 - m2) / (real(12) * d * d);
    auto ldlt = c.ldlt();
    Mat a = ldlt.solve(hd);
    Mat res = ldlt.solve(hdd) - a * a;
    out.equation = std::max(out.equation, res.cwiseAbs().maxCoeff());
    Mat v = relative_log(h1->value(p), h0->value(p));
    out.velocity_drift = std::max(out.velocity_drift, (a - v).cwiseAbs().maxCoeff());
  }
  return out;
}

struct SecondDerivative {
  real formula = 0;
  real fd = 0;
};

// d^2/ds^2 M(h_s, h_0) along h_s = h0 exp(s v): the Hessian integral and a five-point
// second difference of M built from Gauss-Legendre panels of dM/ds.
inline SecondDerivative second_derivative_geodesic(const MetricPtr& h0, const MetricPtr& h1, real s, const QuadratureRule& rule,
                                                   real eps = real(0.02)) {
  SecondDerivative out;
  auto vfield = [&](const SpherePoint& q) { return relative_log(h1->value(q), h0->value(q)); };
  out.formula = integrate([&](const SpherePoint& p) -> real {
    Mat v = vfield(p);
    auto [dv, dbv] = fd_gradient(vfield, p);
    Mat nabla = dv + h0->connection(p) * v - v * h0->connection(p);
    // v is h0-selfadjoint: exponentiate through h0^{1/2}
    Mat h0v = h0->value(p);
    Mat r = herm_pow(h0v, real(0.5)), ri = pd_inverse(r);
    Mat x = hermitian_part(r * v * ri);
    Mat ep = ri * herm_exp(x * s) * r, em = ri * herm_exp(x * (-s)) * r;
    return contract(trace_re(dbv * em * nabla * ep), p);
  }, rule);

  std::vector<Mat> v = relative_log_nodes(h0, h1, rule);
  auto panel = [&](real a, real b) {
    auto [ts, ws] = gauss_legendre(4, a, b);
    real acc = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) acc += ws[i] * geodesic_first_derivative(h0, h1, v, ts[i], rule);
    return acc;
  };
  real ip1 = panel(s, s + eps), ip2 = panel(s + eps, s + 2 * eps);
  real im1 = panel(s - eps, s), im2 = panel(s - 2 * eps, s - eps);
  real mp1 = ip1, mp2 = ip1 + ip2, mm1 = -im1, mm2 = -im1 - im2;
  out.fd = (-mp2 + 16 * mp1 + 16 * mm1 - mm2) / (12 * eps * eps);
  return out;
}

// sup over points of |d/dt Lambda F + (1+|c|^2)^2 dbar(nabla v)|, v = h^{-1} dh/dt.
inline real curvature_variation_check(const FormPath& path, real t, const std::vector<SpherePoint>& points) {
  const real dt = real(1e-3);
  FormFrame f = path.frame(t);
  std::array<Mat, 4> bs = {path.frame(t - 2 * dt).b, path.frame(t - dt).b, path.frame(t + dt).b, path.frame(t + 2 * dt).b};
  real defect = 0;
  for (const auto& p : points) {
    auto lf = [&](const Mat& b) { return fs_jet(path.basis, b, p).lambda_f; };
    Mat dlf = (lf(bs[0]) - real(8) * lf(bs[1]) + real(8) * lf(bs[2]) - lf(bs[3])) / (real(12) * dt);
    auto vfield = [&](const SpherePoint& q) { return path_velocity(path, f, q).first; };
    auto nabla = [&](const SpherePoint& q) {
      Mat v = vfield(q);
      Mat theta = fs_jet(path.basis, f.b, q).theta;
      return Mat(fd_gradient(vfield, q).first + theta * v - v * theta);
    };
    Mat rhs = -contract(fd_gradient(nabla, p).second, p);
    defect = std::max(defect, (dlf - rhs).cwiseAbs().maxCoeff());
  }
  return defect;
}

// (delta - 1 - log delta) / (log delta)^2.
inline real c_delta(real delta) {
  if (!(delta > 0 && delta <= 1)) throw argument_error("delta must lie in (0, 1]");
  real l = std::log(delta);
  if (std::abs(l) < real(1e-4)) return real(0.5) + l / 6 + l * l / 24;
  return (delta - 1 - l) / (l * l);
}

// || Lambda F - mu Id ||_{L^2}.
inline real he_defect_norm(const Metric& h0, const QuadratureRule& rule) { return he_residual(h0, rule).l2; }

struct PoincareReport {
  real value = 0;    // 1 / lambda_1
  real lambda1 = 0;
  std::vector<std::pair<int, real>> history;  // (trial level, lambda_1)
  int trial_dim = 0;
  bool stable = false;
  std::string note;
};

// Rayleigh-Ritz for the first nonzero eigenvalue of nabla^* dbar on h0-hermitian fields.
// Trial fields S A S^* K^{-1} (balanced sections of E(m), A hermitian) made h0-selfadjoint.
inline real poincare_lambda1(const MetricPtr& h0, const QuadratureRule& rule, int m, int* dim_out = nullptr) {
  SectionBasis b(h0->bundle(), m);
  const Mat bf = standard_form(b).factor();
  const int n = b.size(), r = b.rank();
  std::vector<Mat> herm;
  for (int a = 0; a < n; ++a)
    for (int c = a; c < n; ++c) {
      Mat e = Mat::Zero(n, n);
      e(a, c) = 1;
      e(c, a) = 1;
      herm.push_back(e);
      if (c != a) {
        Mat f = Mat::Zero(n, n);
        f(a, c) = cx(0, 1);
        f(c, a) = cx(0, -1);
        herm.push_back(f);
      }
    }
  const int nf = static_cast<int>(herm.size());
  if (dim_out) *dim_out = nf;
  auto fields = [&](const SpherePoint& q) {
    Mat sh = b.eval(q) * bf;
    Mat kinv = pd_inverse(hermitian_part(sh * sh.adjoint()));
    Mat hv = h0->value(q);
    auto ldlt = hv.ldlt();
    std::vector<Mat> out(nf);
    for (int a = 0; a < nf; ++a) {
      Mat t = sh * herm[a] * sh.adjoint() * kinv;
      out[a] = (t + ldlt.solve(t.adjoint() * hv)) / real(2);
    }
    return out;
  };
  RMat q = RMat::Zero(nf, nf), mass = RMat::Zero(nf, nf);
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const SpherePoint& p = rule.nodes[i];
    const real w = rule.weights[i];
    const real dd = real(1e-3) * (real(1) + std::abs(p.coord));
    const cx ex(dd, 0), ey(0, dd);
    auto c0 = fields(p);
    auto xp1 = fields(p.shifted(ex)), xm1 = fields(p.shifted(-ex)), xp2 = fields(p.shifted(real(2) * ex)), xm2 = fields(p.shifted(real(-2) * ex));
    auto yp1 = fields(p.shifted(ey)), ym1 = fields(p.shifted(-ey)), yp2 = fields(p.shifted(real(2) * ey)), ym2 = fields(p.shifted(real(-2) * ey));
    Mat theta = h0->connection(p);
    std::vector<Mat> nab(nf), db(nf);
    const cx im(0, 1);
    for (int a = 0; a < nf; ++a) {
      Mat fx = (xm2[a] - real(8) * xm1[a] + real(8) * xp1[a] - xp2[a]) / (real(12) * dd);
      Mat fy = (ym2[a] - real(8) * ym1[a] + real(8) * yp1[a] - yp2[a]) / (real(12) * dd);
      Mat dz = (fx - im * fy) / real(2), dzb = (fx + im * fy) / real(2);
      nab[a] = dz + theta * c0[a] - c0[a] * theta;
      db[a] = dzb;
    }
    const real s = real(1) + std::norm(p.coord);
    for (int a = 0; a < nf; ++a)
      for (int c = 0; c < nf; ++c) {
        q(a, c) += w * s * s * trace_re(db[a] * nab[c]);
        mass(a, c) += w * trace_re(c0[a] * c0[c]);
      }
  }
  q = (q + q.transpose()) / real(2);
  mass = (mass + mass.transpose()) / real(2);
  Eigen::SelfAdjointEigenSolver<RMat> me(mass);
  const real mmax = me.eigenvalues().maxCoeff();
  std::vector<int> keep;
  for (int a = 0; a < nf; ++a)
    if (me.eigenvalues()(a) > real(1e-10) * mmax) keep.push_back(a);
  RMat proj(nf, keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) proj.col(j) = me.eigenvectors().col(keep[j]) / std::sqrt(me.eigenvalues()(keep[j]));
  RMat red = proj.transpose() * q * proj;
  Eigen::SelfAdjointEigenSolver<RMat> qe((red + red.transpose()) / real(2));
  for (Eigen::Index a = 0; a < qe.eigenvalues().size(); ++a)
    if (qe.eigenvalues()(a) > real(1e-6)) return qe.eigenvalues()(a);
  return std::numeric_limits<real>::infinity();
}

inline PoincareReport poincare_constant(const MetricPtr& h0, const QuadratureRule& rule, int start_level = -1, int max_level = 8) {
  PoincareReport out;
  int m = start_level >= 0 ? start_level : std::max(0, regularity(h0->bundle())) + 1;
  real prev = std::numeric_limits<real>::infinity();
  for (; m <= max_level; ++m) {
    int dim = 0;
    real l = poincare_lambda1(h0, rule, m, &dim);
    out.history.push_back({m, l});
    out.trial_dim = dim;
    if (std::isfinite(l)) {
      out.lambda1 = l;
      if (std::isfinite(prev) && std::abs(prev - l) <= real(0.01) * l) {
        out.stable = true;
        break;
      }
    }
    prev = l;
  }
  if (!std::isfinite(out.lambda1) || out.lambda1 <= 0) throw numeric_error("no nonzero eigenvalue in the trial space");
  out.value = real(1) / out.lambda1;
  if (!out.stable) out.note = "lambda_1 still moving by more than 1% at the largest trial level";
  return out;
}

struct DeltaBoundReport {
  real delta = 1;
  real c_delta = real(0.5);
  real he_defect = 0;
  real poincare = 0;
  real bound = 0;
  real mdon = 0;
  bool pass = true;
  std::string note;
};

struct ReferenceConstants {
  real he_defect = 0;
  real poincare = 0;
  bool poincare_stable = true;
};

inline ReferenceConstants reference_constants(const MetricPtr& h0, const QuadratureRule& rule) {
  PoincareReport pr = poincare_constant(h0, rule);
  return {he_defect_norm(*h0, rule), pr.value, pr.stable};
}

inline DeltaBoundReport delta_lower_bound_audit(const MetricPtr& h, const MetricPtr& h0, const QuadratureRule& rule,
                                                const ReferenceConstants& ref, bool allow_reducible = false) {
  if (h0->rank() >= 2 && !allow_reducible)
    throw argument_error("the lower bound assumes an irreducible bundle; split bundles of rank >= 2 need the override");
  DeltaBoundReport out;
  out.delta = delta_boundedness(*h, *h0, rule);
  out.c_delta = c_delta(std::min<real>(1, out.delta));
  out.he_defect = ref.he_defect;
  out.poincare = ref.poincare;
  out.bound = -real(0.25) / out.c_delta * out.he_defect * out.he_defect * out.poincare;
  out.mdon = donaldson(h, h0, PathSpec{}, rule);
  out.pass = out.mdon >= out.bound - real(1e-6);
  if (h0->rank() >= 2) out.note = "split bundle: audited with the irreducibility override";
  if (!ref.poincare_stable) out.note += (out.note.empty() ? "" : "; ") + std::string("Poincare estimate not yet stable to 1%");
  return out;
}

inline DeltaBoundReport delta_lower_bound_audit(const MetricPtr& h, const MetricPtr& h0, const QuadratureRule& rule,
                                                bool allow_reducible = false) {
  if (h0->rank() >= 2 && !allow_reducible)
    throw argument_error("the lower bound assumes an irreducible bundle; split bundles of rank >= 2 need the override");
  return delta_lower_bound_audit(h, h0, rule, reference_constants(h0, rule), allow_reducible);
}

}  // namespace hemet

#pragma once

#include "hemet/donaldson.hpp"
#include "hemet/quot.hpp"

namespace hemet {

inline real to_real(const mpq_class& q) {
  mpz_class n = q.get_num(), d = q.get_den();
  if (n.fits_slong_p() && d.fits_slong_p()) return real(n.get_si()) / real(d.get_si());
  return real(q.get_d());
}

inline cx to_cx(const GQ& a) { return {to_real(a.re), to_real(a.im)}; }

struct RationalApprox {
  mpq_class value;
  real error = 0;
};

// Best continued-fraction convergent with denominator <= max_den, or with tol > 0 the
// first convergent within tol of x.
inline RationalApprox round_rational(real x, long max_den = 64, real tol = 0) {
  if (!std::isfinite(x)) throw argument_error("cannot round a non-finite value");
  long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  real r = x;
  for (int it = 0; it < 64; ++it) {
    real a = std::floor(r);
    long ai = static_cast<long>(a);
    long p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    if (q2 > max_den) break;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    real frac = r - a;
    const real err = std::abs(real(p1) / real(q1) - x);
    if (err < real(1e-15) * std::max<real>(1, std::abs(x)) || frac == 0 || err <= tol) break;
    r = 1 / frac;
  }
  RationalApprox out{mpq_class(p1, q1), 0};
  out.value.canonicalize();
  out.error = std::abs(to_real(out.value) - x);
  return out;
}

// Orthonormal frame adapted to the blocks (Gram-Schmidt from the top block down),
// and zeta = sum_a w_a U_a U_a^*.
struct WeightFrame {
  Mat u;                  // N x N unitary, columns grouped by block
  std::vector<real> w;    // weight of each column
  std::vector<int> block; // block index of each column
  Mat zeta;
};

inline WeightFrame weight_frame(const WeightSpec& z) {
  WeightFrame f;
  const int n = z.dimension();
  f.u = Mat::Zero(n, n);
  int col = 0;
  for (std::size_t bi = 0; bi < z.blocks.size(); ++bi) {
    for (const auto& v : z.blocks[bi].vectors) {
      if (static_cast<int>(v.size()) != n) throw argument_error("weight vector length does not match the dimension");
      Vec x(n);
      for (int i = 0; i < n; ++i) x(i) = to_cx(v[i]);
      for (int pass = 0; pass < 2; ++pass)
        for (int c = 0; c < col; ++c) x -= f.u.col(c) * f.u.col(c).dot(x);
      real nx = x.norm();
      if (!(nx > real(1e-12))) throw argument_error("weight vectors are linearly dependent");
      f.u.col(col) = x / nx;
      f.w.push_back(to_real(z.blocks[bi].w));
      f.block.push_back(static_cast<int>(bi));
      ++col;
    }
  }
  if (col != n) throw argument_error("weight blocks do not span");
  RVec wd(n);
  for (int i = 0; i < n; ++i) wd(i) = f.w[i];
  f.zeta = hermitian_part(f.u * wd.cast<cx>().asDiagonal() * f.u.adjoint());
  return f;
}

// h_{sigma_t} = FS(e^{-t zeta} G0 e^{-t zeta}).
inline FsPtr bergman_ray(const SectionBasis& basis, const PositiveForm& g0, const Mat& zeta, real t) {
  if (t < 0) throw argument_error("ray parameter must be nonnegative");
  return fs_metric(basis, g0.conjugated(-zeta * t));
}

struct OnePSRay {
  SectionBasis basis;
  PositiveForm g0;
  Mat zeta;            // operator norm at most 1
  real scale = 1;      // zeta = scale * (generator as given)
  std::optional<mpq_class> exact_scale;
  std::optional<WeightFrame> frame;  // block-rational generators only
  Mat y;                             // U^* B0

  FsPtr at(real t) const { return bergman_ray(basis, g0, zeta, t); }
  FormPath path() const { return one_parameter_path(basis, g0, zeta); }
};

inline OnePSRay make_ray(const SectionBasis& basis, const PositiveForm& g0, const Mat& zeta) {
  if (zeta.rows() != basis.size() || zeta.cols() != basis.size()) throw argument_error("generator size does not match dim H^0(E(k))");
  if (hermitian_defect(zeta) > real(1e-12) * std::max<real>(1, zeta.cwiseAbs().maxCoeff()))
    throw argument_error("the generator must be hermitian");
  real n = op_norm_herm(hermitian_part(zeta));
  real s = n > 1 ? real(1) / n : real(1);
  return {basis, g0, hermitian_part(zeta) * s, s, std::nullopt, std::nullopt, Mat()};
}

inline OnePSRay ray_from_weights(const SectionBasis& basis, const PositiveForm& g0, const WeightSpec& z) {
  WeightFrame f = weight_frame(z);
  mpq_class top = 0;
  for (const auto& b : z.blocks) top = std::max(top, mpq_class(abs(b.w)));
  mpq_class s = top > 1 ? mpq_class(1 / top) : mpq_class(1);
  s.canonicalize();
  Mat y = f.u.adjoint() * g0.factor();
  return {basis, g0, f.zeta * to_real(s), to_real(s), s, f, y};
}

// Frame sections taken greedily, in weight order, from the images S(p) u of the frame vectors.
inline std::vector<int> adapted_columns(const OnePSRay& ray, const SpherePoint& p) {
  const WeightFrame& wf = *ray.frame;
  const int r = ray.basis.rank();
  Mat su = ray.basis.eval(p) * wf.u;
  std::vector<int> chosen;
  Mat f(r, 0);
  for (int c = 0; c < su.cols() && static_cast<int>(chosen.size()) < r; ++c) {
    Mat trial(r, f.cols() + 1);
    trial << f, su.col(c);
    Eigen::JacobiSVD<Mat> svd(trial);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) > real(1e-9) * std::max<real>(1, sv(0))) {
      f = trial;
      chosen.push_back(c);
    }
  }
  if (static_cast<int>(chosen.size()) < r) throw evaluation_error("generators do not span the fibre at " + p.describe());
  return chosen;
}

struct GradedJet {
  FsJet jet;                 // of the renormalized metric in the adapted frame
  Mat v;                     // h^{-1} dh/dt in the same frame
  std::vector<real> weights; // weight of each frame section
};

// The ray at (t, p) in the holomorphic frame of adapted_columns, rescaled by e^{w t} per
// frame section.  Sections of weight above a frame section's weight have no component
// along it off the singular locus; those entries are set to zero.
inline GradedJet graded_jet(const OnePSRay& ray, real t, const SpherePoint& p) {
  if (!ray.frame) throw argument_error("graded evaluation needs a block-rational generator");
  const WeightFrame& wf = *ray.frame;
  const int r = ray.basis.rank();
  const int n = ray.basis.size();
  std::vector<int> ch = adapted_columns(ray, p);
  Mat su = ray.basis.eval(p) * wf.u, sdu = ray.basis.eval_dz(p) * wf.u;
  Mat f(r, r), fd(r, r);
  for (int a = 0; a < r; ++a) {
    f.col(a) = su.col(ch[a]);
    fd.col(a) = sdu.col(ch[a]);
  }
  auto lu = f.partialPivLu();
  Mat sig = lu.solve(su);
  Mat dsig = lu.solve(sdu - fd * sig);
  GradedJet out;
  Mat a = Mat::Zero(r, n), ad = Mat::Zero(r, n), aw = Mat::Zero(r, n);
  for (int i = 0; i < r; ++i) {
    const real wc = wf.w[ch[i]] * ray.scale;
    out.weights.push_back(wc);
    for (int j = 0; j < n; ++j) {
      if (wf.block[j] < wf.block[ch[i]]) continue;
      const real wj = wf.w[j] * ray.scale;
      const real e = std::exp((wj - wc) * t);
      cx sv = j == ch[i] ? cx(1) : sig(i, j);
      cx dv = j == ch[i] ? cx(0) : dsig(i, j);
      for (int b = 0; b < r; ++b)
        if (b != i && j == ch[b]) sv = 0, dv = 0;
      a(i, j) = sv * e;
      ad(i, j) = dv * e;
      aw(i, j) = sv * e * wj;
    }
  }
  out.jet = fs_jet_rows(a * ray.y, ad * ray.y, ray.basis.level(), p);
  Mat tt = aw * ray.y;
  out.v = -(tt * out.jet.shat.adjoint() + out.jet.shat * tt.adjoint()) * out.jet.kinv;
  return out;
}

inline real graded_first_derivative(const OnePSRay& ray, real t, const QuadratureRule& rule) {
  const real mu = slope(ray.basis.bundle()).value();
  const int r = ray.basis.rank();
  try {
    return integrate([&](const SpherePoint& p) -> real {
      GradedJet g = graded_jet(ray, t, p);
      return trace_re(g.v * (g.jet.lambda_f - identity(r) * mu));
    }, rule);
  } catch (const evaluation_error& e) {
    throw evaluation_error(std::string(e.what()) + " (ray parameter t=" + std::to_string(static_cast<double>(t)) + ")");
  }
}

// Roots (in z, chart Z) and the point at infinity where some level of the filtration
// fails to be saturated.
inline std::vector<SpherePoint> singular_points(const BundleSpec& spec, const WeightSpec& z) {
  SectionBasis b(spec, z.k);
  std::vector<SpherePoint> out;
  std::vector<std::vector<GQ>> gens;
  for (const auto& blk : z.blocks) {
    gens.insert(gens.end(), blk.vectors.begin(), blk.vectors.end());
    auto [g, at_infinity] = unsaturated_locus(generated_subsheaf(b, gens));
    if (g.is_zero()) continue;
    const int d = g.degree();
    if (at_infinity > 0) out.push_back(SpherePoint::at_infinity());
    if (d <= 0) continue;
    Mat comp = Mat::Zero(d, d);
    Poly m = g.monic();
    for (int i = 0; i < d; ++i) comp(0, i) = -to_cx(m[d - 1 - i]);
    for (int i = 1; i < d; ++i) comp(i, i - 1) = 1;
    Eigen::ComplexEigenSolver<Mat> es(comp);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(SpherePoint::from_z(es.eigenvalues()(i)));
  }
  return out;
}

inline real chordal_distance(const SpherePoint& a, const SpherePoint& b) {
  auto x = sphere_xyz(a), y = sphere_xyz(b);
  return std::sqrt((x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]) + (x[2] - y[2]) * (x[2] - y[2]));
}

struct SlopeReport {
  std::vector<real> t_grid;
  std::vector<real> mdon_values;
  real fitted_slope = 0;
  real intercept = 0;
  mpq_class mna_exact;   // M^NA of the rescaled generator
  real relative_gap = 0;
  real c_offset = 0;     // max over the grid of M^NA t - M^Don
  bool saturated = true; // every level saturated everywhere (no bubbling points)
};

// Rounded eigenvalues of the ray generator against the weights of z.
inline void check_ray_weights(const OnePSRay& ray, const WeightSpec& z) {
  RVec ev = herm_eig(ray.zeta).values;
  std::vector<real> expect;
  for (const auto& b : z.blocks)
    for (std::size_t i = 0; i < b.vectors.size(); ++i) expect.push_back(to_real(b.w) * ray.scale);
  std::sort(expect.begin(), expect.end());
  if (static_cast<Eigen::Index>(expect.size()) != ev.size()) throw argument_error("weight spec dimension does not match the ray");
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    auto r = round_rational(ev(i) / ray.scale);
    if (std::abs(to_real(r.value) * ray.scale - expect[i]) > real(1e-6))
      throw argument_error("ray generator eigenvalues do not match the rational weights");
  }
}

// M^Don along the ray on a uniform grid, cumulative over consecutive intervals.
inline std::vector<real> mdon_along_ray(const OnePSRay& ray, const std::vector<real>& grid, const QuadratureRule& rule) {
  FormPath p = ray.path();
  std::vector<real> out(grid.size(), 0);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    real inc = ray.frame ? integrate_in_t([&](real t) { return graded_first_derivative(ray, t, rule); }, grid[i - 1], grid[i], 8).value
                         : donaldson_along(p, grid[i - 1], grid[i], rule, 8).value;
    out[i] = out[i - 1] + inc;
  }
  return out;
}

inline std::pair<real, real> least_squares_line(const std::vector<real>& x, const std::vector<real>& y) {
  const real n = real(x.size());
  real sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  real den = n * sxx - sx * sx;
  if (den == 0) throw numeric_error("degenerate least squares fit");
  real slope = (n * sxy - sx * sy) / den;
  return {slope, (sy - slope * sx) / n};
}

inline SlopeReport slope_estimate(const OnePSRay& ray, const WeightSpec& z, real t_max, int n_t, const QuadratureRule& rule) {
  if (t_max < 10) throw argument_error("t_max must be at least 10");
  if (n_t < 4) throw argument_error("need at least 4 grid points");
  check_ray_weights(ray, z);
  SlopeReport out;
  mpq_class s = ray.exact_scale ? *ray.exact_scale : round_rational(ray.scale, 1L << 20).value;
  out.mna_exact = mna(ray.basis.bundle(), z) * s;
  out.mna_exact.canonicalize();
  out.saturated = singular_points(ray.basis.bundle(), z).empty();
  for (int i = 0; i < n_t; ++i) out.t_grid.push_back(t_max * real(i) / real(n_t - 1));
  out.mdon_values = mdon_along_ray(ray, out.t_grid, rule);
  std::vector<real> tx, ty;
  for (std::size_t i = 0; i < out.t_grid.size(); ++i)
    if (out.t_grid[i] >= t_max / 2) {
      tx.push_back(out.t_grid[i]);
      ty.push_back(out.mdon_values[i]);
    }
  std::tie(out.fitted_slope, out.intercept) = least_squares_line(tx, ty);
  const real m = to_real(out.mna_exact);
  out.relative_gap = std::abs(out.fitted_slope - m) / std::max<real>(1, std::abs(m));
  out.c_offset = -std::numeric_limits<real>::infinity();
  for (std::size_t i = 0; i < out.t_grid.size(); ++i) out.c_offset = std::max(out.c_offset, m * out.t_grid[i] - out.mdon_values[i]);
  return out;
}

struct RenormalizedLimit {
  std::vector<real> t_list;
  std::vector<std::vector<Mat>> values;  // [t][point], in the adapted frame
  std::vector<real> cauchy_defects;      // successive relative differences
  std::vector<bool> pd_flags;            // at the last t, per point
  real offdiag = 0;                      // at the last t, between different weights, relative
};

// e^{wt} F^* h_{sigma_t} F e^{wt} in the adapted frame F(p).
inline RenormalizedLimit renormalized_limit(const OnePSRay& ray, const WeightSpec& z, const std::vector<real>& t_list,
                                            const std::vector<SpherePoint>& points) {
  check_ray_weights(ray, z);
  for (const auto& sp : singular_points(ray.basis.bundle(), z))
    for (const auto& p : points)
      if (chordal_distance(sp, p) < real(1e-2))
        throw argument_error("test point " + p.describe() + " lies within 1e-2 of the singular locus at " + sp.describe());
  if (!ray.frame) throw argument_error("the renormalized limit needs a block-rational generator");
  const int r = ray.basis.rank();
  std::vector<std::vector<real>> fw(points.size());
  RenormalizedLimit out;
  out.t_list = t_list;
  for (real t : t_list) {
    std::vector<Mat> vals;
    for (std::size_t i = 0; i < points.size(); ++i) {
      GradedJet g = graded_jet(ray, t, points[i]);
      fw[i] = g.weights;
      vals.push_back(hermitian_part(g.jet.h));
    }
    out.values.push_back(vals);
  }
  for (std::size_t k = 1; k < out.values.size(); ++k) {
    real dmax = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Mat& a = out.values[k][i];
      const Mat& b = out.values[k - 1][i];
      dmax = std::max(dmax, (a - b).norm() / std::max<real>(real(1e-300), a.norm()));
    }
    out.cauchy_defects.push_back(dmax);
  }
  if (!out.values.empty()) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Mat& a = out.values.back()[i];
      Eigen::LLT<Mat> llt(a);
      bool pd = llt.info() == Eigen::Success && all_finite(a);
      if (pd) pd = herm_eig(a).values(0) > 0;
      out.pd_flags.push_back(pd);
      for (int x = 0; x < r; ++x)
        for (int y = 0; y < r; ++y)
          if (fw[i][x] != fw[i][y])
            out.offdiag = std::max(out.offdiag, std::abs(a(x, y)) / std::sqrt(std::abs(a(x, x).real() * a(y, y).real())));
    }
  }
  return out;
}

struct CoercivityRow {
  int k = 0;
  int samples = 0;
  real c_k = 0;           // max over samples and grid of M^NA t - M^Don
  real min_mna = 0;
  int rejected = 0;       // draws with an unsaturated level
  int unresolved = 0;     // saturated draws whose ray the quadrature does not resolve
  std::vector<real> per_sample;
};

// Sampled c_k for the standard reference at each level.  Generators whose filtration
// fails to be saturated somewhere are redrawn: there the curvature bubbles below any
// fixed quadrature scale.  So are draws where dM/dt at t_max moves by more than 1e-3
// when the rule is refined twofold, which happens near the unsaturated ones.
inline std::vector<CoercivityRow> coercivity_probe(const BundleSpec& spec, const std::vector<int>& k_list, int samples_per_k,
                                                   real t_max, int n_t, const QuadratureRule& rule, std::uint64_t seed) {
  std::vector<CoercivityRow> out;
  std::mt19937_64 rng(seed);
  for (int k : k_list) {
    SectionBasis b(spec, k);
    PositiveForm g0 = standard_form(b);
    CoercivityRow row;
    row.k = k;
    row.min_mna = std::numeric_limits<real>::infinity();
    std::vector<real> grid;
    for (int i = 0; i < n_t; ++i) grid.push_back(t_max * real(i) / real(n_t - 1));
    const QuadratureRule fine = build_quadrature(2 * rule.n_colat, 2 * rule.n_angle);
    for (int s = 0; s < samples_per_k; ++s) {
      WeightSpec z;
      std::optional<OnePSRay> drawn;
      for (int draw = 0;; ++draw) {
        if (draw >= 1000) throw numeric_error("no resolvable saturated generator found in 1000 draws");
        z = random_weight_spec(spec, k, rng, b.size());
        if (!singular_points(spec, z).empty()) {
          ++row.rejected;
          continue;
        }
        OnePSRay candidate = ray_from_weights(b, g0, z);
        const real coarse = graded_first_derivative(candidate, t_max, rule);
        if (std::abs(graded_first_derivative(candidate, t_max, fine) - coarse) > real(1e-3) * std::max<real>(1, std::abs(coarse))) {
          ++row.unresolved;
          continue;
        }
        drawn = candidate;
        break;
      }
      const OnePSRay& ray = *drawn;
      real m = to_real(mna(spec, z) * *ray.exact_scale);
      std::vector<real> md = mdon_along_ray(ray, grid, rule);
      real c = 0;
      for (std::size_t i = 0; i < grid.size(); ++i) c = std::max(c, m * grid[i] - md[i]);
      row.per_sample.push_back(c);
      row.c_k = std::max(row.c_k, c);
      row.min_mna = std::min(row.min_mna, m);
      ++row.samples;
    }
    out.push_back(row);
  }
  return out;
}

struct JnaPerturbation {
  WeightSpec xi;
  mpq_class jna_before, jna_after;
  mpq_class op_change;  // |xi - zeta|_op in the common eigenbasis
};

// Raise one top-block vector by 2 eps.  The trace is restored inside the top block when
// its remaining vectors stay above the next weight, otherwise by lowering the last
// vector of the bottom block by 2 eps.
inline JnaPerturbation perturb_zeta_for_jna(const BundleSpec& spec, const WeightSpec& z, const mpq_class& eps) {
  if (!(eps > 0 && eps < mpq_class(1, 4))) throw argument_error("eps_J must lie in (0, 1/4)");
  validate(spec, z);
  if (z.dimension() < 2) throw argument_error("N = 1 leaves no room to split the generator");
  if (spec.rank() < 2) throw argument_error("J^NA vanishes identically on a line bundle");
  JnaPerturbation out;
  out.jna_before = jna(spec, z);
  if (out.jna_before >= eps) {
    out.xi = z;
    out.jna_after = out.jna_before;
    out.op_change = 0;
    return out;
  }
  const mpq_class d = 2 * eps;
  const std::size_t nb = z.blocks.size();
  const WeightBlock& top = z.blocks.front();
  const long m = static_cast<long>(top.vectors.size());
  WeightSpec x;
  x.k = z.k;
  mpq_class rest_w = m > 1 ? mpq_class(top.w - d / mpq_class(m - 1)) : mpq_class(0);
  rest_w.canonicalize();
  if (m > 1 && (nb == 1 || rest_w > z.blocks[1].w)) {
    x.blocks.push_back({top.w + d, {top.vectors.front()}});
    x.blocks.push_back({rest_w, std::vector<std::vector<GQ>>(top.vectors.begin() + 1, top.vectors.end())});
    for (std::size_t i = 1; i < nb; ++i) x.blocks.push_back(z.blocks[i]);
  } else {
    for (std::size_t i = 0; i < nb; ++i) {
      WeightBlock blk = z.blocks[i];
      if (i == 0) {
        x.blocks.push_back({blk.w + d, {blk.vectors.front()}});
        blk.vectors.erase(blk.vectors.begin());
      }
      std::vector<GQ> low;
      bool lower = i + 1 == nb && !blk.vectors.empty();
      if (lower) {
        low = blk.vectors.back();
        blk.vectors.pop_back();
      }
      if (!blk.vectors.empty()) x.blocks.push_back(blk);
      if (lower) x.blocks.push_back({z.blocks[i].w - d, {low}});
    }
  }
  out.xi = x;
  out.jna_after = jna(spec, x);
  out.op_change = d;
  return out;
}

// M^Don(xi ray) - M^Don(zeta ray) at parameter t, both rays with the scaling of zeta.
inline real perturbation_mdon_shift(const SectionBasis& b, const PositiveForm& g0, const WeightSpec& z, const WeightSpec& xi,
                                    real t, const QuadratureRule& rule) {
  OnePSRay a = ray_from_weights(b, g0, z);
  Mat zx = weight_frame(xi).zeta * a.scale;
  return donaldson_along(one_parameter_path(b, g0, zx), 0, t, rule).value - donaldson_along(a.path(), 0, t, rule).value;
}

}  // namespace hemet

#pragma once

#include "hemet/asymptotics.hpp"

#include <deque>

namespace hemet {

struct SolveOptions {
  int k = 2;
  int max_iter = 400;
  real grad_tol = real(1e-12);
  real he_tol = real(1e-6);
  real armijo = real(1e-4);
  real step0 = 1;
  real shrink = real(0.5);
  int max_backtracks = 40;
  real max_log_step = 4;  // cap on |step * direction|_op
  int memory = 8;  // L-BFGS pairs; 0 gives plain natural-gradient descent
  real divergence_norm = 40;
  real divergence_mdon = -1000;
  int n_colat = 32;
  int n_angle = 32;
};

enum class SolveStatus { converged, diverging, maxiter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::diverging: return "diverging";
    default: return "maxiter";
  }
}

struct SolveTrace {
  int iter = 0;
  real mdon = 0;
  real he_residual = 0;
  real zeta_norm = 0;
  real grad_norm = 0;
  real step = 0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::maxiter;
  PositiveForm form = PositiveForm::from_factor(Mat());
  FsPtr metric;
  real he_residual_sup = 0;
  std::vector<SolveTrace> history;
  Mat zeta_limit;  // trace-free part of log G_0 - log G, over its op norm, when diverging
  std::string note;
};

// X = int S^* K^{-1} R S omega with R = Lambda F - mu Id; the pieces of both gradients.
inline Mat gradient_kernel(const SectionBasis& basis, const Mat& b, const QuadratureRule& rule, bool hat) {
  const real mu = slope(basis.bundle()).value();
  const int r = basis.rank();
  Mat x = integrate([&](const SpherePoint& p) -> Mat {
    FsJet j = fs_jet(basis, b, p);
    Mat s = hat ? j.shat : basis.eval(p);
    return Mat(s.adjoint() * (j.kinv * (j.lambda_f - identity(r) * mu)) * s);
  }, rule);
  return hermitian_part(x);
}

// g with tr(g dz) = d/ds M(FS(e^{s dz} G e^{s dz})).
inline Mat mdon_gradient(const SectionBasis& basis, const PositiveForm& g, const QuadratureRule& rule, bool project_trace = false) {
  Mat x = gradient_kernel(basis, g.factor(), rule, false);
  Mat gi = g.inverse();
  Mat out = hermitian_part(gi * x + x * gi);
  if (project_trace) out -= identity(out.rows()) * (out.trace() / real(out.rows()));
  return out;
}

// int S^^* K^{-1} R S^ omega: the gradient in the frame of B, where B <- B e^{a g/2}
// changes M at rate -tr(g^2).
inline Mat natural_gradient(const SectionBasis& basis, const Mat& b, const QuadratureRule& rule) {
  return gradient_kernel(basis, b, rule, true);
}

inline real inner(const Mat& a, const Mat& b) { return (a.adjoint() * b).trace().real(); }

// Two-loop recursion on the descent direction, with pairs (step, change in g) in the frame of B.
inline Mat lbfgs_direction(const Mat& g, const std::deque<std::pair<Mat, Mat>>& pairs) {
  Mat q = g;
  std::vector<real> alpha(pairs.size());
  for (std::size_t i = pairs.size(); i-- > 0;) {
    const auto& [sv, yv] = pairs[i];
    alpha[i] = inner(sv, q) / inner(yv, sv);
    q -= alpha[i] * yv;
  }
  if (!pairs.empty()) q *= inner(pairs.back().first, pairs.back().second) / pairs.back().second.squaredNorm();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [sv, yv] = pairs[i];
    q += (alpha[i] - inner(yv, q) / inner(yv, sv)) * sv;
  }
  return hermitian_part(q);
}

// Path B e^{s g / 2}, s in [0, a].
inline FormPath descent_path(const SectionBasis& basis, const Mat& b, const Mat& g) {
  return {basis,
          [b, g](real s) {
            Mat bs = b * herm_exp(g * (s / 2));
            return FormFrame{bs, bs * (-g / real(2))};
          },
          "descent"};
}

inline real log_norm(const Mat& b) {
  RVec ev = herm_eig(hermitian_part(b * b.adjoint())).values;
  return std::max(std::abs(std::log(ev(0))), std::abs(std::log(ev(ev.size() - 1))));
}

// inf over the nodes of the least eigenvalue of h h_ref^{-1}.
inline real least_relative_eigenvalue(const Metric& h, const Metric& ref, const QuadratureRule& rule) {
  real c = std::numeric_limits<real>::infinity();
  for (const auto& p : rule.nodes) c = std::min(c, relative_eigenvalues(h.checked(p), ref.checked(p))(0));
  return c;
}

inline SolveResult minimize(const BundleSpec& spec, const SolveOptions& opt, const MetricPtr& h_ref,
                            std::optional<PositiveForm> initial = std::nullopt) {
  if (opt.he_tol <= 0 || opt.grad_tol <= 0) throw argument_error("tolerances must be positive");
  if (opt.max_iter < 1) throw argument_error("max_iter must be positive");
  SectionBasis basis(spec, opt.k);
  const QuadratureRule rule = build_quadrature(opt.n_colat, opt.n_angle);
  PositiveForm g0 = initial ? *initial : l2_gram(basis, *h_ref, rule);
  if (g0.size() != basis.size()) throw argument_error("initial form has the wrong size");
  Mat b = g0.factor();
  auto normalize = [&](Mat& bb) {
    FsMetric h(basis, PositiveForm::from_factor(bb));
    bb *= std::sqrt(least_relative_eigenvalue(h, *h_ref, rule));
  };
  normalize(b);
  const Mat log_start = herm_log(hermitian_part(b * b.adjoint()));
  SolveResult res;
  real m = donaldson(fs_metric(basis, PositiveForm::from_factor(b)), h_ref, PathSpec{},
                     build_quadrature(2 * opt.n_colat, 2 * opt.n_angle));
  std::deque<std::pair<Mat, Mat>> pairs;
  Mat g_prev, s_prev;
  for (int it = 0;; ++it) {
    FsMetric h(basis, PositiveForm::from_factor(b));
    SolveTrace tr;
    tr.iter = it;
    tr.mdon = m;
    tr.he_residual = he_residual(h, rule).sup;
    tr.zeta_norm = log_norm(b);
    Mat g = natural_gradient(basis, b, rule);
    const real g2 = g.squaredNorm();
    tr.grad_norm = std::sqrt(g2);
    res.history.push_back(tr);
    if (tr.he_residual <= opt.he_tol) {
      res.status = SolveStatus::converged;
      break;
    }
    if (tr.zeta_norm > opt.divergence_norm && m < opt.divergence_mdon) {
      res.status = SolveStatus::diverging;
      Mat l = herm_log(hermitian_part(b * b.adjoint())) - log_start;
      l -= identity(l.rows()) * (l.trace().real() / real(l.rows()));
      res.zeta_limit = l / op_norm_herm(l);
      break;
    }
    if (it >= opt.max_iter) {
      res.status = SolveStatus::maxiter;
      break;
    }
    if (tr.grad_norm < opt.grad_tol) {
      res.status = SolveStatus::maxiter;
      res.note = "gradient below tolerance before the HE residual target";
      break;
    }
    if (it > 0 && opt.memory > 0) {
      Mat yv = g_prev - g;
      if (inner(s_prev, yv) > real(1e-8) * s_prev.norm() * std::max(yv.norm(), g.norm())) {
        pairs.emplace_back(s_prev, yv);
        if (static_cast<int>(pairs.size()) > opt.memory) pairs.pop_front();
      }
    }
    Mat dir = lbfgs_direction(g, pairs);
    real slope_dir = inner(g, dir);  // M decreases at this rate along B e^{s dir/2}
    if (!(slope_dir > real(1e-3) * std::sqrt(g2) * dir.norm())) {
      pairs.clear();
      dir = g;
      slope_dir = g2;
    }
    // Armijo backtracking on the exact path increment
    const real dir_norm = op_norm_herm(dir);
    const real first = std::min(opt.step0, opt.max_log_step / dir_norm);
    real step = first;
    FormPath path = descent_path(basis, b, dir);
    bool accepted = false;
    real dm = 0;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      try {
        dm = donaldson_along(path, 0, step, rule, 8).value;
      } catch (const evaluation_error& ex) {
            step *= opt.shrink;
        continue;
      }
      if (dm <= -opt.armijo * step * slope_dir) {
        accepted = true;
        break;
      }
      step *= opt.shrink;
    }
    // extrapolate while the first trial passes: along an unstable direction M is
    // asymptotically linear and unit steps make no headway
    if (accepted && step == first) {
      for (int ex = 0; ex < opt.max_backtracks && 2 * step * dir_norm <= opt.max_log_step; ++ex) {
        real dm2;
        try {
          dm2 = donaldson_along(path, 0, 2 * step, rule, 8).value;
          least_relative_eigenvalue(*fs_metric(basis, PositiveForm::from_factor(b * herm_exp(dir * step))), *h_ref, rule);
        } catch (const evaluation_error&) {
          break;
        }
        if (!(dm2 < dm && dm2 <= -opt.armijo * 2 * step * slope_dir)) break;
        dm = dm2;
        step *= 2;
      }
    }
    if (!accepted) {
      if (g2 < real(1e-20)) {
        res.status = SolveStatus::maxiter;
        res.note = "line search stalled at a numerically flat point";
        break;
      }
      throw numeric_error("line search failed at iteration " + std::to_string(it) + " with gradient norm " +
                          std::to_string(static_cast<double>(tr.grad_norm)) + " and M=" + std::to_string(static_cast<double>(m)));
    }
    res.history.back().step = step;
    g_prev = g;
    s_prev = dir * step;
    b = b * herm_exp(dir * (step / 2));
    normalize(b);
    m += dm;
  }
  res.form = PositiveForm::from_factor(b);
  res.metric = fs_metric(basis, res.form);
  res.he_residual_sup = res.history.back().he_residual;
  return res;
}

struct Destabilizer {
  WeightSpec weights;
  FiltrationReport filtration;
  std::vector<real> raw_weights;  // cluster means of the normalized generator
  real rounding_error = 0;
  int top_rank = 0;
  long top_degree = 0;
  mpq_class top_slope;
};

// Exact Gaussian-rational vectors for a numerically given subspace (columns of v).
inline std::vector<std::vector<GQ>> rational_basis(const Mat& v, real tol, real* err) {
  Mat a = v.transpose();  // rows span the subspace
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  int row = 0;
  for (int c = 0; c < n && row < m; ++c) {
    Eigen::Index piv = row;
    real best = 0;
    for (int i = row; i < m; ++i)
      if (std::abs(a(i, c)) > best) best = std::abs(a(i, c)), piv = i;
    if (best < real(1e-6)) continue;
    a.row(row).swap(a.row(piv));
    a.row(row) /= a(row, c);
    for (int i = 0; i < m; ++i)
      if (i != row) a.row(i) -= a(i, c) * a.row(row);
    ++row;
  }
  std::vector<std::vector<GQ>> out;
  for (int i = 0; i < row; ++i) {
    std::vector<GQ> vec(n);
    for (int j = 0; j < n; ++j) {
      auto re = round_rational(a(i, j).real(), 64, tol), im = round_rational(a(i, j).imag(), 64, tol);
      *err = std::max(*err, std::max(re.error, im.error));
      vec[j] = GQ(re.value, im.value);
    }
    out.push_back(vec);
  }
  return out;
}

inline Destabilizer destabilizer_extract(const SolveResult& res, const BundleSpec& spec, int k, real tol = real(1e-4)) {
  if (res.status != SolveStatus::diverging) throw argument_error("destabilizer extraction needs a diverging run");
  const Mat& z = res.zeta_limit;
  HermEig e = herm_eig(z);
  const int n = static_cast<int>(e.values.size());
  // clusters by gaps, in decreasing order
  std::vector<std::vector<int>> clusters;
  const real spread = e.values(n - 1) - e.values(0);
  if (!(spread > 0)) throw numeric_error("divergent direction is scalar; run the solver longer");
  for (int i = n - 1; i >= 0; --i) {
    if (clusters.empty() || e.values(clusters.back().back()) - e.values(i) > real(0.05) * spread) clusters.push_back({});
    clusters.back().push_back(i);
  }
  Destabilizer d;
  d.weights.k = k;
  for (const auto& c : clusters) {
    real mean = 0;
    Mat v(n, c.size());
    for (std::size_t j = 0; j < c.size(); ++j) {
      mean += e.values(c[j]);
      v.col(j) = e.vectors.col(c[j]);
    }
    mean /= real(c.size());
    d.raw_weights.push_back(mean);
    auto q = round_rational(mean, 64, tol);
    d.rounding_error = std::max(d.rounding_error, q.error);
    WeightBlock blk{q.value, rational_basis(v, tol, &d.rounding_error)};
    if (!d.weights.blocks.empty() && !(q.value < d.weights.blocks.back().w))
      throw numeric_error("weights collapsed after rounding; run the solver longer");
    d.weights.blocks.push_back(blk);
  }
  if (d.rounding_error > tol)
    throw numeric_error("weights or eigenvectors are not within " + std::to_string(static_cast<double>(tol)) +
                        " of rationals with denominator <= 64; run the solver longer");
  try {
    d.filtration = filtration(spec, d.weights);
  } catch (const argument_error& ex) {
    throw numeric_error(std::string("rounded eigenvectors do not form a valid filtration: ") + ex.what());
  }
  if (sgn(d.filtration.jna) == 0) throw numeric_error("rounded filtration is trivial (J^NA = 0); run the solver longer");
  const auto& top = d.filtration.levels.front();
  d.top_rank = top.rank;
  d.top_degree = top.degree;
  d.top_slope = top.slope;
  return d;
}

}  // namespace hemet

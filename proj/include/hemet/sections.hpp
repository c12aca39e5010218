#pragma once

#include "hemet/bundle.hpp"

namespace hemet {

struct SectionEntry {
  int summand;
  int exponent;
};

// Monomial basis of H^0(E(k)): summands in declaration order, exponents ascending.
class SectionBasis {
 public:
  SectionBasis(BundleSpec spec, int k) : spec_(std::move(spec)), k_(k) {
    int reg = regularity(spec_);
    if (k_ < reg)
      throw argument_error("level k=" + std::to_string(k_) + " is below the regularity of " + spec_.str() +
                           "; the minimum admissible k is " + std::to_string(reg));
    for (int i = 0; i < spec_.rank(); ++i) {
      offsets_.push_back(static_cast<int>(entries_.size()));
      for (int j = 0; j <= spec_.degrees[i] + k_; ++j) entries_.push_back({i, j});
    }
  }

  const BundleSpec& bundle() const { return spec_; }
  int level() const { return k_; }
  int size() const { return static_cast<int>(entries_.size()); }
  int rank() const { return spec_.rank(); }
  const std::vector<SectionEntry>& entries() const { return entries_; }
  int offset(int summand) const { return offsets_[summand]; }
  int twisted_degree(int summand) const { return spec_.degrees[summand] + k_; }

  // r x N matrix of section values in the point's chart frame.
  Mat eval(const SpherePoint& p) const {
    Mat s = Mat::Zero(rank(), size());
    for (int c = 0; c < size(); ++c) {
      const auto& e = entries_[c];
      int ex = p.chart == Chart::Z ? e.exponent : twisted_degree(e.summand) - e.exponent;
      s(e.summand, c) = ipow(p.coord, ex);
    }
    return s;
  }

  // d/dc of eval.
  Mat eval_dz(const SpherePoint& p) const {
    Mat s = Mat::Zero(rank(), size());
    for (int c = 0; c < size(); ++c) {
      const auto& e = entries_[c];
      int ex = p.chart == Chart::Z ? e.exponent : twisted_degree(e.summand) - e.exponent;
      if (ex > 0) s(e.summand, c) = real(ex) * ipow(p.coord, ex - 1);
    }
    return s;
  }

 private:
  static cx ipow(cx z, int n) {
    cx r(1);
    for (int i = 0; i < n; ++i) r *= z;
    return r;
  }
  BundleSpec spec_;
  int k_;
  std::vector<SectionEntry> entries_;
  std::vector<int> offsets_;
};

inline SectionBasis basis(const BundleSpec& spec, int k) { return SectionBasis(spec, k); }

// Positive hermitian form G on H^0(E(k)), held through a factor B with B B^* = G^{-1}.
class PositiveForm {
 public:
  static PositiveForm from_matrix(const Mat& g) {
    if (g.rows() != g.cols()) throw argument_error("form must be square");
    if (hermitian_defect(g) > real(1e-12) * std::max<real>(1, g.cwiseAbs().maxCoeff()))
      throw argument_error("form is not hermitian");
    RVec ev = herm_eig(g).values;
    if (!(ev(0) > real(1e-14) * std::abs(ev(ev.size() - 1))))
      throw numeric_error("form is not positive definite (Cholesky threshold 1e-14 |G|); refine the quadrature");
    return PositiveForm(herm_pow(hermitian_part(g), real(-0.5)));
  }
  static PositiveForm from_factor(Mat b) { return PositiveForm(std::move(b)); }
  // exp(log-coordinates)
  static PositiveForm from_log(const Mat& zeta) { return PositiveForm(herm_exp(zeta * real(-0.5))); }

  const Mat& factor() const { return b_; }
  Mat inverse() const { return b_ * b_.adjoint(); }
  Mat matrix() const { return pd_inverse(hermitian_part(inverse())); }
  int size() const { return static_cast<int>(b_.rows()); }

  // sigma^* G sigma with sigma = exp(zeta)
  PositiveForm conjugated(const Mat& zeta) const { return PositiveForm(herm_exp(-zeta) * b_); }
  PositiveForm scaled(real c) const { return PositiveForm(b_ / std::sqrt(c)); }

 private:
  explicit PositiveForm(Mat b) : b_(std::move(b)) {}
  Mat b_;
};

// Pointwise data of an FS metric.
struct FsJet {
  Mat shat, shat_dz;  // S B, S' B
  Mat k, kinv;        // K = S G^{-1} S^*
  Mat h;              // e^{k phi} K^{-1}
  Mat theta;          // h^{-1} dh/dc
  Mat lambda_f;       // Lambda_omega F_h
};

// Jet of h = e^{k phi} (S^ S^^*)^{-1} for holomorphic rows S^ with derivative S^'.
inline FsJet fs_jet_rows(Mat shat, Mat shat_dz, int k, const SpherePoint& p) {
  FsJet j;
  j.shat = std::move(shat);
  j.shat_dz = std::move(shat_dz);
  const Eigen::Index r = j.shat.rows();
  j.k = hermitian_part(j.shat * j.shat.adjoint());
  try {
    j.kinv = pd_inverse(j.k);
  } catch (const evaluation_error&) {
    throw evaluation_error("S G^{-1} S^* is singular at " + p.describe());
  }
  j.h = j.kinv * std::exp(k * potential(p));
  Mat c = j.shat_dz * j.shat.adjoint();
  Mat bc = j.shat_dz * j.shat_dz.adjoint() - c * j.kinv * c.adjoint();
  j.lambda_f = contract(bc, p) * j.kinv - identity(r) * real(k);
  j.theta = identity(r) * (real(k) * potential_dz(p)) - c * j.kinv;
  return j;
}

inline FsJet fs_jet(const SectionBasis& basis, const Mat& b, const SpherePoint& p) {
  return fs_jet_rows(basis.eval(p) * b, basis.eval_dz(p) * b, basis.level(), p);
}

// FS(G): h = e^{k phi} (S G^{-1} S^*)^{-1}, with closed-form curvature.
class FsMetric final : public Metric {
 public:
  FsMetric(SectionBasis basis, PositiveForm form) : Metric(basis.bundle()), basis_(std::move(basis)), form_(std::move(form)) {
    if (form_.size() != basis_.size()) throw argument_error("form size does not match dim H^0(E(k))");
  }
  MetricKind kind() const override { return MetricKind::fs; }
  Mat value(const SpherePoint& p) const override { return hermitian_part(jet(p).h); }
  Mat connection(const SpherePoint& p) const override { return jet(p).theta; }
  Mat lambda_curvature(const SpherePoint& p) const override { return jet(p).lambda_f; }
  FsJet jet(const SpherePoint& p) const { return fs_jet(basis_, form_.factor(), p); }
  const SectionBasis& basis() const { return basis_; }
  const PositiveForm& form() const { return form_; }

 private:
  SectionBasis basis_;
  PositiveForm form_;
};

using FsPtr = std::shared_ptr<const FsMetric>;

inline FsPtr fs_metric(const SectionBasis& basis, const PositiveForm& g) { return std::make_shared<FsMetric>(basis, g); }

// Balanced form whose FS metric is exactly (1+|z|^2)^{-a_i} on each summand.
inline PositiveForm standard_form(const SectionBasis& b) {
  Mat f = Mat::Zero(b.size(), b.size());
  for (int c = 0; c < b.size(); ++c) {
    const auto& e = b.entries()[c];
    int d = b.twisted_degree(e.summand);
    real binom = std::exp(std::lgamma(real(d + 1)) - std::lgamma(real(e.exponent + 1)) - std::lgamma(real(d - e.exponent + 1)));
    f(c, c) = std::sqrt(std::round(binom));
  }
  return PositiveForm::from_factor(f);
}

inline FsPtr standard_metric(const BundleSpec& spec, int k = -1) {
  SectionBasis b(spec, k < 0 ? std::max(0, regularity(spec)) : k);
  return fs_metric(b, standard_form(b));
}

// G = int e^{-k phi} S^* h S omega.

inline Mat l2_gram_matrix(const SectionBasis& basis, const Metric& h, const QuadratureRule& rule) {
  if (h.bundle().degrees != basis.bundle().degrees) throw argument_error("metric and basis live on different bundles");
  const int kk = basis.level();
  Mat g = integrate([&](const SpherePoint& p) -> Mat {
    Mat s = basis.eval(p);
    return (s.adjoint() * h.checked(p) * s) * std::exp(-kk * potential(p));
  }, rule);
  return hermitian_part(g);
}

inline PositiveForm l2_gram(const SectionBasis& basis, const Metric& h, const QuadratureRule& rule) {
  return PositiveForm::from_matrix(l2_gram_matrix(basis, h, rule));
}

struct BergmanReport {
  real sup_dev = 0;    // sup |B~ - Id| over nodes (normalized kernel)
  real raw_min = 0;    // extreme eigenvalues of the raw kernel
  real raw_max = 0;
  real normalization = 1;  // r Vol / N_k
  EndomorphismField raw;
};

// Raw kernel B = FS(G)^{-1} h with G the L^2 form of h; normalized by r Vol / N_k.
inline BergmanReport bergman_kernel(MetricPtr h, int k, const QuadratureRule& rule) {
  SectionBasis b(h->bundle(), k);
  auto fs = fs_metric(b, l2_gram(b, *h, rule));
  BergmanReport out;
  out.normalization = real(b.rank()) / real(b.size());
  out.raw = [fs, h](const SpherePoint& p) -> Mat {
    FsJet j = fs->jet(p);
    return j.k * h->value(p) * std::exp(-fs->basis().level() * potential(p));
  };
  out.raw_min = std::numeric_limits<real>::infinity();
  out.raw_max = -out.raw_min;
  for (const auto& p : rule.nodes) {
    Mat hv = h->checked(p);
    RVec ev = selfadjoint_eigenvalues(out.raw(p), hv);
    out.raw_min = std::min(out.raw_min, ev(0));
    out.raw_max = std::max(out.raw_max, ev(ev.size() - 1));
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      out.sup_dev = std::max(out.sup_dev, std::abs(ev(i) * out.normalization - 1));
  }
  return out;
}

struct BoundAudit {
  real zeta_norm = 0;
  real worst_margin = 0;   // min over points and diagonal entries of the log-ratio margin
  real max_log_ratio = 0;
  real min_log_ratio = 0;
  bool pass = true;
};

// e^{-2|zeta|} (h)_aa <= (h_zeta)_aa <= e^{2|zeta|} (h)_aa with h_zeta = FS(e^zeta G0 e^zeta).
inline BoundAudit fs_pointwise_bound_audit(const SectionBasis& basis, const PositiveForm& g0, const Mat& zeta,
                                           const std::vector<SpherePoint>& points) {
  BoundAudit out;
  out.zeta_norm = op_norm_herm(zeta);
  FsMetric h(basis, g0), hz(basis, g0.conjugated(zeta));
  out.worst_margin = std::numeric_limits<real>::infinity();
  out.max_log_ratio = -std::numeric_limits<real>::infinity();
  out.min_log_ratio = std::numeric_limits<real>::infinity();
  const real bound = 2 * out.zeta_norm;
  for (const auto& p : points) {
    Mat a = h.value(p), c = hz.value(p);
    for (int i = 0; i < basis.rank(); ++i) {
      real lr = std::log(c(i, i).real() / a(i, i).real());
      out.max_log_ratio = std::max(out.max_log_ratio, lr);
      out.min_log_ratio = std::min(out.min_log_ratio, lr);
      out.worst_margin = std::min(out.worst_margin, std::min(bound - lr, lr + bound));
    }
  }
  out.pass = out.worst_margin >= -real(1e-12) * std::max<real>(1, bound);
  return out;
}

}  // namespace hemet

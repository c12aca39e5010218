#pragma once

#include "hemet/core.hpp"

#include <boost/math/special_functions/legendre.hpp>

#include <sstream>

namespace hemet {

// P^1 with polarization O(1).  omega = (i/2pi) d dbar log(1+|z|^2), total mass 1.

enum class Chart { Z, W };

struct SpherePoint {
  Chart chart = Chart::Z;
  cx coord{0, 0};

  // Canonical representative: |z| > 1 goes to chart W.
  static SpherePoint from_z(cx z) {
    if (std::abs(z) > 1) return {Chart::W, real(1) / z};
    return {Chart::Z, z};
  }
  static SpherePoint at_infinity() { return {Chart::W, cx(0)}; }

  // Same chart, shifted coordinate (finite difference stencils).
  SpherePoint shifted(cx d) const { return {chart, coord + d}; }

  cx z() const {
    if (chart == Chart::Z) return coord;
    if (coord == cx(0)) throw argument_error("the point at infinity has no z coordinate");
    return real(1) / coord;
  }

  std::string describe() const {
    std::ostringstream os;
    os << (chart == Chart::Z ? "z=" : "w=") << '(' << static_cast<double>(coord.real()) << ','
       << static_cast<double>(coord.imag()) << ')';
    return os.str();
  }
};

// Kahler potential in the point's own chart.
inline real potential(const SpherePoint& p) { return std::log1p(std::norm(p.coord)); }

// d phi / dc in the point's chart.
inline cx potential_dz(const SpherePoint& p) { return std::conj(p.coord) / (real(1) + std::norm(p.coord)); }

// Coefficient of omega in the point's chart: omega = (i/2pi) g dc ^ dcbar.
inline real omega_coefficient(const SpherePoint& p) {
  real s = real(1) + std::norm(p.coord);
  return real(1) / (s * s);
}

// Lambda_omega of (i/2pi) g dc ^ dcbar.
template <class T>
T contract(const T& form_coeff, const SpherePoint& p) {
  real s = real(1) + std::norm(p.coord);
  return form_coeff * (s * s);
}

// Gauss-Legendre nodes and weights on [a, b].
inline std::pair<std::vector<real>, std::vector<real>> gauss_legendre(int n, real a = 0, real b = 1) {
  if (n < 1) throw argument_error("Gauss-Legendre order must be positive");
  std::vector<real> xs, ws;
  if (n == 1) return {{(a + b) / 2}, {b - a}};
  std::vector<real> pos = boost::math::legendre_p_zeros<real>(n);
  for (real x : pos) {
    real dp = boost::math::legendre_p_prime<real>(n, x);
    real w = real(2) / ((real(1) - x * x) * dp * dp);
    xs.push_back(x);
    ws.push_back(w);
    if (x != real(0)) {
      xs.push_back(-x);
      ws.push_back(w);
    }
  }
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
  std::vector<real> nx, nw;
  for (std::size_t i : order) {
    nx.push_back(a + (b - a) * (xs[i] + 1) / 2);
    nw.push_back(ws[i] * (b - a) / 2);
  }
  return {nx, nw};
}

struct QuadratureRule {
  std::vector<SpherePoint> nodes;
  std::vector<real> weights;
  int n_colat = 0;
  int n_angle = 0;
  std::size_t size() const { return nodes.size(); }
};

// Gauss-Legendre in x = cos(colatitude) times the trapezoid rule in angle.
// Stereographic projection from the north pole: z = tan(theta/2) e^{i phi}.
inline QuadratureRule build_quadrature(int n_colat, int n_angle) {
  if (n_colat < 4 || n_angle < 4) throw argument_error("quadrature sizes must be at least 4");
  auto [xs, wx] = gauss_legendre(n_colat, -1, 1);
  QuadratureRule rule;
  rule.n_colat = n_colat;
  rule.n_angle = n_angle;
  for (std::size_t oi = 0; oi < xs.size(); ++oi) {
    real x = xs[oi];
    // tan(theta/2) = sqrt((1-x)/(1+x))
    real r = std::sqrt((real(1) - x) / (real(1) + x));
    for (int a = 0; a < n_angle; ++a) {
      real ang = 2 * pi * (a + real(0.5)) / n_angle;
      cx z = std::polar(r, ang);
      rule.nodes.push_back(SpherePoint::from_z(z));
      rule.weights.push_back(wx[oi] / 2 / n_angle);
    }
  }
  return rule;
}

namespace detail {
template <class T>
T pairwise_sum(const std::vector<T>& v, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return v[lo];
  std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}
}  // namespace detail

// Weighted sum over nodes with a fixed pairwise reduction tree.
template <class F>
auto integrate(F&& f, const QuadratureRule& rule) {
  using T = std::decay_t<decltype(f(rule.nodes[0]))>;
  std::vector<T> terms;
  terms.reserve(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    T v = f(rule.nodes[i]);
    if constexpr (std::is_same_v<T, real>) {
      if (!std::isfinite(v)) throw evaluation_error("non-finite integrand at node " + rule.nodes[i].describe());
    } else if constexpr (std::is_same_v<T, cx>) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw evaluation_error("non-finite integrand at node " + rule.nodes[i].describe());
    } else {
      if (!all_finite(v)) throw evaluation_error("non-finite integrand at node " + rule.nodes[i].describe());
    }
    terms.push_back(v * rule.weights[i]);
  }
  return detail::pairwise_sum(terms, 0, terms.size());
}

// Weighted sum of precomputed nodal values, same reduction tree as integrate.
template <class T>
T integrate_values(const std::vector<T>& values, const QuadratureRule& rule) {
  if (values.size() != rule.size()) throw argument_error("nodal value count does not match the rule");
  std::vector<T> terms(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) terms[i] = values[i] * rule.weights[i];
  return detail::pairwise_sum(terms, 0, terms.size());
}

// Unit-sphere coordinates of a point.
inline std::array<real, 3> sphere_xyz(const SpherePoint& p) {
  cx c = p.coord;
  real s = real(1) + std::norm(c);
  real x = 2 * c.real() / s, y = 2 * c.imag() / s, zz = (real(1) - std::norm(c)) / s;
  if (p.chart == Chart::W) return {x, -y, -zz};
  return {x, y, zz};
}

}  // namespace hemet

#pragma once

#include <gmpxx.h>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hemet::exact {

// Gaussian rational a + b i.
struct GQ {
  mpq_class re{0}, im{0};

  GQ() = default;
  GQ(mpq_class r, mpq_class i = 0) : re(std::move(r)), im(std::move(i)) {}
  GQ(long r) : re(r), im(0) {}

  bool is_zero() const { return sgn(re) == 0 && sgn(im) == 0; }
  GQ conj() const { return {re, -im}; }
  mpq_class norm() const { return re * re + im * im; }

  friend GQ operator+(const GQ& a, const GQ& b) { return {a.re + b.re, a.im + b.im}; }
  friend GQ operator-(const GQ& a, const GQ& b) { return {a.re - b.re, a.im - b.im}; }
  friend GQ operator-(const GQ& a) { return {-a.re, -a.im}; }
  friend GQ operator*(const GQ& a, const GQ& b) { return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re}; }
  friend GQ operator/(const GQ& a, const GQ& b) {
    mpq_class n = b.norm();
    if (sgn(n) == 0) throw std::domain_error("division by zero in Q(i)");
    GQ p = a * b.conj();
    return {mpq_class(p.re / n), mpq_class(p.im / n)};
  }
  GQ& operator+=(const GQ& b) { return *this = *this + b; }
  GQ& operator-=(const GQ& b) { return *this = *this - b; }
  GQ& operator*=(const GQ& b) { return *this = *this * b; }
  friend bool operator==(const GQ& a, const GQ& b) { return a.re == b.re && a.im == b.im; }
  friend bool operator!=(const GQ& a, const GQ& b) { return !(a == b); }
};

// "p/q" or integer text.
inline mpq_class parse_rational(const std::string& s) {
  mpq_class q;
  if (q.set_str(s, 10) != 0) throw std::invalid_argument("malformed rational '" + s + "'");
  q.canonicalize();
  return q;
}

inline std::string to_string(const mpq_class& q) {
  mpq_class c = q;
  c.canonicalize();
  return c.get_str();
}

// Univariate polynomial over Q(i), c[j] the coefficient of t^j, trimmed.
class Poly {
 public:
  Poly() = default;
  explicit Poly(std::vector<GQ> c) : c_(std::move(c)) { trim(); }
  static Poly constant(const GQ& a) { return Poly(std::vector<GQ>{a}); }

  bool is_zero() const { return c_.empty(); }
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  const std::vector<GQ>& coeffs() const { return c_; }
  const GQ& lead() const { return c_.back(); }
  GQ operator[](std::size_t j) const { return j < c_.size() ? c_[j] : GQ(); }

  GQ eval(const GQ& t) const {
    GQ r;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) r = r * t + *it;
    return r;
  }

  friend Poly operator+(const Poly& a, const Poly& b) {
    std::vector<GQ> c(std::max(a.c_.size(), b.c_.size()));
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = a[j] + b[j];
    return Poly(std::move(c));
  }
  friend Poly operator-(const Poly& a, const Poly& b) {
    std::vector<GQ> c(std::max(a.c_.size(), b.c_.size()));
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = a[j] - b[j];
    return Poly(std::move(c));
  }
  friend Poly operator*(const Poly& a, const Poly& b) {
    if (a.is_zero() || b.is_zero()) return Poly();
    std::vector<GQ> c(a.c_.size() + b.c_.size() - 1);
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      if (!a.c_[i].is_zero())
        for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    return Poly(std::move(c));
  }

  Poly monic() const {
    if (is_zero()) return *this;
    GQ l = lead();
    std::vector<GQ> c(c_.size());
    for (std::size_t j = 0; j < c.size(); ++j) c[j] = c_[j] / l;
    return Poly(std::move(c));
  }

  // remainder of a / b
  friend Poly operator%(const Poly& a, const Poly& b) {
    if (b.is_zero()) throw std::domain_error("polynomial division by zero");
    std::vector<GQ> r = a.c_;
    const int db = b.degree();
    const GQ lb = b.lead();
    for (int d = static_cast<int>(r.size()) - 1; d >= db; --d) {
      if (r[d].is_zero()) continue;
      GQ q = r[d] / lb;
      for (int j = 0; j <= db; ++j) r[d - db + j] -= q * b.c_[j];
    }
    r.resize(std::min<std::size_t>(r.size(), static_cast<std::size_t>(db)));
    return Poly(std::move(r));
  }

  friend bool operator==(const Poly& a, const Poly& b) { return a.c_ == b.c_; }

 private:
  void trim() {
    while (!c_.empty() && c_.back().is_zero()) c_.pop_back();
  }
  std::vector<GQ> c_;
};

// Monic gcd; gcd(0, 0) = 0.
inline Poly gcd(Poly a, Poly b) {
  while (!b.is_zero()) {
    Poly r = a % b;
    a = std::move(b);
    b = std::move(r);
  }
  return a.monic();
}

// Homogeneous binary form of a declared degree: coefficient j multiplies x0^{deg-j} x1^j.
struct Form {
  int degree = 0;
  Poly p;  // dehomogenized at x0 = 1

  bool is_zero() const { return p.is_zero(); }
  // multiplicity of the factor x0
  int x0_multiplicity() const { return degree - p.degree(); }

  friend Form operator*(const Form& a, const Form& b) { return {a.degree + b.degree, a.p * b.p}; }
  friend Form operator+(const Form& a, const Form& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.degree != b.degree) throw std::logic_error("adding binary forms of different degrees");
    return {a.degree, a.p + b.p};
  }
  friend Form operator-(const Form& a, const Form& b) {
    if (b.is_zero()) return a;
    if (a.is_zero()) return {b.degree, Poly() - b.p};
    if (a.degree != b.degree) throw std::logic_error("subtracting binary forms of different degrees");
    return {a.degree, a.p - b.p};
  }
};

// Degree of the gcd of a family of binary forms, zero forms ignored; -1 if all zero.
inline int gcd_degree(const std::vector<Form>& forms, Poly* common = nullptr) {
  Poly g;
  int mult = -1;
  bool any = false;
  for (const auto& f : forms) {
    if (f.is_zero()) continue;
    g = any ? gcd(g, f.p) : f.p.monic();
    mult = any ? std::min(mult, f.x0_multiplicity()) : f.x0_multiplicity();
    any = true;
  }
  if (!any) return -1;
  if (common) *common = g;
  return g.degree() + mult;
}

// Determinant by cofactor expansion (small sizes only).
inline Form determinant(const std::vector<std::vector<Form>>& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  Form acc;
  bool started = false;
  for (std::size_t c = 0; c < n; ++c) {
    if (m[0][c].is_zero()) continue;
    std::vector<std::vector<Form>> minor;
    for (std::size_t r = 1; r < n; ++r) {
      std::vector<Form> row;
      for (std::size_t cc = 0; cc < n; ++cc)
        if (cc != c) row.push_back(m[r][cc]);
      minor.push_back(std::move(row));
    }
    Form t = m[0][c] * determinant(minor);
    if (t.is_zero()) continue;
    if (!started) {
      acc = (c % 2 == 0) ? t : Form{t.degree, Poly() - t.p};
      started = true;
    } else {
      acc = (c % 2 == 0) ? acc + t : acc - t;
    }
  }
  return acc;
}

// Rank of a matrix over Q(i) with the pivot columns, by Gaussian elimination.
inline std::pair<int, std::vector<int>> rank_and_pivots(std::vector<std::vector<GQ>> a) {
  const int rows = static_cast<int>(a.size());
  const int cols = rows ? static_cast<int>(a[0].size()) : 0;
  int r = 0;
  std::vector<int> piv;
  for (int c = 0; c < cols && r < rows; ++c) {
    int p = -1;
    for (int i = r; i < rows; ++i)
      if (!a[i][c].is_zero()) {
        p = i;
        break;
      }
    if (p < 0) continue;
    std::swap(a[p], a[r]);
    for (int i = r + 1; i < rows; ++i) {
      if (a[i][c].is_zero()) continue;
      GQ f = a[i][c] / a[r][c];
      for (int j = c; j < cols; ++j) a[i][j] -= f * a[r][j];
    }
    piv.push_back(c);
    ++r;
  }
  return {r, piv};
}

}  // namespace hemet::exact

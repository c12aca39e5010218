#pragma once

#include "hemet/exact.hpp"
#include "hemet/sections.hpp"

#include <random>

namespace hemet {

using exact::Form;
using exact::GQ;
using exact::Poly;

struct WeightBlock {
  mpq_class w;
  std::vector<std::vector<GQ>> vectors;  // coefficient vectors in SectionBasis order
};

// Block-rational generator: weights strictly decreasing, vectors spanning H^0(E(k)).
struct WeightSpec {
  int k = 0;
  std::vector<WeightBlock> blocks;

  int dimension() const {
    int n = 0;
    for (const auto& b : blocks) n += static_cast<int>(b.vectors.size());
    return n;
  }
  mpq_class trace() const {
    mpq_class t = 0;
    for (const auto& b : blocks) t += b.w * static_cast<long>(b.vectors.size());
    return t;
  }
};

inline void validate(const BundleSpec& spec, const WeightSpec& z) {
  SectionBasis b(spec, z.k);
  if (z.blocks.empty()) throw argument_error("weight spec has no blocks");
  for (std::size_t i = 0; i + 1 < z.blocks.size(); ++i)
    if (!(z.blocks[i].w > z.blocks[i + 1].w)) throw argument_error("weights must be strictly decreasing");
  std::vector<std::vector<GQ>> rows;
  for (const auto& blk : z.blocks) {
    if (blk.vectors.empty()) throw argument_error("empty weight block");
    for (const auto& v : blk.vectors) {
      if (static_cast<int>(v.size()) != b.size())
        throw argument_error("vector length " + std::to_string(v.size()) + " does not match N=" + std::to_string(b.size()));
      rows.push_back(v);
    }
  }
  if (static_cast<int>(rows.size()) != b.size())
    throw argument_error("weight blocks hold " + std::to_string(rows.size()) + " vectors, N=" + std::to_string(b.size()));
  if (exact::rank_and_pivots(rows).first != b.size()) throw argument_error("weight vectors are linearly dependent");
}

// Least j with j w integral for every weight.
inline mpz_class j_of(const std::vector<mpq_class>& weights) {
  if (weights.empty()) throw argument_error("no weights");
  mpz_class j = 1;
  for (const auto& w : weights) {
    mpq_class c = w;
    c.canonicalize();
    mpz_lcm(j.get_mpz_t(), j.get_mpz_t(), c.get_den_mpz_t());
  }
  return j;
}

// Generators as binary forms; row i has degree a_i + k.
struct HomogeneousSectionMatrix {
  int k = 0;
  std::vector<int> row_degrees;
  std::vector<std::vector<Form>> entries;  // rows x columns

  int rows() const { return static_cast<int>(row_degrees.size()); }
  int cols() const { return entries.empty() ? 0 : static_cast<int>(entries[0].size()); }
};

inline HomogeneousSectionMatrix generated_subsheaf(const SectionBasis& b, const std::vector<std::vector<GQ>>& vectors) {
  HomogeneousSectionMatrix m;
  m.k = b.level();
  for (int i = 0; i < b.rank(); ++i) m.row_degrees.push_back(b.twisted_degree(i));
  m.entries.assign(b.rank(), {});
  for (const auto& v : vectors) {
    if (static_cast<int>(v.size()) != b.size()) throw argument_error("generator length does not match dim H^0(E(k))");
    for (int i = 0; i < b.rank(); ++i) {
      std::vector<GQ> c(b.twisted_degree(i) + 1);
      for (int j = 0; j <= b.twisted_degree(i); ++j) c[j] = v[b.offset(i) + j];
      m.entries[i].push_back(Form{b.twisted_degree(i), Poly(std::move(c))});
    }
  }
  return m;
}

struct Saturation {
  int rank = 0;
  long degree = 0;
  bool trivial = false;
  std::vector<int> pivot_columns;
};

namespace detail {

inline std::vector<std::vector<int>> subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (int i = start; i < n; ++i) {
      cur.push_back(i);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

inline Form minor(const HomogeneousSectionMatrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<std::vector<Form>> sub;
  for (int r : rows) {
    std::vector<Form> row;
    for (int c : cols) {
      Form f = m.entries[r][c];
      f.degree = m.row_degrees[r];
      row.push_back(f);
    }
    sub.push_back(std::move(row));
  }
  Form d = exact::determinant(sub);
  int deg = 0;
  for (int r : rows) deg += m.row_degrees[r];
  d.degree = deg;
  return d;
}

}  // namespace detail

// Generic rank over the function field and the degree of the saturation.
inline Saturation saturate_rank_degree(const HomogeneousSectionMatrix& m) {
  Saturation out;
  const int r = m.rows(), c = m.cols();
  if (c == 0) {
    out.trivial = true;
    return out;
  }
  int total = 0;
  for (int d : m.row_degrees) total += d;
  const int cap = std::min(r, c);
  for (long t = 0; t <= total + 1 && out.rank < cap; ++t) {
    std::vector<std::vector<GQ>> a(r, std::vector<GQ>(c));
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) a[i][j] = m.entries[i][j].p.eval(GQ(t));
    auto [rk, piv] = exact::rank_and_pivots(a);
    if (rk > out.rank) {
      out.rank = rk;
      out.pivot_columns = piv;
    }
  }
  if (out.rank == 0) {
    out.trivial = true;
    return out;
  }
  std::vector<Form> minors;
  for (const auto& rows : detail::subsets(r, out.rank)) minors.push_back(detail::minor(m, rows, out.pivot_columns));
  int g = exact::gcd_degree(minors);
  out.degree = -static_cast<long>(out.rank) * m.k + g;
  return out;
}

// gcd of all maximal minors, dehomogenized, with the multiplicity of the point at infinity.
// Its zeros are where the generated sheaf is not saturated.
inline std::pair<Poly, int> unsaturated_locus(const HomogeneousSectionMatrix& m) {
  Saturation s = saturate_rank_degree(m);
  if (s.trivial) return {Poly(), 0};
  std::vector<Form> minors;
  for (const auto& rows : detail::subsets(m.rows(), s.rank))
    for (const auto& cols : detail::subsets(m.cols(), s.rank)) minors.push_back(detail::minor(m, rows, cols));
  Poly g;
  int deg = exact::gcd_degree(minors, &g);
  return {g, deg - g.degree()};
}

struct FiltrationLevel {
  mpq_class w;
  mpz_class wbar;
  int rank = 0;
  long degree = 0;
  mpq_class slope;  // 0 when rank is 0
};

struct FiltrationReport {
  mpz_class j;
  std::vector<FiltrationLevel> levels;
  std::vector<int> graded_ranks;
  mpq_class mna;
  mpq_class jna;
};

inline FiltrationReport filtration(const BundleSpec& spec, const WeightSpec& z) {
  validate(spec, z);
  SectionBasis b(spec, z.k);
  FiltrationReport out;
  std::vector<mpq_class> ws;
  for (const auto& blk : z.blocks) ws.push_back(blk.w);
  out.j = j_of(ws);
  std::vector<std::vector<GQ>> gens;
  int prev = 0;
  for (const auto& blk : z.blocks) {
    gens.insert(gens.end(), blk.vectors.begin(), blk.vectors.end());
    Saturation s = saturate_rank_degree(generated_subsheaf(b, gens));
    FiltrationLevel lv;
    lv.w = blk.w;
    mpq_class wb = blk.w * mpq_class(out.j);
    lv.wbar = wb.get_num();
    lv.rank = s.rank;
    lv.degree = s.degree;
    lv.slope = s.rank ? mpq_class(s.degree, s.rank) : mpq_class(0);
    lv.slope.canonicalize();
    out.levels.push_back(lv);
    out.graded_ranks.push_back(s.rank - prev);
    prev = s.rank;
  }
  // (2/j) sum_q rk(E'_q)(mu(E) - mu(E'_q)), E'_q constant on [-wbar_i, -wbar_{i+1} - 1]
  mpq_class mu(static_cast<long>(spec.degree()), static_cast<long>(spec.rank()));
  mu.canonicalize();
  mpq_class sum = 0;
  for (std::size_t i = 0; i + 1 < out.levels.size(); ++i) {
    const auto& lv = out.levels[i];
    mpz_class count = lv.wbar - out.levels[i + 1].wbar;
    sum += mpq_class(count) * (mpq_class(static_cast<long>(lv.rank)) * mu - mpq_class(lv.degree));
  }
  out.mna = mpq_class(2) * sum / mpq_class(out.j);
  out.mna.canonicalize();
  bool any = false;
  mpq_class hi, lo;
  for (std::size_t i = 0; i < out.levels.size(); ++i) {
    if (out.graded_ranks[i] <= 0) continue;
    if (!any || out.levels[i].w > hi) hi = out.levels[i].w;
    if (!any || out.levels[i].w < lo) lo = out.levels[i].w;
    any = true;
  }
  out.jna = any ? mpq_class(hi - lo) : mpq_class(0);
  return out;
}

inline mpq_class mna(const BundleSpec& spec, const WeightSpec& z) { return filtration(spec, z).mna; }
inline mpq_class jna(const BundleSpec& spec, const WeightSpec& z) { return filtration(spec, z).jna; }

// c_E = 1/(r(r-1)).
inline mpq_class slope_gap_constant(const BundleSpec& spec) {
  if (spec.rank() < 2) throw argument_error("slope gap constant needs rank at least 2");
  return mpq_class(1, spec.rank() * (spec.rank() - 1));
}

enum class Stability { stable, polystable_not_stable, semistable_only_na, unstable };

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::polystable_not_stable: return "polystable_not_stable";
    case Stability::semistable_only_na: return "semistable_only_na";
    case Stability::unstable: return "unstable";
  }
  return "?";
}

inline Stability stability_classify(const BundleSpec& spec) {
  if (spec.rank() == 1) return Stability::stable;
  for (int a : spec.degrees)
    if (a != spec.degrees.front()) return Stability::unstable;
  return Stability::polystable_not_stable;
}

struct PositivityAudit {
  int samples = 0;
  int violations = 0;
  int zero_count = 0;
  mpq_class min_mna;
  std::vector<std::string> counterexamples;
  bool pass() const { return violations == 0; }
};

inline PositivityAudit semistable_positivity_audit(const BundleSpec& spec, const std::vector<WeightSpec>& samples) {
  if (stability_classify(spec) == Stability::unstable)
    throw argument_error(spec.str() + " is unstable; the positivity audit needs a semistable bundle");
  PositivityAudit out;
  bool first = true;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    FiltrationReport f = filtration(spec, samples[s]);
    ++out.samples;
    if (first || f.mna < out.min_mna) out.min_mna = f.mna;
    first = false;
    if (sgn(f.mna) == 0) ++out.zero_count;
    bool bad = sgn(f.mna) < 0;
    if (spec.rank() >= 2 && stability_classify(spec) == Stability::stable)
      bad = bad || f.mna < 2 * slope_gap_constant(spec) * f.jna;
    if (bad) {
      ++out.violations;
      out.counterexamples.push_back("sample " + std::to_string(s) + ": M^NA=" + exact::to_string(f.mna));
    }
  }
  return out;
}

// Sections of each summand as one block, weights decreasing in declaration order.
inline WeightSpec summand_weight_spec(const BundleSpec& spec, int k, const std::vector<mpq_class>& weights) {
  SectionBasis b(spec, k);
  if (static_cast<int>(weights.size()) != spec.rank()) throw argument_error("one weight per summand expected");
  WeightSpec z;
  z.k = k;
  for (int i = 0; i < spec.rank(); ++i) {
    WeightBlock blk{weights[i], {}};
    for (int j = 0; j <= b.twisted_degree(i); ++j) {
      std::vector<GQ> v(b.size());
      v[b.offset(i) + j] = GQ(1);
      blk.vectors.push_back(v);
    }
    z.blocks.push_back(blk);
  }
  return z;
}

// Random block-rational generator with small Gaussian-integer vectors.
inline WeightSpec random_weight_spec(const BundleSpec& spec, int k, std::mt19937_64& rng, int max_blocks = 4) {
  SectionBasis b(spec, k);
  const int n = b.size();
  std::uniform_int_distribution<int> coef(-3, 3);
  std::vector<std::vector<GQ>> vecs;
  for (;;) {
    vecs.assign(n, std::vector<GQ>(n));
    for (auto& v : vecs)
      for (auto& e : v) e = GQ(mpq_class(coef(rng)), mpq_class(coef(rng)));
    if (exact::rank_and_pivots(vecs).first == n) break;
  }
  int nb = std::uniform_int_distribution<int>(1, std::min(max_blocks, n))(rng);
  std::vector<int> cuts(n - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  std::shuffle(cuts.begin(), cuts.end(), rng);
  cuts.resize(nb - 1);
  cuts.push_back(0);
  cuts.push_back(n);
  std::sort(cuts.begin(), cuts.end());
  std::vector<mpq_class> ws;
  std::uniform_int_distribution<int> num(-12, 12), den(1, 4);
  while (static_cast<int>(ws.size()) < nb) {
    mpq_class w(num(rng), den(rng));
    w.canonicalize();
    if (std::find(ws.begin(), ws.end(), w) == ws.end()) ws.push_back(w);
  }
  std::sort(ws.begin(), ws.end(), [](const mpq_class& x, const mpq_class& y) { return x > y; });
  WeightSpec z;
  z.k = k;
  for (int i = 0; i < nb; ++i) {
    WeightBlock blk{ws[i], {}};
    for (int j = cuts[i]; j < cuts[i + 1]; ++j) blk.vectors.push_back(vecs[j]);
    z.blocks.push_back(blk);
  }
  return z;
}

}  // namespace hemet

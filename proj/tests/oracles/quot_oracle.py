"""Frozen M^NA / J^NA cases for test_quot.cpp, computed with sympy.

Run: python3 tests/oracles/quot_oracle.py > tests/data/quot_cases.inc
"""
import itertools
import random
from fractions import Fraction
from math import lcm

import sympy as sp

x0, x1 = sp.symbols("x0 x1")


def forms(degrees, k, vectors):
    # row i, column c: sum_j v[off_i + j] x0^{d-j} x1^j
    rows = []
    off = 0
    for a in degrees:
        d = a + k
        row = []
        for v in vectors:
            row.append(sp.expand(sum(v[off + j] * x0 ** (d - j) * x1 ** j for j in range(d + 1))))
        rows.append(row)
        off += d + 1
    return sp.Matrix(rows)


def saturation(degrees, k, vectors):
    if not vectors:
        return 0, 0
    m = forms(degrees, k, vectors)
    s = m.rank()
    if s == 0:
        return 0, 0
    # pivot columns from a generic specialisation
    num = m.subs({x0: sp.Rational(7, 3), x1: sp.Rational(-5, 11)})
    _, piv = num.T.rref()
    piv = list(piv)[:s]
    g = 0
    for rows in itertools.combinations(range(m.rows), s):
        minor = sp.expand(m.extract(list(rows), piv).det())
        if minor != 0:
            g = minor if g == 0 else sp.gcd(g, minor)
    deg = sp.Poly(g, x0, x1).total_degree()
    return s, deg - s * k


def mna_jna(degrees, k, blocks):
    r = len(degrees)
    mu = Fraction(sum(degrees), r)
    ws = [w for w, _ in blocks]
    j = 1
    for w in ws:
        j = lcm(j, w.denominator)
    gens = []
    levels = []
    for w, vecs in blocks:
        gens = gens + vecs
        levels.append((w, *saturation(degrees, k, gens)))
    total = Fraction(0)
    for i in range(len(levels) - 1):
        count = (levels[i][0] - levels[i + 1][0]) * j
        rk, dg = levels[i][1], levels[i][2]
        total += count * (rk * mu - dg)
    mna = 2 * total / j
    jumps = [levels[i][0] for i in range(len(levels)) if levels[i][1] - (levels[i - 1][1] if i else 0) > 0]
    jna = max(jumps) - min(jumps)
    return mna, jna, [(lv[1], lv[2]) for lv in levels]


def random_case(rng, degrees, k):
    n = sum(a + k + 1 for a in degrees)
    while True:
        vecs = [[complex(rng.randint(-2, 2), rng.randint(-2, 2)) for _ in range(n)] for _ in range(n)]
        mat = sp.Matrix([[sp.Integer(int(c.real)) + sp.I * int(c.imag) for c in v] for v in vecs])
        if mat.rank() == n:
            break
    nb = rng.randint(2, min(4, n))
    cuts = sorted(rng.sample(range(1, n), nb - 1))
    cuts = [0] + cuts + [n]
    ws = set()
    while len(ws) < nb:
        ws.add(Fraction(rng.randint(-9, 9), rng.randint(1, 3)))
    ws = sorted(ws, reverse=True)
    blocks = []
    for i in range(nb):
        vs = [[sp.Integer(int(c.real)) + sp.I * int(c.imag) for c in v] for v in vecs[cuts[i]:cuts[i + 1]]]
        blocks.append((ws[i], vs))
    return blocks


def cpp_vec(v):
    parts = []
    for c in v:
        re, im = sp.re(c), sp.im(c)
        parts.append("{%d, %d}" % (int(re), int(im)))
    return "{" + ", ".join(parts) + "}"


def main():
    rng = random.Random(20240611)
    setups = [((1, -1), 1), ((2, 2), 0), ((2, 2), 1), ((0, 0, 1), 0), ((3, 0), 0), ((1, 1, -1), 1)]
    print("// generated by tests/oracles/quot_oracle.py; do not edit")
    for degrees, k in setups:
        for _ in range(3):
            blocks = random_case(rng, degrees, k)
            mna, jna, levels = mna_jna(degrees, k, blocks)
            bl = []
            for w, vs in blocks:
                bl.append('{"%s", {%s}}' % (w, ", ".join(cpp_vec(v) for v in vs)))
            lv = ", ".join("{%d, %d}" % l for l in levels)
            print('{{%s}, %d, {%s}, "%s", "%s", {%s}},' % (
                ", ".join(str(a) for a in degrees), k, ", ".join(bl), mna, jna, lv))


if __name__ == "__main__":
    main()

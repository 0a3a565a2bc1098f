"""Symbolic reference geometry (sympy), independent of the numeric package."""

import itertools

import sympy as sp

PAIRS = [(1, 2), (2, 0), (0, 1)]


def christoffel(g, xs):
    ginv = g.inv()
    n = len(xs)
    gam = [[[0] * n for _ in range(n)] for _ in range(n)]
    for k, i, j in itertools.product(range(n), repeat=3):
        gam[k][i][j] = sp.simplify(
            sum(ginv[k, l] * (sp.diff(g[j, l], xs[i]) + sp.diff(g[i, l], xs[j])
                              - sp.diff(g[i, j], xs[l])) for l in range(n)) / 2)
    return gam


def riemann_lowered(g, xs):
    """R[i][j][k][l] = g(R(d_i, d_j) d_k, d_l), R(X,Y)=[nabla_X, nabla_Y]-nabla_[X,Y]."""
    n = len(xs)
    gam = christoffel(g, xs)
    up = {}
    for l, i, j, k in itertools.product(range(n), repeat=4):
        expr = sp.diff(gam[l][j][k], xs[i]) - sp.diff(gam[l][i][k], xs[j])
        expr += sum(gam[l][i][m] * gam[m][j][k] - gam[l][j][m] * gam[m][i][k] for m in range(n))
        up[l, i, j, k] = expr
    low = {}
    for i, j, k, l in itertools.product(range(n), repeat=4):
        low[i, j, k, l] = sp.simplify(sum(g[l, m] * up[m, i, j, k] for m in range(n)))
    return low


def gram_schmidt(g, order=(0, 1, 2)):
    n = g.shape[0]
    frame = []
    for idx in order:
        v = sp.zeros(n, 1)
        v[idx] = 1
        for e in frame:
            v = v - (e.T * g * v)[0] * e
        v = v / sp.sqrt((v.T * g * v)[0])
        frame.append(sp.simplify(v))
    return frame


def curvature_operator(g, xs, point):
    """3x3 curvature operator in the Gram-Schmidt frame, basis e2^e3, e3^e1, e1^e2."""
    low = riemann_lowered(g, xs)
    subs = dict(zip(xs, point))
    gp = g.subs(subs)
    frame = gram_schmidt(gp)
    R = {key: val.subs(subs) for key, val in low.items()}

    def r4(a, b, c, d):
        return sum(R[i, j, k, l] * a[i] * b[j] * c[k] * d[l]
                   for i, j, k, l in itertools.product(range(3), repeat=4))

    op = sp.zeros(3, 3)
    for A, (i, j) in enumerate(PAIRS):
        for B, (k, l) in enumerate(PAIRS):
            op[A, B] = sp.nsimplify(sp.simplify(r4(frame[i], frame[j], frame[l], frame[k])))
    return op

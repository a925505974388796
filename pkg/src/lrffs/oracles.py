"""Brute-force reference implementations.

Plain loops over pairs, triples and ordered tuples. They share no code with
:mod:`lrffs.estimators` and are used to check it; the ``oracle`` CLI
subcommand prints their values.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def mann_whitney(x_a, x_b) -> float:
    hits = 0
    for a in x_a:
        for b in x_b:
            if a < b:
                hits += 1
    return hits / (len(x_a) * len(x_b))


def first_order(x, y, r) -> tuple[float, float]:
    """Û and θ̂ over ordered pairs ``i1 != i2``."""
    n = len(x)
    u = th = 0
    for i1 in range(n):
        for i2 in range(n):
            if i1 == i2 or y[i1] == r or y[i2] != r:
                continue
            th += 1
            if x[i1] < x[i2]:
                u += 1
    return u / (n * (n - 1)), th / (n * (n - 1))


def higher_order(x, y, r, d, d1) -> tuple[float, float]:
    """Ordered ``(d+1)``-tuple average of the role-assigned kernel."""
    n = len(x)
    u = th = 0
    count = 0
    for tup in itertools.permutations(range(n), d + 1):
        count += 1
        k = tup[-1]
        if y[k] != r:
            continue
        roles = tup[:-1]
        ok_label = all(y[i] != r for i in roles[:d1]) and all(y[i] == r for i in roles[d1:])
        if not ok_label:
            continue
        th += 1
        if all(x[i] < x[k] for i in roles):
            u += 1
    return u / count, th / count


def psis(x, y, r) -> tuple[int, float]:
    c, s = 0, 0.0
    for xi, yi in zip(x, y):
        if yi == r:
            c += 1
            s += xi
    return c, s


def cavs_numerator(x, y, r) -> float:
    n = len(x)
    hits = 0
    for i1 in range(n):
        for i2 in range(n):
            if y[i1] == r and x[i1] < x[i2]:
                hits += 1
    return hits / (n * (n - 1))


def mv(x, y, r) -> tuple[float, float]:
    n = len(x)
    t1 = t2 = 0
    for i1, i2, i3 in itertools.permutations(range(n), 3):
        if x[i3] < x[i1] and x[i2] < x[i1] and y[i2] == r:
            t2 += 1
            if y[i3] == r:
                t1 += 1
    norm = n * (n - 1) * (n - 2)
    return t1 / norm, t2 / norm


def fkf(x, y, R) -> float:
    """Largest gap between class CDFs over the sample grid, present classes only."""
    classes = [r for r in range(R) if any(yi == r for yi in y)]
    best = 0.0
    for r1 in classes:
        for r2 in classes:
            n1 = sum(1 for yi in y if yi == r1)
            n2 = sum(1 for yi in y if yi == r2)
            for pt in x:
                f1 = sum(1 for xi, yi in zip(x, y) if yi == r1 and xi < pt) / n1
                f2 = sum(1 for xi, yi in zip(x, y) if yi == r2 and xi < pt) / n2
                best = max(best, abs(f1 - f2))
    return best


def pooled_lrffs(x, y, R) -> float:
    """Single-machine LR-FFS utility of one feature."""
    best = 0.0
    for r in range(R):
        xa = [xi for xi, yi in zip(x, y) if yi != r]
        xb = [xi for xi, yi in zip(x, y) if yi == r]
        if xa and xb:
            best = max(best, abs(mann_whitney(xa, xb) - 0.5))
    return best


def pooled_pair(x, y, R) -> float:
    best = 0.0
    for r in range(R):
        for k in range(R):
            if r == k:
                continue
            xa = [xi for xi, yi in zip(x, y) if yi == k]
            xb = [xi for xi, yi in zip(x, y) if yi == r]
            if xa and xb:
                best = max(best, abs(mann_whitney(xa, xb) - 0.5))
    return best


def pooled_mv(x, y, R) -> float:
    """Single-machine MV-SIS utility from the triple U-statistics."""
    n = len(x)
    total = 0.0
    for r in range(R):
        pr = sum(1 for yi in y if yi == r) / n
        if pr == 0:
            continue
        t1, t2 = mv(x, y, r)
        total += t1 / pr - 2 * t2 + pr / 3
    return total


def pooled_cavs_max(x, y, R) -> float:
    n = len(x)
    best = 0.0
    for r in range(R):
        pr = sum(1 for yi in y if yi == r) / n
        if pr == 0:
            continue
        best = max(best, abs(cavs_numerator(x, y, r) / pr - 0.5))
    return best


def bisect_root(f, lo: float, hi: float, tol: float = 1e-15, max_iter: int = 200) -> float:
    """Root of a sign-changing continuous ``f`` on ``[lo, hi]`` by bisection."""
    flo = f(lo)
    if flo == 0:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < tol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bridge_pi_bisection(pi_clients, h) -> float:
    """π* in [0, 1/2] solving ``sum h π(1-π) = sum h · π*(1-π*)``."""
    h = np.asarray(h, dtype=np.float64)
    pi = np.asarray(pi_clients, dtype=np.float64)
    c = float(np.sum(h * pi * (1 - pi)) / np.sum(h))
    return bisect_root(lambda t: t * (1 - t) - c, 0.0, 0.5)


def exhaustive_null_mean(x, label_multiset, r) -> float:
    """Mean of γ̂ over every distinct arrangement of ``label_multiset`` on ``x``.

    Distinct arrangements of a multiset are equally likely under a uniform
    permutation, so this is the exact permutation mean.
    """
    from fractions import Fraction

    total = Fraction(0)
    count = 0
    for labels in set(itertools.permutations(label_multiset)):
        xa = [xi for xi, yi in zip(x, labels) if yi != r]
        xb = [xi for xi, yi in zip(x, labels) if yi == r]
        hits = sum(1 for a in xa for b in xb if a < b)
        total += Fraction(hits, len(xa) * len(xb))
        count += 1
    return total / count


def normal_gamma_example1(shift: float = 0.35) -> float:
    """``P(X_2 < X_1)`` for ``X_1 ~ N(shift, 1)``, ``X_2 ~ N(0, 1)``: Φ(shift/√2)."""
    return 0.5 * (1.0 + math.erf(shift / 2.0))


CASES = {
    "mann_whitney": "A=<comma list> B=<comma list>: fraction of pairs with a < b",
    "first_order": "X=<list> Y=<list> r=<int>: Û and θ̂",
    "higher_order": "X=<list> Y=<list> r=<int> d=<int> d1=<int>",
    "mv": "X=<list> Y=<list> r=<int>: MV-SIS θ1, θ2",
    "cavs": "X=<list> Y=<list> r=<int>: CAVS numerator",
    "fkf": "X=<list> Y=<list> R=<int>: local FKF utility",
    "bridge": "PI=<list> H=<list>: bridge proportion by bisection",
    "example1": "shift=<float>: population γ for the two-normal example",
}


def run_case(case: str, args: dict[str, str]) -> dict:
    """Evaluate a named oracle on ``key=value`` arguments; used by the CLI."""

    def floats(key):
        return [float(v) for v in args[key].split(",") if v != ""]

    def ints(key):
        return [int(v) for v in args[key].split(",") if v != ""]

    if case == "mann_whitney":
        return {"gamma": mann_whitney(floats("A"), floats("B"))}
    if case == "first_order":
        u, th = first_order(floats("X"), ints("Y"), int(args["r"]))
        return {"u_hat": u, "theta_hat": th, "gamma_hat": u / th if th else None}
    if case == "higher_order":
        u, th = higher_order(
            floats("X"), ints("Y"), int(args["r"]), int(args["d"]), int(args["d1"])
        )
        return {"u_hat": u, "theta_hat": th}
    if case == "mv":
        t1, t2 = mv(floats("X"), ints("Y"), int(args["r"]))
        return {"theta1": t1, "theta2": t2}
    if case == "cavs":
        return {"numerator": cavs_numerator(floats("X"), ints("Y"), int(args["r"]))}
    if case == "fkf":
        return {"omega": fkf(floats("X"), ints("Y"), int(args["R"]))}
    if case == "bridge":
        return {"pi_star": bridge_pi_bisection(floats("PI"), floats("H"))}
    if case == "example1":
        g = normal_gamma_example1(float(args.get("shift", 0.35)))
        return {"gamma": g, "omega": abs(g - 0.5)}
    raise KeyError(f"unknown oracle case {case!r}; known: {', '.join(sorted(CASES))}")

"""Independent oracles for the frozen expected values used by the test suite.

Nothing here imports the package under test. Each oracle uses a different
route (high precision root finding, exact rationals, brute force orbit sums,
plain numpy Birkhoff averages) from the implementation it later checks.

Run from the repository root:  python3 tests/oracles/make_frozen.py
"""
import json
import math
import os
from fractions import Fraction

import mpmath
import numpy as np
from scipy.optimize import brentq

OUT = os.path.join(os.path.dirname(__file__), "..", "frozen", "oracles.json")


def lsv_left_inverse_bisect(z, gamma):
    g = lambda x: x * (1.0 + 2.0**gamma * x**gamma) - z
    return brentq(g, 0.0, z, xtol=1e-16, rtol=1e-15, maxiter=500)


def lsv_chain_mp(gamma, n_max, dps=50):
    mpmath.mp.dps = dps
    gam = mpmath.mpf(gamma)
    c = mpmath.power(2, gam)
    xs = [mpmath.mpf(1) / 2]
    for _ in range(n_max):
        z = xs[-1]
        f = lambda x: x * (1 + c * x**gam) - z
        lo, hi = z / (1 + c * z**gam), z
        xs.append(mpmath.findroot(f, (lo, hi), solver="anderson"))
    return xs


def binary_digits(q, n):
    digits = []
    for _ in range(n):
        q *= 2
        d = int(q >= 1)
        digits.append(d)
        q -= d
    return digits


def ambient_lsv_orbits(gamma, n_orbits, n_steps, burn, seed):
    """Plain numpy iteration of x -> x(1+2^g x^g) / 2x-1 on many orbits.

    Returns per-orbit visit frequency of Y=[1/2,1] and per-orbit mean of
    min(tau, 50) over completed excursions.
    """
    rng = np.random.default_rng(seed)
    x = rng.random(n_orbits)
    c = 2.0**gamma
    for _ in range(burn):
        x = np.where(x < 0.5, x * (1 + c * x**gamma), 2 * x - 1)
    visits = np.zeros(n_orbits)
    last = np.full(n_orbits, -1)
    tsum = np.zeros(n_orbits)
    tcount = np.zeros(n_orbits)
    for k in range(n_steps):
        inY = x >= 0.5
        visits += inY
        done = inY & (last >= 0)
        tau = k - last
        tsum[done] += np.minimum(tau[done], 50)
        tcount[done] += 1
        last = np.where(inY, k, last)
        x = np.where(x < 0.5, x * (1 + c * x**gamma), 2 * x - 1)
    return visits / n_steps, tsum / np.maximum(tcount, 1)


def lsv_first_return_exact(y, gamma):
    c = 2.0**gamma
    x = 2 * y - 1
    tau = 1
    while x < 0.5:
        x = x * (1 + c * x**gamma)
        tau += 1
    return x, tau


def sampled_ulam_second_eigenvalue(gamma, cells=256, per_cell=64):
    edges = np.linspace(0.5, 1.0, cells + 1)
    P = np.zeros((cells, cells))
    for k in range(cells):
        ys = edges[k] + (np.arange(per_cell) + 0.5) / per_cell * (edges[k + 1] - edges[k])
        for y in ys:
            fy, _ = lsv_first_return_exact(y, gamma)
            i = min(int((fy - 0.5) / 0.5 * cells), cells - 1)
            P[k, i] += 1.0 / per_cell
    ev = np.linalg.eigvals(P)
    ev = ev[np.argsort(-np.abs(ev))]
    return float(abs(ev[1]))


def cf_quotients_mp(x, depth):
    out = []
    for _ in range(depth):
        a = int(mpmath.floor(x))
        out.append(a)
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    return out


def temporal_distance_bruteforce(past1, fut1, past4, fut4, m, roof, K):
    """Direct four-orbit sum.  Words are dicts index -> symbol."""
    def word(past, fut):
        w = {}
        for i, s in enumerate(past):
            w[-1 - i] = s
        for i, s in enumerate(fut):
            w[i] = s
        return w

    y1 = word(past1, fut1)
    y4 = word(past4, fut4)
    y2 = word(past4, fut1)
    y3 = word(past1, fut4)

    def phi_shift(w, n):
        return roof([w[n + k] for k in range(K + 1)])

    total = 0.0
    for n in range(-m, 0):
        total += phi_shift(y1, n) - phi_shift(y2, n) - phi_shift(y3, n) + phi_shift(y4, n)
    return total


def main():
    out = {}

    out["lsv_gamma1_left_inverse_0375"] = lsv_left_inverse_bisect(0.375, 1.0)

    xs = lsv_chain_mp(0.5, 400)
    out["lsv_chain_gamma05"] = {str(n): float(xs[n]) for n in (1, 2, 3, 5, 10, 50, 100, 199, 400)}
    # tail mu0(tau>n) = x_{n-1}/2 (Lebesgue on Y); log-log slope on [50, 200]
    n = np.arange(50, 201)
    tail = np.array([float(xs[k - 1]) / 2 for k in n])
    slope = np.polyfit(np.log(n), np.log(tail), 1)[0]
    out["lsv_gamma05_leb_tail_slope_50_200"] = float(slope)

    q1 = Fraction(0.1)
    q2 = Fraction(0.1 + 2.0**-6)
    d1, d2 = binary_digits(q1, 60), binary_digits(q2, 60)
    out["doubling_separation_0.1"] = next(i for i in range(60) if d1[i] != d2[i])

    freq, tmean = ambient_lsv_orbits(0.5, 2000, 20000, 2000, seed=20240601)
    out["lsv_gamma05_mu_f_Y"] = {"mean": float(freq.mean()), "stderr": float(freq.std(ddof=1) / math.sqrt(len(freq)))}
    out["lsv_gamma05_kac_phi_norm"] = 1.0 / float(freq.mean())
    out["lsv_gamma05_mean_tau_cap50"] = {"mean": float(tmean.mean()), "stderr": float(tmean.std(ddof=1) / math.sqrt(len(tmean)))}

    # h(x)=1+x induced roof: direct orbit sums on a few points
    pts = []
    rng = np.random.default_rng(7)
    for y in np.concatenate([rng.uniform(0.5, 1.0, 6), [0.5 + 1e-3, 0.5 + 1e-5]]):
        x = y
        phi = 0.0
        tau = 0
        while True:
            phi += 1.0 + x
            tau += 1
            x = 2 * x - 1 if x >= 0.5 else x * (1 + math.sqrt(2) * math.sqrt(x))
            if x >= 0.5:
                break
        pts.append([float(y), tau, phi])
    out["lsv_gamma05_h1px_orbit_sums"] = pts

    out["lsv_gamma05_ulam_lambda2"] = sampled_ulam_second_eigenvalue(0.5)

    mpmath.mp.dps = 60
    golden = (1 + mpmath.sqrt(5)) / 2
    out["golden_cf"] = cf_quotients_mp(golden, 30)
    mpmath.mp.dps = 1000
    liou = sum(mpmath.mpf(10) ** (-math.factorial(k)) for k in range(1, 7))
    out["liouville_cf_head"] = [str(a) for a in cf_quotients_mp(liou, 8)]

    roof = lambda w: 1.0 + 0.3 * w[0] + 0.2 * w[0] * w[1]
    past1, fut1 = [1, 0, 1, 1, 0, 1], [1, 1, 0]
    past4, fut4 = [0, 1, 1, 0, 1, 0], [0, 0, 1]
    out["temporal_pair"] = {"past1": past1, "fut1": fut1, "past4": past4, "fut4": fut4}
    out["temporal_D_by_m"] = {str(m): temporal_distance_bruteforce(past1, fut1, past4, fut4, m, roof, 1) for m in range(1, 6)}

    pts = np.arange(4096) / 4096.0
    counts = [len(np.unique(np.floor(pts / 2.0**-j))) for j in range(2, 11)]
    out["uniform_grid_box_counts"] = counts

    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    print(json.dumps(out, indent=1, sort_keys=True)[:3000])


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Regenerates the frozen oracle fixtures used by the C++ tests.

Every expected value here comes from a deliberately naive implementation:
clusters are re-scored from their leaf sets at each step, trees are walked
recursively, bisection is unrolled by hand, and capping is solved by
water-filling. Run from this directory: python3 generate_fixtures.py
"""

import json
import math
from datetime import date, timedelta

import numpy as np

rng = np.random.default_rng(20240607)


def naive_linkage(dist, method):
    n = dist.shape[0]
    clusters = {i: [i] for i in range(n)}
    height = {i: 0.0 for i in range(n)}
    central = [sum(x * x for x in sorted(dist[i].tolist())) for i in range(n)]

    def key(c):
        m = clusters[c]
        return (-len(m), -height[c], min(central[i] for i in m), min(m))

    merges = []
    next_id = n
    while len(clusters) > 1:
        best = None
        keys = sorted(clusters)
        for a_i, a in enumerate(keys):
            for b in keys[a_i + 1:]:
                pairs = [dist[i, j] for i in clusters[a] for j in clusters[b]]
                if method == "single":
                    d = min(pairs)
                elif method == "complete":
                    d = max(pairs)
                else:
                    d = sum(pairs) / len(pairs)
                lo, hi = sorted((min(clusters[a]), min(clusters[b])))
                cand = (d, lo, hi, a, b)
                if best is None or cand[:3] < best[:3]:
                    best = cand
        d, _, _, a, b = best
        if key(b) < key(a):
            a, b = b, a
        merges.append([a, b, d, len(clusters[a]) + len(clusters[b])])
        clusters[next_id] = clusters.pop(a) + clusters.pop(b)
        height[next_id] = d
        next_id += 1
    return merges


def flatten(merges, n):
    def walk(node):
        if node < n:
            return [node]
        left, right = merges[node - n][:2]
        return walk(int(left)) + walk(int(right))

    return walk(n + len(merges) - 1)


def cluster_var(cov, members):
    sub = cov[np.ix_(members, members)]
    w = 1.0 / np.diag(sub)
    w /= w.sum()
    return float(w @ sub @ w)


def split_weights(cov, left, right):
    vl, vr = cluster_var(cov, left), cluster_var(cov, right)
    a = 1.0 - vl / (vl + vr)
    return a, 1.0 - a


def bisection_5(cov, order):
    # [o0 o1 o2 | o3 o4] -> [o0 o1 | o2], [o0 | o1], [o3 | o4]
    o = order
    w = np.ones(5)
    a, b = split_weights(cov, [o[0], o[1], o[2]], [o[3], o[4]])
    w[[o[0], o[1], o[2]]] *= a
    w[[o[3], o[4]]] *= b
    a, b = split_weights(cov, [o[0], o[1]], [o[2]])
    w[[o[0], o[1]]] *= a
    w[o[2]] *= b
    a, b = split_weights(cov, [o[0]], [o[1]])
    w[o[0]] *= a
    w[o[1]] *= b
    a, b = split_weights(cov, [o[3]], [o[4]])
    w[o[3]] *= a
    w[o[4]] *= b
    return w


def water_fill(v, cap):
    v = np.asarray(v, dtype=float)
    lo, hi = 0.0, cap / v[v > 0].min() + 1.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if np.minimum(cap, mid * v).sum() > 1.0:
            hi = mid
        else:
            lo = mid
    return np.minimum(cap, 0.5 * (lo + hi) * v)


def psd_gram(x):
    xc = x - x.mean(axis=0)
    g = xc @ xc.T
    g = 0.5 * (g + g.T)
    lam, vec = np.linalg.eigh(g)
    return (vec * np.maximum(lam, 0.0)) @ vec.T


def euclid(x):
    n = x.shape[0]
    return np.array([[math.sqrt(((x[i] - x[j]) ** 2).sum()) for j in range(n)] for i in range(n)])


def corr_dist(returns):
    cov = np.cov(returns, rowvar=False, ddof=1)
    sd = np.sqrt(np.diag(cov))
    rho = np.clip(cov / np.outer(sd, sd), -1, 1)
    d = np.sqrt(np.maximum(0.0, 0.5 * (1.0 - rho)))
    np.fill_diagonal(d, 0.0)
    return cov, d


out = {}

# Linkage and quasi-diagonalization on random 5- and 6-point clouds.
for n in (5, 6):
    pts = rng.normal(size=(n, 3))
    dist = euclid(pts)
    entry = {"distance": dist.tolist()}
    for method in ("single", "complete", "average"):
        m = naive_linkage(dist, method)
        entry[method] = {"merges": m, "order": flatten(m, n)}
    out[f"linkage_{n}"] = entry

# Recursive bisection on a fixed 5x5 PSD matrix and a non-trivial ordering.
a = rng.normal(size=(5, 8))
cov5 = a @ a.T / 8.0
order5 = [3, 0, 4, 1, 2]
out["bisection_5"] = {"matrix": cov5.tolist(), "order": order5, "weights": bisection_5(cov5, order5).tolist()}

# Water-filling cap.
out["cap_5"] = {
    "weights": [0.5, 0.3, 0.1, 0.07, 0.03],
    "cap": 0.25,
    "expected": water_fill([0.5, 0.3, 0.1, 0.07, 0.03], 0.25).tolist(),
}
v = rng.uniform(0.01, 1.0, size=7)
v /= v.sum()
out["cap_7"] = {"weights": v.tolist(), "cap": 0.17, "expected": water_fill(v, 0.17).tolist()}

# Composed sensitivity pipeline on a 5-asset, 3-driver embedding.
emb = rng.normal(scale=0.5, size=(5, 3))
d = euclid(emb)
m = naive_linkage(d, "single")
order = flatten(m, 5)
w = bisection_5(psd_gram(emb), order)
out["hsp_5"] = {
    "coordinates": emb.tolist(),
    "order": order,
    "weights": w.tolist(),
    "cap": 0.22,
    "capped": water_fill(w, 0.22).tolist(),
}

# Correlation-distance HRP on a fixed 5-asset return sample.
base = rng.normal(scale=0.01, size=(80, 2))
load = rng.uniform(0.2, 1.0, size=(2, 5))
ret = base @ load + rng.normal(scale=0.006, size=(80, 5))
cov, cd = corr_dist(ret)
m = naive_linkage(cd, "single")
order = flatten(m, 5)
out["hrp_5"] = {"returns": ret.tolist(), "order": order, "weights": bisection_5(cov, order).tolist()}

# Lagged Pearson correlation.
x = rng.normal(size=40)
y = 0.6 * np.roll(x, 1) + rng.normal(scale=0.8, size=40)
lag = {}
for k in (0, 1, 2):
    lag[str(k)] = float(np.corrcoef(y[k:], x[: len(x) - k])[0, 1])
out["lagged_corr"] = {"x": y.tolist(), "y": x.tolist(), "expected": lag}

# Metrics on a NAV path with known daily returns.
daily = rng.normal(0.0004, 0.01, size=60)
nav = [100.0]
for r in daily:
    nav.append(nav[-1] * (1.0 + r))
rets = np.array(nav[1:]) / np.array(nav[:-1]) - 1.0
out["metrics"] = {
    "nav": nav,
    "total_return_pct": (nav[-1] / nav[0] - 1.0) * 100.0,
    "annualized_vol_pct": float(rets.std(ddof=1) * math.sqrt(252) * 100.0),
    "sharpe": float(rets.mean() / rets.std(ddof=1) * math.sqrt(252)),
}

# Equal-weight NAV with monthly re-weighting on two assets.
days = []
d0 = date(2021, 1, 4)
while len(days) < 120:
    if d0.weekday() < 5:
        days.append(d0)
    d0 += timedelta(days=1)
p = np.empty((120, 2))
p[0] = [50.0, 80.0]
for t in range(1, 120):
    p[t] = p[t - 1] * (1.0 + rng.normal([0.0005, -0.0002], [0.012, 0.008]))
start, end = date(2021, 3, 1), date(2021, 6, 1)
rebal = []
anchor = start
while anchor < end:
    first = next(dd for dd in days if dd >= anchor)
    if first < end:
        rebal.append(first)
    anchor = date(anchor.year + (anchor.month == 12), anchor.month % 12 + 1, 1)
i0 = days.index(rebal[0])
nav_dates, nav = [days[i0 - 1]], [100.0]
for t in range(i0, len(days)):
    if days[t] > end:
        break
    r = p[t] / p[t - 1] - 1.0
    nav.append(nav[-1] * (1.0 + 0.5 * r[0] + 0.5 * r[1]))
    nav_dates.append(days[t])
out["equal_weight_nav"] = {
    "dates": [dd.isoformat() for dd in days],
    "prices": p.tolist(),
    "start": start.isoformat(),
    "end": end.isoformat(),
    "rebalances": [dd.isoformat() for dd in rebal],
    "nav_dates": [dd.isoformat() for dd in nav_dates],
    "nav": nav,
}

with open("oracles.json", "w") as f:
    json.dump(out, f, indent=1)
    f.write("\n")
print("wrote oracles.json")

"""Independent references used by the tests.

Everything here is written from the definitions with plain ``math`` and
``itertools`` so it shares no code with the package. The frozen constants
were evaluated once with mpmath at 50 digits and pasted in; the mpmath
recomputation test re-derives them when mpmath is installed.
"""
import itertools
import math

# frozen high-precision values (mpmath, mp.dps = 50)
AT_LOSS_K3_Y2_G = 0.9481539683602134        # 2 log(1 + e^-0.5)
PHI_07 = 0.4031860488854579                 # log(1 + e^-0.7)
CUMLOGIT_K3_Y2 = 0.7719368329053047         # -log(sigmoid(1) - sigmoid(-1))
CORAL_K3_Y3_H2 = 0.2538560220859450         # -2 log sigmoid(2)
SOFTPLUS_10 = 10.000045398899217            # log(1 + e^10)
EXP_MINUS_1 = 0.36787944117144233


def phi_ref(t):
    # log(1 + exp(-t)) without the package's stable form; fine for |t| < 700
    return math.log1p(math.exp(-t)) if t > -30 else -t + math.exp(t)


def at_loss_ref(g, y):
    """All-thresholds loss written straight from the indicator definition."""
    total = 0.0
    for j, gj in enumerate(g, start=1):
        # sample should sit above thresholds j < y (g_j < 0), below the rest
        total += phi_ref(-gj) if j < y else phi_ref(gj)
    return total


def predict_ref(g):
    return 1 + sum(1 for v in g if v < 0)


def objective_ref(W, theta, X, y, alpha, beta):
    n = len(X)
    data = 0.0
    for xi, yi in zip(X, y):
        g = [theta[j] - sum(W[j][d] * xi[d] for d in range(len(xi))) for j in range(len(theta))]
        data += at_loss_ref(g, yi)
    pen = alpha * sum(v * v for row in W for v in row)
    for j in range(1, len(W)):
        pen += beta * sum((a - b) ** 2 for a, b in zip(W[j], W[j - 1]))
    return data / n + pen


def wilcoxon_bruteforce(a, b):
    """Exact two-sided signed-rank p by listing every sign pattern."""
    d = [x - y for x, y in zip(a, b) if x != y]
    n = len(d)
    if n == 0:
        return 1.0
    mags = sorted(abs(v) for v in d)
    # midranks by hand
    rank = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and mags[j + 1] == mags[i]:
            j += 1
        rank[mags[i]] = (i + j + 2) / 2.0
        i = j + 1
    r = [rank[abs(v)] for v in d]
    total = sum(r)
    w_plus = sum(ri for ri, v in zip(r, d) if v > 0)
    obs = abs(w_plus - total / 2)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum(ri for ri, sg in zip(r, signs) if sg)
        if abs(s - total / 2) >= obs - 1e-9:
            hits += 1
    return hits / 2 ** n


def nearest_rank_quantile(values, q):
    v = sorted(values)
    idx = max(1, math.ceil(q * len(v)))
    return v[idx - 1]


def best_monotone_accuracy(scores, labels, k):
    """Best accuracy of any threshold rule ``label = 1 + #(cuts below score)``.

    Dynamic programme over points sorted by score: labels along the sorted
    order must be nondecreasing. Ties in score are ignored (measure zero
    for continuous data).
    """
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    best = [0] * (k + 1)  # best[c]: most matches so far with current label <= c
    for i in order:
        yi = labels[i]
        run = 0
        new = [0] * (k + 1)
        for c in range(1, k + 1):
            run = max(run, best[c])
            new[c] = run + (1 if yi == c else 0)
        best = new
    return max(best) / len(scores)


def best_linear_accuracy(X, labels, k, angles=360):
    """Direction-grid search over 2-D projections for the best threshold rule."""
    top = 0.0
    for a in range(angles):
        t = 2 * math.pi * a / angles
        c, s = math.cos(t), math.sin(t)
        scores = [c * x[0] + s * x[1] for x in X]
        top = max(top, best_monotone_accuracy(scores, labels, k))
    return top

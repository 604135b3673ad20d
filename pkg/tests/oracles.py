"""Independent reference implementations used as test oracles.

Everything here is deliberately naive: plain Python loops over scalars, no
shared code with the package beyond reading model parameters.
"""

import math
from collections import defaultdict

import numpy as np


def random_graph(rng, n_ent, n_rel, n_facts, cover=True):
    """Random duplicate-free triples; with ``cover`` every entity and
    relation index occurs at least once (when n_facts allows)."""
    seen = set()
    out = []
    if cover:
        ents = list(rng.permutation(n_ent))
        rels = list(rng.permutation(n_rel))
        while (ents or rels) and len(out) < n_facts:
            h = ents.pop() if ents else int(rng.integers(n_ent))
            t = ents.pop() if ents else int(rng.integers(n_ent))
            r = rels.pop() if rels else int(rng.integers(n_rel))
            if (h, r, t) not in seen:
                seen.add((h, r, t))
                out.append((int(h), int(r), int(t)))
    max_facts = n_ent * n_ent * n_rel
    while len(out) < min(n_facts, max_facts):
        tr = (int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent)))
        if tr not in seen:
            seen.add(tr)
            out.append(tr)
    return np.array(out, dtype=np.int64).reshape(-1, 3)


# ---------------------------------------------------------------------------
# scalar scoring


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _row(p, name, i):
    return [float(x) for x in np.ravel(p[name][i])]


def scalar_score(model, h, r, t):
    p = model.params
    kind = model.kind
    if kind == "TransE":
        eh, er, et = _row(p, "ent", h), _row(p, "rel", r), _row(p, "ent", t)
        return -math.sqrt(sum((a + b - c) ** 2 for a, b, c in zip(eh, er, et)))
    if kind == "TransH":
        w = _row(p, "normal", r)

        def proj(x):
            k = _dot(w, x)
            return [xi - k * wi for xi, wi in zip(x, w)]

        ph, pt = proj(_row(p, "ent", h)), proj(_row(p, "ent", t))
        er = _row(p, "rel", r)
        return -sum((a + b - c) ** 2 for a, b, c in zip(ph, er, pt))
    if kind == "TransR":
        M = p["proj"][r]

        def proj(x):
            return [_dot([float(v) for v in M[i]], x) for i in range(M.shape[0])]

        ph, pt = proj(_row(p, "ent", h)), proj(_row(p, "ent", t))
        er = _row(p, "rel", r)
        return -sum((a + b - c) ** 2 for a, b, c in zip(ph, er, pt))
    if kind == "TransD":
        rp = _row(p, "rel_proj", r)
        d_r = len(rp)

        def proj(e):
            x, xp = _row(p, "ent", e), _row(p, "ent_proj", e)
            k = _dot(xp, x)
            # (r_p x_p^T + I) x with I the d_r x d identity
            return [rp[i] * k + (x[i] if i < len(x) else 0.0) for i in range(d_r)]

        ph, pt = proj(h), proj(t)
        er = _row(p, "rel", r)
        return -sum((a + b - c) ** 2 for a, b, c in zip(ph, er, pt))
    if kind == "RESCAL":
        eh, et = _row(p, "ent", h), _row(p, "ent", t)
        M = p["rel"][r]
        return sum(eh[i] * float(M[i, j]) * et[j] for i in range(len(eh)) for j in range(len(et)))
    if kind == "DistMult":
        return sum(a * b * c for a, b, c in zip(_row(p, "ent", h), _row(p, "rel", r), _row(p, "ent", t)))
    if kind == "ComplEx":
        hc = [complex(a, b) for a, b in zip(_row(p, "ent_re", h), _row(p, "ent_im", h))]
        rc = [complex(a, b) for a, b in zip(_row(p, "rel_re", r), _row(p, "rel_im", r))]
        tc = [complex(a, b) for a, b in zip(_row(p, "ent_re", t), _row(p, "ent_im", t))]
        return sum(a * b * c.conjugate() for a, b, c in zip(hc, rc, tc)).real
    raise ValueError(kind)


# ---------------------------------------------------------------------------
# finite differences


def finite_difference_grads(model, f, step=1e-5, rows=None):
    """Central differences of ``f()`` with respect to every parameter entry
    (or, with ``rows[name]``, only the listed rows of ``name``).

    ``f`` may return a vector of terms whose sum is the function of interest.
    The terms are differenced one by one before summing, so terms that do not
    depend on the perturbed entry cancel exactly instead of adding rounding
    noise to the difference."""
    out = {}
    for name, p in model.params.items():
        idx = range(p.shape[0]) if rows is None else rows.get(name, [])
        g = np.zeros_like(p)
        for i in idx:
            flat = p[i].reshape(-1)
            gflat = g[i].reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + step
                fp = f()
                flat[j] = old - step
                fm = f()
                flat[j] = old
                gflat[j] = np.sum(np.subtract(fp, fm)) / (2 * step)
        out[name] = g
    return out


def max_relative_error(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor), initial=0.0))


# ---------------------------------------------------------------------------
# link prediction


def brute_force_ranks(model, triples, known):
    """Double loop over facts and candidate entities, one score_batch call
    per candidate triple. ``known`` is a Python set of true triples."""
    out = {k: [] for k in ("head_raw", "head_filt", "tail_raw", "tail_filt")}
    for h, r, t in (tuple(int(x) for x in tr) for tr in triples):
        for side in ("head", "tail"):
            true_score = model.score_batch([(h, r, t)])[0]
            raw = filt = 1
            for e in range(model.n_ent):
                cand = (e, r, t) if side == "head" else (h, r, e)
                if cand == (h, r, t):
                    continue
                s = model.score_batch([cand])[0]
                if s > true_score:
                    raw += 1
                    if cand not in known:
                        filt += 1
            out[f"{side}_raw"].append(raw)
            out[f"{side}_filt"].append(filt)
    return {k: np.array(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# graph statistics


def count_stats(triples, n_rel):
    tails_of = defaultdict(set)
    heads_of = defaultdict(set)
    count = defaultdict(int)
    for h, r, t in triples:
        count[r] += 1
        heads_of[r].add(h)
        tails_of[r].add(t)
    tph = [count[r] / len(heads_of[r]) if count[r] else 1.0 for r in range(n_rel)]
    hpt = [count[r] / len(tails_of[r]) if count[r] else 1.0 for r in range(n_rel)]
    return tph, hpt


def pairwise_redundancy(triples):
    triples = [tuple(int(x) for x in tr) for tr in triples]
    dup = rev = 0
    for i, (h, r, t) in enumerate(triples):
        if any(h2 == h and t2 == t and r2 != r for h2, r2, t2 in triples):
            dup += 1
        if any(j != i and h2 == t and t2 == h for j, (h2, r2, t2) in enumerate(triples)):
            rev += 1
    return dup / len(triples), rev / len(triples)


# ---------------------------------------------------------------------------
# thresholds


def exhaustive_threshold_accuracy(pos, neg):
    """Best accuracy over every cut between sorted scores and both ends."""
    values = sorted(set(pos) | set(neg))
    cuts = [values[0] - 1.0] + [(a + b) / 2 for a, b in zip(values, values[1:])] + [values[-1] + 1.0]
    best = 0.0
    for c in cuts:
        correct = sum(s > c for s in pos) + sum(s <= c for s in neg)
        best = max(best, correct / (len(pos) + len(neg)))
    return best

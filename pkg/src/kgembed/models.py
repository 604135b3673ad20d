"""Embedding models.

Every model exposes the same four operations used by training and
evaluation:

* ``score_batch`` scores a batch of facts (higher means more plausible),
* ``normalize_parameters`` enforces the model's norm constraints,
* ``lp_prep_cands`` prepares the candidate entity table for a batch,
  projecting it once per distinct relation when the model projects entities,
* ``lp_score_all`` scores every entity as the head (or tail) of each fact.

``grad_batch`` is the analytic backward pass of ``score_batch``. Parameters
are float64 arrays in ``model.params``, each indexed on its first axis by
entity or by relation (see ``model.param_axes``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Model",
    "TransE",
    "TransH",
    "TransR",
    "TransD",
    "RESCAL",
    "DistMult",
    "ComplEx",
    "MODEL_KINDS",
    "Gradients",
    "PreparedCandidates",
    "init_model",
]

# Rows already this close to unit norm are left untouched, which keeps
# normalization idempotent to the last bit.
_UNIT_TOL = 1e-12


def _normalize_rows(x: np.ndarray) -> None:
    norms = np.linalg.norm(x, axis=1)
    fix = (np.abs(norms - 1.0) > _UNIT_TOL) & (norms > 0)
    if fix.any():
        x[fix] /= norms[fix, None]


def _sqdist(queries: np.ndarray, cands: np.ndarray, cand_sq: np.ndarray) -> np.ndarray:
    """Squared euclidean distance between every query row and every candidate row."""
    sq = (queries * queries).sum(axis=1)[:, None] - 2.0 * (queries @ cands.T) + cand_sq[None, :]
    np.maximum(sq, 0.0, out=sq)
    return sq


@dataclass
class Gradients:
    """Row-sparse gradients.

    ``rows[name] = (idx, values)`` where ``idx`` holds the distinct touched
    row indices of parameter ``name`` in increasing order and ``values`` the
    accumulated gradient rows.
    """

    rows: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @classmethod
    def accumulate(cls, contributions) -> "Gradients":
        grouped: dict[str, list] = {}
        for name, idx, values in contributions:
            grouped.setdefault(name, []).append((idx, values))
        rows = {}
        for name, parts in grouped.items():
            idx = np.concatenate([p[0] for p in parts])
            values = np.concatenate([p[1] for p in parts])
            uniq, inv = np.unique(idx, return_inverse=True)
            acc = np.zeros((len(uniq),) + values.shape[1:])
            np.add.at(acc, inv, values)
            rows[name] = (uniq, acc)
        return cls(rows)

    def __getitem__(self, name):
        return self.rows[name]

    def __iter__(self):
        return iter(self.rows)

    def dense(self, model: "Model") -> dict[str, np.ndarray]:
        """Expand to arrays shaped like the model parameters."""
        out = {}
        for name, p in model.params.items():
            g = np.zeros_like(p)
            if name in self.rows:
                idx, values = self.rows[name]
                g[idx] = values
            out[name] = g
        return out


@dataclass
class PreparedCandidates:
    """Candidate representations for one batch.

    ``cands`` is either a single table shared by every fact (models that do
    not project entities; it aliases the entity parameters) or a mapping from
    relation index to the projected entity table for that relation.
    ``heads`` / ``tails`` are the prepared representations of the batch's own
    heads and tails. ``side`` is ``None`` when prepared for both tests.
    """

    batch: np.ndarray
    side: str | None
    cands: object
    cand_sq: object = None
    heads: np.ndarray | None = None
    tails: np.ndarray | None = None

    @property
    def n_projections(self) -> int:
        return len(self.cands) if isinstance(self.cands, dict) else 0


class Model:
    """Base class holding parameters and the shared batch plumbing."""

    kind = "Model"
    # (name, axis, relation_dim?) in declaration order; axis is "ent" or "rel"
    layout: tuple = ()
    constrained = False

    def __init__(self, n_ent: int, n_rel: int, d: int, d_r: int | None = None, seed: int = 0):
        if d_r is None or not self.separate_rel_dim:
            d_r = d
        if min(n_ent, n_rel) < 1:
            raise ValueError("n_ent and n_rel must be >= 1")
        if min(d, d_r) < 1:
            raise ValueError("dimensions must be >= 1")
        self.n_ent, self.n_rel, self.d, self.d_r = int(n_ent), int(n_rel), int(d), int(d_r)
        rng = np.random.default_rng(seed)
        bound = 6.0 / np.sqrt(self.d)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in self.param_shapes().items():
            self.params[name] = rng.uniform(-bound, bound, size=shape)
        self.normalize_parameters()

    separate_rel_dim = False

    @property
    def param_axes(self) -> dict[str, str]:
        return {name: axis for name, axis, _ in self.layout}

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for name, axis, trailing in self.layout:
            rows = self.n_ent if axis == "ent" else self.n_rel
            shapes[name] = (rows,) + tuple(getattr(self, a) for a in trailing)
        return shapes

    # -- batch helpers -----------------------------------------------------

    def _check(self, triples) -> np.ndarray:
        arr = np.asarray(triples, dtype=np.int64)
        if arr.ndim == 1 and arr.shape == (3,):
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"triples must have shape (n, 3), got {arr.shape}")
        if len(arr):
            if arr.min() < 0 or arr[:, [0, 2]].max() >= self.n_ent or arr[:, 1].max() >= self.n_rel:
                raise IndexError("triple index out of range for this model")
        return arr

    def score_batch(self, triples) -> np.ndarray:
        arr = self._check(triples)
        return self._score(arr[:, 0], arr[:, 1], arr[:, 2])

    def grad_batch(self, triples, upstream) -> Gradients:
        """Gradient of ``sum(upstream * score_batch(triples))`` w.r.t. the parameters."""
        arr = self._check(triples)
        up = np.asarray(upstream, dtype=np.float64)
        if up.shape != (len(arr),):
            raise ValueError("upstream must have one entry per triple")
        return Gradients.accumulate(self._grad(arr[:, 0], arr[:, 1], arr[:, 2], up))

    def normalize_parameters(self) -> None:
        pass

    def lp_prep_cands(self, batch, side: str | None = None) -> PreparedCandidates:
        arr = self._check(batch)
        if len(arr) == 0:
            raise ValueError("empty batch")
        if side not in (None, "head", "tail"):
            raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
        return self._prep(arr, side)

    def lp_score_all(self, prepared: PreparedCandidates, batch, side: str) -> np.ndarray:
        """Matrix of shape (batch, n_ent): entry (i, e) scores (e, r_i, t_i) for
        ``side='head'`` or (h_i, r_i, e) for ``side='tail'``."""
        if side not in ("head", "tail"):
            raise ValueError(f"side must be 'head' or 'tail', got {side!r}")
        if prepared.side is not None and prepared.side != side:
            raise ValueError(f"candidates were prepared for the {prepared.side} side, not {side}")
        arr = np.asarray(batch, dtype=np.int64)
        if arr is not prepared.batch and not np.array_equal(arr, prepared.batch):
            raise ValueError("prepared candidates belong to a different batch")
        return self._lp_scores(prepared, side)

    def copy(self) -> "Model":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def __repr__(self) -> str:
        return f"{self.kind}(n_ent={self.n_ent}, n_rel={self.n_rel}, d={self.d}, d_r={self.d_r})"


# ---------------------------------------------------------------------------
# Translation models


class TransE(Model):
    """Score ``-||h + r - t||``; entity vectors kept at unit norm."""

    kind = "TransE"
    layout = (("ent", "ent", ("d",)), ("rel", "rel", ("d",)))
    constrained = True

    def normalize_parameters(self):
        _normalize_rows(self.params["ent"])

    def _score(self, h, r, t):
        E, R = self.params["ent"], self.params["rel"]
        return -np.linalg.norm(E[h] + R[r] - E[t], axis=1)

    def _grad(self, h, r, t, up):
        E, R = self.params["ent"], self.params["rel"]
        u = E[h] + R[r] - E[t]
        norm = np.linalg.norm(u, axis=1)
        scale = np.zeros_like(norm)
        nz = norm > 0
        scale[nz] = -up[nz] / norm[nz]
        g = scale[:, None] * u
        return [("ent", h, g), ("ent", t, -g), ("rel", r, g)]

    def _prep(self, arr, side):
        E = self.params["ent"]
        return PreparedCandidates(
            batch=arr, side=side, cands=E, cand_sq=(E * E).sum(axis=1),
            heads=E[arr[:, 0]], tails=E[arr[:, 2]],
        )

    def _lp_scores(self, prep, side):
        rel = self.params["rel"][prep.batch[:, 1]]
        q = prep.heads + rel if side == "tail" else prep.tails - rel
        return -np.sqrt(_sqdist(q, prep.cands, prep.cand_sq))


class _ProjectedTranslation(Model):
    """Shared machinery for models scoring ``-||p(h) + r - p(t)||^2`` with a
    relation-specific entity projection ``p``."""

    constrained = True

    def normalize_parameters(self):
        _normalize_rows(self.params["ent"])

    def _project_rows(self, ent_idx, rel_idx):
        raise NotImplementedError

    def _project_table(self, rel):
        raise NotImplementedError

    def _score(self, h, r, t):
        u = self._project_rows(h, r) + self.params["rel"][r] - self._project_rows(t, r)
        return -(u * u).sum(axis=1)

    def _prep(self, arr, side):
        cands, cand_sq = {}, {}
        for rel in np.unique(arr[:, 1]).tolist():
            table = self._project_table(rel)
            cands[rel] = table
            cand_sq[rel] = (table * table).sum(axis=1)
        return PreparedCandidates(
            batch=arr, side=side, cands=cands, cand_sq=cand_sq,
            heads=self._project_rows(arr[:, 0], arr[:, 1]),
            tails=self._project_rows(arr[:, 2], arr[:, 1]),
        )

    def _lp_scores(self, prep, side):
        rels = prep.batch[:, 1]
        rel_vec = self.params["rel"][rels]
        q = prep.heads + rel_vec if side == "tail" else prep.tails - rel_vec
        out = np.empty((len(rels), self.n_ent))
        for rel, table in prep.cands.items():
            rows = np.flatnonzero(rels == rel)
            out[rows] = -_sqdist(q[rows], table, prep.cand_sq[rel])
        return out


class TransH(_ProjectedTranslation):
    """Entities projected on a relation hyperplane with normal ``w``:
    ``p(x) = x - (w.x) w``; normals kept at unit norm."""

    kind = "TransH"
    layout = (("ent", "ent", ("d",)), ("rel", "rel", ("d",)), ("normal", "rel", ("d",)))

    def normalize_parameters(self):
        _normalize_rows(self.params["ent"])
        _normalize_rows(self.params["normal"])

    def _project_rows(self, ent_idx, rel_idx):
        x = self.params["ent"][ent_idx]
        w = self.params["normal"][rel_idx]
        return x - (x * w).sum(axis=1, keepdims=True) * w

    def _project_table(self, rel):
        E = self.params["ent"]
        w = self.params["normal"][rel]
        return E - np.outer(E @ w, w)

    def _grad(self, h, r, t, up):
        E, W = self.params["ent"], self.params["normal"]
        w = W[r]
        delta = E[h] - E[t]
        a = (w * delta).sum(axis=1, keepdims=True)
        u = delta - a * w + self.params["rel"][r]
        g = -2.0 * up[:, None] * u
        gw = (g * w).sum(axis=1, keepdims=True)
        gh = g - gw * w
        return [
            ("ent", h, gh), ("ent", t, -gh), ("rel", r, g),
            ("normal", r, -gw * delta - a * g),
        ]


class TransR(_ProjectedTranslation):
    """Entities mapped to relation space by a matrix: ``p(x) = M_r x``."""

    kind = "TransR"
    separate_rel_dim = True
    layout = (("ent", "ent", ("d",)), ("rel", "rel", ("d_r",)), ("proj", "rel", ("d_r", "d")))

    def _project_rows(self, ent_idx, rel_idx):
        return np.einsum("bij,bj->bi", self.params["proj"][rel_idx], self.params["ent"][ent_idx])

    def _project_table(self, rel):
        return self.params["ent"] @ self.params["proj"][rel].T

    def _grad(self, h, r, t, up):
        E, M = self.params["ent"], self.params["proj"]
        Mr = M[r]
        delta = E[h] - E[t]
        u = np.einsum("bij,bj->bi", Mr, delta) + self.params["rel"][r]
        g = -2.0 * up[:, None] * u
        gh = np.einsum("bij,bi->bj", Mr, g)
        return [
            ("ent", h, gh), ("ent", t, -gh), ("rel", r, g),
            ("proj", r, g[:, :, None] * delta[:, None, :]),
        ]


class TransD(_ProjectedTranslation):
    """Dynamic mapping ``p(x) = (r_p x_p^T + I) x`` with per-entity and
    per-relation projection vectors; ``I`` is the rectangular identity."""

    kind = "TransD"
    separate_rel_dim = True
    layout = (
        ("ent", "ent", ("d",)), ("ent_proj", "ent", ("d",)),
        ("rel", "rel", ("d_r",)), ("rel_proj", "rel", ("d_r",)),
    )

    def _resize(self, x):
        """Apply the (d_r x d) identity to the rows of ``x`` (or its transpose
        when ``x`` has d_r columns)."""
        n_in = x.shape[1]
        n_out = self.d_r if n_in == self.d else self.d
        if n_in >= n_out:
            return x[:, :n_out]
        return np.concatenate([x, np.zeros((x.shape[0], n_out - n_in))], axis=1)

    def _project_rows(self, ent_idx, rel_idx):
        x = self.params["ent"][ent_idx]
        xp = self.params["ent_proj"][ent_idx]
        rp = self.params["rel_proj"][rel_idx]
        return rp * (xp * x).sum(axis=1, keepdims=True) + self._resize(x)

    def _project_table(self, rel):
        E, Ep = self.params["ent"], self.params["ent_proj"]
        return np.outer((Ep * E).sum(axis=1), self.params["rel_proj"][rel]) + self._resize(E)

    def _resize_back(self, g):
        if self.d >= self.d_r:
            return np.concatenate([g, np.zeros((g.shape[0], self.d - self.d_r))], axis=1)
        return g[:, : self.d]

    def _grad(self, h, r, t, up):
        E, Ep = self.params["ent"], self.params["ent_proj"]
        rp = self.params["rel_proj"][r]
        eh, et, ph, pt = E[h], E[t], Ep[h], Ep[t]
        dot_h = (ph * eh).sum(axis=1, keepdims=True)
        dot_t = (pt * et).sum(axis=1, keepdims=True)
        u = rp * (dot_h - dot_t) + self._resize(eh) - self._resize(et) + self.params["rel"][r]
        g = -2.0 * up[:, None] * u
        grp = (rp * g).sum(axis=1, keepdims=True)
        back = self._resize_back(g)
        return [
            ("ent", h, ph * grp + back), ("ent", t, -(pt * grp + back)),
            ("ent_proj", h, eh * grp), ("ent_proj", t, -et * grp),
            ("rel", r, g), ("rel_proj", r, g * (dot_h - dot_t)),
        ]


# ---------------------------------------------------------------------------
# Bilinear models


class _Bilinear(Model):
    def _prep(self, arr, side):
        E = self.params["ent"]
        return PreparedCandidates(batch=arr, side=side, cands=E, heads=E[arr[:, 0]], tails=E[arr[:, 2]])

    def _lp_scores(self, prep, side):
        return self._query(prep, side) @ prep.cands.T


class RESCAL(_Bilinear):
    """Score ``h^T M_r t`` with a full matrix per relation."""

    kind = "RESCAL"
    layout = (("ent", "ent", ("d",)), ("rel", "rel", ("d", "d")))

    def _score(self, h, r, t):
        E = self.params["ent"]
        return np.einsum("bi,bij,bj->b", E[h], self.params["rel"][r], E[t])

    def _grad(self, h, r, t, up):
        E, M = self.params["ent"], self.params["rel"]
        eh, et, Mr = E[h], E[t], M[r]
        return [
            ("ent", h, up[:, None] * np.einsum("bij,bj->bi", Mr, et)),
            ("ent", t, up[:, None] * np.einsum("bi,bij->bj", eh, Mr)),
            ("rel", r, up[:, None, None] * eh[:, :, None] * et[:, None, :]),
        ]

    def _query(self, prep, side):
        Mr = self.params["rel"][prep.batch[:, 1]]
        if side == "tail":
            return np.einsum("bi,bij->bj", prep.heads, Mr)
        return np.einsum("bij,bj->bi", Mr, prep.tails)


class DistMult(_Bilinear):
    """Score ``sum_i h_i r_i t_i``."""

    kind = "DistMult"
    layout = (("ent", "ent", ("d",)), ("rel", "rel", ("d",)))

    def _score(self, h, r, t):
        E = self.params["ent"]
        return (E[h] * self.params["rel"][r] * E[t]).sum(axis=1)

    def _grad(self, h, r, t, up):
        E, R = self.params["ent"], self.params["rel"]
        eh, er, et = E[h], R[r], E[t]
        u = up[:, None]
        return [("ent", h, u * er * et), ("ent", t, u * eh * er), ("rel", r, u * eh * et)]

    def _query(self, prep, side):
        rel = self.params["rel"][prep.batch[:, 1]]
        return prep.heads * rel if side == "tail" else rel * prep.tails


class ComplEx(_Bilinear):
    """Score ``Re(sum_i h_i r_i conj(t_i))`` with complex embeddings stored as
    separate real and imaginary tables."""

    kind = "ComplEx"
    layout = (
        ("ent_re", "ent", ("d",)), ("ent_im", "ent", ("d",)),
        ("rel_re", "rel", ("d",)), ("rel_im", "rel", ("d",)),
    )

    def _parts(self, h, r, t):
        p = self.params
        return (p["ent_re"][h], p["ent_im"][h], p["rel_re"][r], p["rel_im"][r],
                p["ent_re"][t], p["ent_im"][t])

    def _score(self, h, r, t):
        hr, hi, rr, ri, tr, ti = self._parts(h, r, t)
        return ((hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti).sum(axis=1)

    def _grad(self, h, r, t, up):
        hr, hi, rr, ri, tr, ti = self._parts(h, r, t)
        u = up[:, None]
        return [
            ("ent_re", h, u * (tr * rr + ti * ri)), ("ent_im", h, u * (ti * rr - tr * ri)),
            ("rel_re", r, u * (tr * hr + ti * hi)), ("rel_im", r, u * (ti * hr - tr * hi)),
            ("ent_re", t, u * (hr * rr - hi * ri)), ("ent_im", t, u * (hr * ri + hi * rr)),
        ]

    def _prep(self, arr, side):
        p = self.params
        h, t = arr[:, 0], arr[:, 2]
        return PreparedCandidates(
            batch=arr, side=side, cands=np.concatenate([p["ent_re"], p["ent_im"]], axis=1),
            heads=np.concatenate([p["ent_re"][h], p["ent_im"][h]], axis=1),
            tails=np.concatenate([p["ent_re"][t], p["ent_im"][t]], axis=1),
        )

    def _query(self, prep, side):
        r = prep.batch[:, 1]
        rr, ri = self.params["rel_re"][r], self.params["rel_im"][r]
        if side == "tail":
            hr, hi = np.split(prep.heads, 2, axis=1)
            return np.concatenate([hr * rr - hi * ri, hr * ri + hi * rr], axis=1)
        tr, ti = np.split(prep.tails, 2, axis=1)
        return np.concatenate([rr * tr + ri * ti, rr * ti - ri * tr], axis=1)


MODEL_KINDS: dict[str, type[Model]] = {
    cls.kind: cls for cls in (TransE, TransH, TransR, TransD, RESCAL, DistMult, ComplEx)
}


def init_model(kind: str, n_ent: int, n_rel: int, d: int, d_r: int | None = None, seed: int = 0) -> Model:
    """Create a model with entries drawn uniformly in ``[-6/sqrt(d), 6/sqrt(d)]``
    and then normalized. ``d_r`` is only used by TransR and TransD."""
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}") from None
    return cls(n_ent, n_rel, d, d_r, seed)

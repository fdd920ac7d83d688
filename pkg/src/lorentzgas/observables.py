"""Cell observables, normalization sequences and additive-functional sums."""
from dataclasses import dataclass, field

import numpy as np

NULL_SUM_TOL = 1e-12


def _cell(c):
    return tuple(int(x) for x in np.atleast_1d(c))


@dataclass(frozen=True)
class ObservableSpec:
    """Finitely supported ``beta: Z^d -> R``, constant on each cell.

    ``eta`` is the exponent used for the weighted summability norm
    ``sum (1 + |l|)^eta |beta_l|`` reported alongside results.
    """

    beta: dict
    eta: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        beta = {_cell(k): float(v) for k, v in dict(self.beta).items()}
        dims = {len(k) for k in beta}
        if len(dims) > 1:
            raise ValueError("cells of mixed dimension")
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self):
        return len(next(iter(self.beta))) if self.beta else None

    @property
    def total(self):
        return float(sum(self.beta.values()))

    @property
    def null_sum(self):
        return abs(self.total) <= NULL_SUM_TOL

    @property
    def eta_weight_norm(self):
        return float(sum((1 + np.linalg.norm(k)) ** self.eta * abs(v) for k, v in self.beta.items()))

    @classmethod
    def local_time(cls, d, cell=None):
        return cls({cell or (0,) * d: 1.0}, name="local_time")

    @classmethod
    def difference(cls, a, b):
        """``delta_a - delta_b``: collisions in cell ``a`` minus those in ``b``."""
        a, b = _cell(a), _cell(b)
        if a == b:
            return cls({a: 0.0}, name="zero")
        label = "_".join(",".join(map(str, c)) for c in (a, b))
        return cls({a: 1.0, b: -1.0}, name=f"diff_{label}")

    @classmethod
    def from_config(cls, entries, eta=0.0, name=""):
        """Build from ``[{cell: [...], value: ...}, ...]``; repeated cells add up."""
        beta = {}
        for e in entries:
            unknown = set(e) - {"cell", "value"}
            if unknown:
                raise ValueError(f"unknown observable field(s): {sorted(unknown)}")
            c = _cell(e["cell"])
            beta[c] = beta.get(c, 0.0) + float(e["value"])
        return cls(beta, eta=eta, name=name)

    def to_config(self):
        return [{"cell": list(k), "value": v} for k, v in sorted(self.beta.items())]


KINDS = ("billiard_log", "pure_power")


@dataclass(frozen=True)
class NormalizationSeq:
    """``a_k = max(1, sqrt(k log k))`` or ``a_k = c k^(1/alpha)``.

    The logarithm is natural.  ``A_n = sum_{k=1}^n a_k^(-d)``.
    """

    d: int
    alpha: float = 2.0
    kind: str = "billiard_log"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if not self.d <= self.alpha <= 2:
            raise ValueError("alpha must lie in [d, 2]")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def a(self, k):
        k = np.asarray(k, dtype=np.float64)
        if np.any(k < 1):
            raise ValueError("k must be >= 1")
        if self.kind == "billiard_log":
            return np.maximum(1.0, np.sqrt(k * np.log(k)))
        return self.c * k ** (1.0 / self.alpha)

    def A(self, n):
        """Prefix sums ``A_n`` (scalar or array of ``n``)."""
        n_arr = np.atleast_1d(np.asarray(n, dtype=np.int64))
        if np.any(n_arr < 1):
            raise ValueError("n must be >= 1")
        out = np.empty(len(n_arr))
        order = np.argsort(n_arr)
        acc, done = 0.0, 0
        chunk = 1 << 20
        for idx in order:
            target = int(n_arr[idx])
            while done < target:
                hi = min(target, done + chunk)
                acc += float(np.sum(self.a(np.arange(done + 1, hi + 1)) ** (-self.d)))
                done = hi
            out[idx] = acc
        return out if np.ndim(n) else float(out[0])

    def A_table(self, n):
        """``A_1..A_n`` as an array (index 0 is ``A_1``)."""
        return np.cumsum(self.a(np.arange(1, n + 1)) ** (-self.d))

    def asymptote(self, n):
        """Leading-order equivalent of ``A_n``."""
        n = np.asarray(n, dtype=np.float64)
        if self.kind == "billiard_log":
            return 2 * np.sqrt(n / np.log(n)) if self.d == 1 else np.log(np.log(n))
        if self.alpha == self.d:
            return self.c ** (-self.d) * np.log(n)
        expo = 1 - self.d / self.alpha
        return self.c ** (-self.d) * n ** expo / expo


def a_seq(seq, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(seq.a(k))


def A_seq(seq, n):
    return seq.A(n)


def _positions(path):
    if hasattr(path, "cells"):
        path = path.cells
    p = np.asarray(path, dtype=np.int64)
    return p[:, None] if p.ndim == 1 else p


def observable_values(path, spec):
    """``beta`` evaluated along a path of cells (one value per state)."""
    pos = _positions(path)
    vals = np.zeros(len(pos))
    for cell, v in spec.beta.items():
        if len(cell) != pos.shape[1]:
            raise ValueError("observable and path dimensions differ")
        vals[np.all(pos == np.asarray(cell), axis=1)] += v
    return vals


def accumulate(path, spec, checkpoints):
    """Partial sums ``sum_{k < c} beta(S_k)`` at each checkpoint ``c``.

    ``path`` is a :class:`~lorentzgas.billiard.TrajectoryRecord` (its cells
    are used) or an array of lattice positions.
    """
    cps = np.asarray(checkpoints, dtype=np.int64)
    vals = observable_values(path, spec)
    if np.any(np.diff(cps) < 0):
        raise ValueError("checkpoints must be sorted")
    if len(cps) and (cps[0] < 0 or cps[-1] > len(vals)):
        raise ValueError("checkpoint beyond path length")
    csum = np.concatenate([[0.0], np.cumsum(vals)])
    return csum[cps]


def normalized_stat(raw, seq, checkpoints=None, mode="integrable", spec=None):
    """Divide raw sums by ``A_n`` (integrable) or ``sqrt(A_n)`` (null_sum).

    ``seq`` is a :class:`NormalizationSeq` evaluated at ``checkpoints``, or
    the value(s) of ``A_n`` directly.
    """
    if mode not in ("integrable", "null_sum"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "null_sum" and (spec is None or not spec.null_sum):
        raise ValueError("null_sum normalization needs an observable with sum(beta) == 0")
    A = seq.A(checkpoints) if isinstance(seq, NormalizationSeq) else np.asarray(seq, dtype=np.float64)
    raw = np.asarray(raw, dtype=np.float64)
    out = raw / A if mode == "integrable" else raw / np.sqrt(A)
    return float(out) if out.ndim == 0 else out


def comparison_sums(seq, n, eps=0.25):
    """Partial sums behind the appendix normalization estimates.

    With ``eta = (alpha - d + eps) / 2`` returns
    ``sum a_k^(-d-2 eta)`` (bounded) and
    ``sum a_k^(-d-eta) / sqrt(A_n)`` (tends to 0), for each ``n`` given.
    """
    eta = (seq.alpha - seq.d + eps) / 2
    ns = np.atleast_1d(n)
    top = int(ns.max())
    a = seq.a(np.arange(1, top + 1))
    s2 = np.cumsum(a ** (-seq.d - 2 * eta))
    s1 = np.cumsum(a ** (-seq.d - eta))
    A = np.cumsum(a ** (-seq.d))
    idx = ns - 1
    return s2[idx], s1[idx] / np.sqrt(A[idx])

"""LePage series for symmetric alpha-stable random measures.

A realisation is the triple of sequences (rho_k, Gamma_k, V_k): fair signs,
Poisson arrival times and uniform points on a box E.  Everything else
(random measures of sets, stochastic integrals, random fields) is a
deterministic, truncated series over one such realisation:

    (C_alpha |E|)^(1/alpha) * sum_k rho_k Gamma_k^(-1/alpha) f(V_k)

Boxes are half-open, (lower, upper], and atoms are drawn in (lower, upper]
so that an atom never sits on the lower face of the domain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .stable import c_alpha

__all__ = [
    "Box",
    "ArrivalSequence",
    "LePageState",
    "draw_arrivals",
    "draw_lepage_state",
    "random_measure",
    "stochastic_integral",
    "lepage_field",
    "series_tail",
    "truncation_diagnostic",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned half-open box (lower, upper] in R^d."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("lower and upper corners differ in dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d: int) -> "Box":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.clip(np.subtract(self.upper, self.lower), 0.0, None)))

    @property
    def is_empty(self) -> bool:
        return any(h <= l for l, h in zip(self.lower, self.upper))

    def indicator(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts > lo) & (pts <= hi), axis=1)

    def contains_box(self, other: "Box") -> bool:
        if other.is_empty:
            return True
        return all(ol >= l for ol, l in zip(other.lower, self.lower)) and all(
            oh <= h for oh, h in zip(other.upper, self.upper)
        )


Region = Union[Box, Sequence[Box]]


def _as_boxes(region: Region) -> list:
    if isinstance(region, Box):
        return [region]
    return list(region)


@dataclass(frozen=True)
class ArrivalSequence:
    """Arrival times Gamma_k of a rate-one Poisson process, kept with their spacings."""

    spacings: np.ndarray

    def __post_init__(self):
        sp = np.asarray(self.spacings, dtype=float).ravel()
        if sp.size and not np.all(sp > 0):
            raise ValueError("Poisson spacings must be strictly positive")
        sp.setflags(write=False)
        object.__setattr__(self, "spacings", sp)

    @classmethod
    def from_spacings(cls, spacings) -> "ArrivalSequence":
        return cls(np.asarray(spacings, dtype=float))

    @cached_property
    def gammas(self) -> np.ndarray:
        g = np.cumsum(self.spacings)
        g.setflags(write=False)
        return g

    def __len__(self) -> int:
        return self.spacings.size


def draw_arrivals(n: int, rng: np.random.Generator) -> ArrivalSequence:
    if n < 1:
        raise ValueError("need at least one arrival")
    return ArrivalSequence(rng.standard_exponential(int(n)))


@dataclass(frozen=True, eq=False)
class LePageState:
    """One realisation of the latent LePage sequences, truncated at n_terms."""

    alpha: float
    domain: Box
    rhos: np.ndarray
    arrivals: ArrivalSequence
    vs: np.ndarray
    seed: object = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"LePage series need alpha in (0, 2), got {self.alpha}")
        if self.domain.volume <= 0.0:
            raise ValueError("domain box has zero volume")
        rhos = np.asarray(self.rhos, dtype=float).ravel()
        vs = np.asarray(self.vs, dtype=float).reshape(-1, self.domain.dim)
        if not (rhos.size == len(self.arrivals) == vs.shape[0]):
            raise ValueError("rhos, arrivals and points must have equal length")
        if not np.all(np.abs(rhos) == 1.0):
            raise ValueError("rhos must be +1 or -1")
        if vs.shape[0] and not np.all(self.domain.indicator(vs)):
            raise ValueError("every atom V_k must lie in the domain")
        rhos.setflags(write=False)
        vs.setflags(write=False)
        object.__setattr__(self, "rhos", rhos)
        object.__setattr__(self, "vs", vs)

    @property
    def n_terms(self) -> int:
        return self.rhos.size

    @property
    def d(self) -> int:
        return self.domain.dim

    @cached_property
    def scale(self) -> float:
        """(C_alpha |E|)^(1/alpha)."""
        return (c_alpha(self.alpha) * self.domain.volume) ** (1.0 / self.alpha)

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-atom series coefficients (C_alpha |E|)^(1/alpha) rho_k Gamma_k^(-1/alpha)."""
        w = self.scale * self.rhos * self.arrivals.gammas ** (-1.0 / self.alpha)
        w.setflags(write=False)
        return w

    def truncate(self, n: int) -> "LePageState":
        """Keep the first n terms.  n = 0 gives the empty (zero) series."""
        if not 0 <= n <= self.n_terms:
            raise ValueError(f"cannot truncate {self.n_terms} terms to {n}")
        return LePageState(
            self.alpha,
            self.domain,
            self.rhos[:n],
            ArrivalSequence(self.arrivals.spacings[:n]),
            self.vs[:n],
            self.seed,
        )

    def with_rhos(self, rhos) -> "LePageState":
        return LePageState(self.alpha, self.domain, rhos, self.arrivals, self.vs, self.seed)

    def negated(self) -> "LePageState":
        return self.with_rhos(-self.rhos)

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "domain": {"lower": list(self.domain.lower), "upper": list(self.domain.upper)},
            "rhos": [int(r) for r in self.rhos],
            "spacings": self.arrivals.spacings.tolist(),
            "vs": self.vs.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LePageState":
        dom = Box(tuple(data["domain"]["lower"]), tuple(data["domain"]["upper"]))
        return cls(
            float(data["alpha"]),
            dom,
            np.asarray(data["rhos"], dtype=float),
            ArrivalSequence(np.asarray(data["spacings"], dtype=float)),
            np.asarray(data["vs"], dtype=float).reshape(-1, dom.dim),
            data.get("seed"),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "LePageState":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def draw_lepage_state(
    alpha: float, domain: Box, n: int, rng: np.random.Generator, seed=None
) -> LePageState:
    """Draw arrivals, uniform atoms on the domain and fair signs.

    Each component comes from its own child stream, so the first k terms of
    an n-term draw coincide with a k-term draw from the same generator state.
    """
    if domain.volume <= 0.0:
        raise ValueError("domain box has zero volume")
    if n < 1:
        raise ValueError("need at least one term")
    g_arr, g_pts, g_sgn = rng.spawn(3)
    arrivals = draw_arrivals(n, g_arr)
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    # 1 - U lies in (0, 1], keeping atoms inside the half-open box
    vs = lo + (hi - lo) * (1.0 - g_pts.random((n, domain.dim)))
    rhos = np.where(g_sgn.random(n) < 0.5, 1.0, -1.0)
    return LePageState(float(alpha), domain, rhos, arrivals, vs, seed)


def random_measure(state: LePageState, region: Region) -> float:
    """M(A) for A a box or a finite union of boxes inside the domain."""
    boxes = _as_boxes(region)
    mask = np.zeros(state.n_terms, dtype=bool)
    for box in boxes:
        if box.dim != state.d:
            raise ValueError("region dimension does not match the domain")
        if not state.domain.contains_box(box):
            raise ValueError(f"region {box} is not contained in the domain {state.domain}")
        if not box.is_empty:
            mask |= box.indicator(state.vs)
    return math.fsum(state.weights[mask])


def stochastic_integral(state: LePageState, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Truncated series for the integral of f against M.

    ``f`` receives the atom array of shape (n_terms, d) and returns n_terms values.
    """
    if state.n_terms == 0:
        return 0.0
    vals = np.asarray(f(state.vs), dtype=float).reshape(-1)
    if vals.size != state.n_terms:
        raise ValueError("f must return one value per atom")
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"f is not finite at atom k={k}, V_k={state.vs[k].tolist()}")
    return math.fsum(state.weights * vals)


def lepage_field(
    state: LePageState,
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    eval_points,
    chunk: int = 2048,
) -> np.ndarray:
    """Evaluate sum_k w_k kernel(x, V_k) at each evaluation point.

    ``kernel(x, v)`` is called with broadcastable arrays of shape (m, 1, d)
    and (1, n, d) and must return an (m, n) array.
    """
    pts = np.asarray(eval_points, dtype=float).reshape(-1, state.d)
    out = np.zeros(pts.shape[0])
    if state.n_terms == 0:
        return out
    v = state.vs[None, :, :]
    for start in range(0, pts.shape[0], chunk):
        block = pts[start : start + chunk, None, :]
        kv = np.asarray(kernel(block, v), dtype=float)
        out[start : start + chunk] = kv @ state.weights
    return out


def series_tail(arrivals: ArrivalSequence, kappa: float, start: int) -> float:
    """Numeric tail sum_{k > start} Gamma_k^(-kappa) over the stored arrivals."""
    return math.fsum(arrivals.gammas[start:] ** (-kappa))


def truncation_diagnostic(state: LePageState) -> float:
    """Heuristic tail weight Gamma_N^(-1/alpha) * N of a truncated series."""
    n = state.n_terms
    if n == 0:
        return 0.0
    return float(state.arrivals.gammas[-1] ** (-1.0 / state.alpha) * n)

"""Linear-Gaussian inverse problem on stable sheets.

The data model is y = L u + eta with eta ~ N(0, Sigma), L linear with k
outputs, and the prior on u an alpha-stable sheet in either the increment
or the LePage representation.  The negative log-likelihood is

    Phi(u, y) = 1/2 (y - Lu)^T Sigma^-1 (y - Lu).

Every forward operator is stored in a form that gives Lu in O(k) per latent
coordinate:

* on a grid sheet, ``increment_matrix(N)`` is the (k, N^d) matrix B with
  Lu = B @ increments.ravel();
* on a LePage state, ``lepage_response(V)`` is the (n, k) matrix R with
  Lu = weights @ R.

Pointwise observation uses the evaluation rule of ``eval_piecewise`` on
grids and the exact indicator 1{V_k <= x} on LePage states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from ..lepage import Box, LePageState, draw_lepage_state
from ..sheet import MAX_DIM, GridSheet, grid_index, sample_increments
from ..stable import StableParams, sample_stable

__all__ = [
    "SpecError",
    "ForwardOp",
    "Observation",
    "PriorConfig",
    "PosteriorSpec",
    "ndll",
    "ndll_from_lu",
    "MAX_CONDITION",
]

MAX_CONDITION = 1e12
KINDS = ("pointwise", "convolution", "matrix", "zero")
REPRESENTATIONS = ("increments", "lepage")


class SpecError(ValueError):
    """Invalid posterior specification; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _reverse_cumsum(a: np.ndarray, axes) -> np.ndarray:
    out = a
    for ax in axes:
        out = np.flip(np.cumsum(np.flip(out, axis=ax), axis=ax), axis=ax)
    return out


@dataclass(frozen=True, eq=False)
class ForwardOp:
    """Linear observation map L from sheets to R^k.

    Use the constructors :meth:`pointwise`, :meth:`convolution`,
    :meth:`explicit` and :meth:`zero`.  Matrix-type operators act on the
    flattened (row-major) cell values U^N of a grid with ``n_cells`` cells
    per axis.
    """

    kind: str
    k: int
    d: int
    points: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    n_cells: Optional[int] = None
    taps: Optional[np.ndarray] = None
    positions: Optional[np.ndarray] = None

    @classmethod
    def pointwise(cls, points) -> "ForwardOp":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (k, d) array")
        if np.any(pts < 0) or np.any(pts > 1):
            raise ValueError("observation points must lie in [0, 1]^d")
        return cls("pointwise", pts.shape[0], pts.shape[1], points=pts)

    @classmethod
    def explicit(cls, matrix, d: int = 1) -> "ForwardOp":
        mat = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = round(mat.shape[1] ** (1.0 / d))
        if n**d != mat.shape[1]:
            raise ValueError(f"matrix has {mat.shape[1]} columns, not N^{d} for any N")
        return cls("matrix", mat.shape[0], d, matrix=mat, n_cells=n)

    @classmethod
    def convolution(cls, taps, positions, n_cells: int) -> "ForwardOp":
        """(Lu)_j = sum_l taps[l] * u_cell[positions[j] - l], zero outside the grid (d = 1)."""
        taps = np.asarray(taps, dtype=float).ravel()
        pos = np.asarray(positions, dtype=int).ravel()
        if taps.size == 0 or pos.size == 0:
            raise ValueError("convolution needs taps and output positions")
        if np.any(pos < 0) or np.any(pos >= n_cells):
            raise ValueError("output positions must index cells 0..N-1")
        mat = np.zeros((pos.size, n_cells))
        for j, c in enumerate(pos):
            for l, t in enumerate(taps):
                if 0 <= c - l < n_cells:
                    mat[j, c - l] += t
        return cls("convolution", pos.size, 1, matrix=mat, n_cells=n_cells, taps=taps, positions=pos)

    @classmethod
    def zero(cls, k: int, d: int = 1) -> "ForwardOp":
        if k < 1:
            raise ValueError("need at least one output")
        return cls("zero", int(k), int(d))

    # -- application -------------------------------------------------------

    def increment_matrix(self, n_cells: int) -> np.ndarray:
        """B of shape (k, N^d) with Lu = B @ increments.ravel() on an N-cell grid."""
        d = self.d
        if self.kind == "zero":
            return np.zeros((self.k, n_cells**d))
        if self.kind == "pointwise":
            m = grid_index(self.points, n_cells)
            cells = np.indices((n_cells,) * d).reshape(d, -1).T + 1
            return np.all(cells[None, :, :] <= m[:, None, :], axis=-1).astype(float)
        self._check_grid(n_cells)
        rows = self.matrix.reshape((self.k,) + (n_cells,) * d)
        return _reverse_cumsum(rows, range(1, d + 1)).reshape(self.k, -1)

    def lepage_response(self, vs: np.ndarray) -> np.ndarray:
        """R of shape (n, k): contribution of a unit-weight atom at each V_k."""
        vs = np.asarray(vs, dtype=float).reshape(-1, self.d)
        if self.kind == "zero":
            return np.zeros((vs.shape[0], self.k))
        if self.kind == "pointwise":
            return np.all(vs[:, None, :] <= self.points[None, :, :], axis=-1).astype(float)
        b = self._increment_cache()
        cell = grid_index(vs, self.n_cells) - 1
        flat = np.ravel_multi_index(tuple(cell.T), (self.n_cells,) * self.d)
        return b[:, flat].T

    def _increment_cache(self) -> np.ndarray:
        cached = self.__dict__.get("_b")
        if cached is None:
            cached = self.increment_matrix(self.n_cells)
            object.__setattr__(self, "_b", cached)
        return cached

    def _check_grid(self, n_cells: int) -> None:
        if self.n_cells is not None and n_cells != self.n_cells:
            raise ValueError(f"operator is defined on N={self.n_cells}, got N={n_cells}")

    def __call__(self, u) -> np.ndarray:
        if isinstance(u, LePageState):
            if u.d != self.d:
                raise ValueError("state dimension does not match the operator")
            if u.n_terms == 0:
                return np.zeros(self.k)
            return u.weights @ self.lepage_response(u.vs)
        if isinstance(u, GridSheet):
            if u.d != self.d:
                raise ValueError("sheet dimension does not match the operator")
            if self.kind == "zero":
                return np.zeros(self.k)
            if self.kind == "pointwise":
                return u.values[tuple(grid_index(self.points, u.n_cells).T)]
            self._check_grid(u.n_cells)
            return self.matrix @ u.cell_values.ravel()
        raise TypeError(f"cannot apply the forward map to {type(u).__name__}")

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "pointwise":
            out["points"] = self.points.tolist()
        elif self.kind == "matrix":
            out.update(matrix=self.matrix.tolist(), d=self.d)
        elif self.kind == "convolution":
            out.update(taps=self.taps.tolist(), positions=self.positions.tolist(), n_cells=self.n_cells)
        else:
            out.update(k=self.k, d=self.d)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ForwardOp":
        kind = data.get("kind")
        if kind == "pointwise":
            return cls.pointwise(data["points"])
        if kind == "matrix":
            return cls.explicit(data["matrix"], int(data.get("d", 1)))
        if kind == "convolution":
            return cls.convolution(data["taps"], data["positions"], int(data["n_cells"]))
        if kind == "zero":
            return cls.zero(int(data["k"]), int(data.get("d", 1)))
        raise ValueError(f"unknown forward kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class Observation:
    """Data y with SPD noise covariance; a 1-D ``sigma_cov`` is read as a diagonal."""

    y: np.ndarray
    sigma_cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        cov = np.asarray(self.sigma_cov, dtype=float)
        if cov.ndim == 0:
            cov = np.full(y.size, float(cov))
        if cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (y.size, y.size):
            raise ValueError(f"covariance shape {cov.shape} does not match k={y.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * np.abs(cov).max()):
            raise ValueError("noise covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("noise covariance is not positive definite") from exc
        cond = np.linalg.cond(cov)
        if not cond <= MAX_CONDITION:
            raise ValueError(f"noise covariance is ill-conditioned (cond = {cond:.3g})")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma_cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def k(self) -> int:
        return self.y.size

    def whiten(self, r) -> np.ndarray:
        """Sigma^(-1/2) r along the last axis, so |whiten(r)|^2 = r^T Sigma^-1 r."""
        r = np.asarray(r, dtype=float)
        flat = r.reshape(-1, self.k).T
        return solve_triangular(self.chol, flat, lower=True).T.reshape(r.shape)

    def with_y(self, y) -> "Observation":
        return Observation(np.asarray(y, dtype=float), self.sigma_cov)

    def scaled(self, factor: float) -> "Observation":
        return Observation(self.y, self.sigma_cov * factor)


def ndll_from_lu(lu, obs: Observation, y=None) -> np.ndarray:
    """Phi for one or many forward values ``lu`` of shape (..., k)."""
    y = obs.y if y is None else np.asarray(y, dtype=float)
    r = obs.whiten(y - np.asarray(lu, dtype=float))
    return 0.5 * np.sum(r * r, axis=-1)


def ndll(u, obs: Observation, forward: ForwardOp) -> float:
    """Phi(u, y) = 1/2 |y - Lu|^2_Sigma."""
    lu = forward(u)
    if lu.shape != obs.y.shape:
        raise ValueError(f"forward map has {lu.size} outputs, data has {obs.k}")
    return float(ndll_from_lu(lu, obs))


@dataclass(frozen=True)
class PriorConfig:
    """Sheet prior: alpha, d and a representation with its size parameter."""

    alpha: float
    d: int
    representation: str = "increments"
    resolution: Optional[int] = None
    truncation: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        errs = self.problems()
        if errs:
            raise SpecError(errs)

    def problems(self) -> list:
        errs = []
        if not 0.0 < self.alpha <= 2.0:
            errs.append(f"prior.alpha must lie in (0, 2], got {self.alpha}")
        if not 1 <= self.d <= MAX_DIM:
            errs.append(f"prior.d must lie in 1..{MAX_DIM}, got {self.d}")
        if self.representation not in REPRESENTATIONS:
            errs.append(f"prior.representation must be one of {REPRESENTATIONS}")
        elif self.representation == "increments":
            if not self.resolution or self.resolution < 1:
                errs.append("increments prior needs a positive prior.resolution")
        else:
            if not self.truncation or self.truncation < 1:
                errs.append("lepage prior needs a positive prior.truncation")
            if self.alpha >= 2.0:
                errs.append("lepage prior needs alpha < 2")
        return errs

    @property
    def is_lepage(self) -> bool:
        return self.representation == "lepage"

    def draw(self, rng: np.random.Generator):
        if self.is_lepage:
            return draw_lepage_state(self.alpha, Box.unit(self.d), self.truncation, rng)
        return sample_increments(self.alpha, self.resolution, self.d, rng)

    def draw_increments(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n flattened increment fields, shape (n, N^d)."""
        h = 1.0 / self.resolution
        params = StableParams(self.alpha, h ** (self.d / self.alpha))
        return sample_stable(params, rng, size=(n, self.resolution**self.d))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "d": self.d,
            "representation": self.representation,
            "resolution": self.resolution,
            "truncation": self.truncation,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class PosteriorSpec:
    prior: PriorConfig
    forward: ForwardOp
    obs: Observation

    def __post_init__(self):
        errs = []
        if self.forward.k != self.obs.k:
            errs.append(f"forward map has {self.forward.k} outputs, data has {self.obs.k}")
        if self.forward.d != self.prior.d:
            errs.append(f"forward map is {self.forward.d}-dimensional, prior is {self.prior.d}")
        if (
            self.forward.n_cells is not None
            and not self.prior.is_lepage
            and self.forward.n_cells != self.prior.resolution
        ):
            errs.append(
                f"forward grid N={self.forward.n_cells} differs from prior resolution {self.prior.resolution}"
            )
        if errs:
            raise SpecError(errs)

    @property
    def k(self) -> int:
        return self.obs.k

    def phi(self, u) -> float:
        return ndll(u, self.obs, self.forward)

    def increment_matrix(self) -> np.ndarray:
        if self.prior.is_lepage:
            raise ValueError("increment matrix needs an increments prior")
        return self.forward.increment_matrix(self.prior.resolution)

    def with_obs(self, obs: Observation) -> "PosteriorSpec":
        return PosteriorSpec(self.prior, self.forward, obs)

    def with_prior(self, **changes) -> "PosteriorSpec":
        data = self.prior.to_dict()
        data.update(changes)
        return PosteriorSpec(PriorConfig(**data), self.forward, self.obs)

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "prior": self.prior.to_dict(),
            "forward": self.forward.to_dict(),
            "observation": {"y": self.obs.y.tolist(), "sigma_cov": self.obs.sigma_cov.tolist()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "PosteriorSpec":
        """Build a spec, collecting every validation problem before raising."""
        errs = []
        prior = forward = obs = None
        for key in ("prior", "forward", "observation"):
            if not isinstance(data.get(key), dict):
                errs.append(f"missing section {key!r}")
        if errs:
            raise SpecError(errs)
        p = data["prior"]
        try:
            prior = PriorConfig(
                alpha=float(p["alpha"]),
                d=int(p["d"]),
                representation=p.get("representation", "increments"),
                resolution=p.get("resolution"),
                truncation=p.get("truncation"),
                seed=p.get("seed"),
            )
        except SpecError as exc:
            errs.extend(exc.errors)
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"prior: {exc}")
        try:
            forward = ForwardOp.from_dict(data["forward"])
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"forward: {exc}")
        o = data["observation"]
        try:
            obs = Observation(o["y"], o["sigma_cov"])
        except (KeyError, TypeError, ValueError) as exc:
            errs.append(f"observation: {exc}")
        if not errs:
            try:
                return cls(prior, forward, obs)
            except SpecError as exc:
                errs.extend(exc.errors)
        raise SpecError(errs)

    @classmethod
    def from_json(cls, text_or_path) -> "PosteriorSpec":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def sigma_norm(obs: Observation, r) -> np.ndarray:
    """|r|_Sigma = |Sigma^(-1/2) r| along the last axis."""
    w = obs.whiten(r)
    return np.sqrt(np.sum(w * w, axis=-1))


def log_mean_exp(a: np.ndarray) -> float:
    m = float(np.max(a))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.mean(np.exp(a - m))))

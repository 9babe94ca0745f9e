"""Monte Carlo estimators over prior draws: Z_y, well-posedness probes, TV and BL gaps."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..lepage import Box, draw_lepage_state
from ..norms import BLFamily, as_field, lepage_lp_norm, lp_norm_grid, prolong
from .diagnostics import mean_and_se
from .model import PosteriorSpec, log_mean_exp, ndll_from_lu, sigma_norm

__all__ = [
    "prior_responses",
    "estimate_log_z",
    "WellposednessReport",
    "probe_wellposedness",
    "tv_distance_weighted",
    "WeakConvergenceReport",
    "weak_convergence_report",
]

# exp(-x) underflows to zero in double precision beyond this
_EXP_UNDERFLOW = 745.0


def _check_shared(specs: Sequence[PosteriorSpec]) -> None:
    first = specs[0].prior
    for s in specs[1:]:
        p = s.prior
        if (p.alpha, p.d, p.representation) != (first.alpha, first.d, first.representation):
            raise ValueError("specs must share alpha, d and the prior representation")
    if not first.is_lepage:
        fine = max(s.prior.resolution for s in specs)
        if any(fine % s.prior.resolution for s in specs):
            raise ValueError("increment resolutions must divide the finest one")


def _block_sum(fields: np.ndarray, d: int, factor: int) -> np.ndarray:
    # (c, N^d) fine increments -> (c, (N/factor)^d) coarse increments
    c, total = fields.shape
    n = round(total ** (1.0 / d))
    r = n // factor
    shaped = fields.reshape((c,) + sum(((r, factor) for _ in range(d)), ()))
    return shaped.sum(axis=tuple(range(2, 2 * d + 1, 2))).reshape(c, -1)


def prior_responses(
    specs: Sequence[PosteriorSpec],
    n: int,
    rng: np.random.Generator,
    norm_p: Optional[float] = None,
    chunk: int = 512,
):
    """Forward values Lu for n common prior draws pushed through each spec.

    The specs share one latent draw per replicate: LePage priors use the
    leading terms of one state with the largest truncation, increment
    priors use block sums of one field at the finest resolution.  Returns a
    list of (n, k_i) arrays and, when ``norm_p`` is given, the L^p norms of
    the draws under the first spec.
    """
    specs = list(specs)
    _check_shared(specs)
    prior = specs[0].prior
    lus = [np.empty((n, s.k)) for s in specs]
    norms = np.empty(n) if norm_p is not None else None
    if prior.is_lepage:
        n_max = max(s.prior.truncation for s in specs)
        dom = Box.unit(prior.d)
        for i in range(n):
            full = draw_lepage_state(prior.alpha, dom, n_max, rng)
            for out, s in zip(lus, specs):
                state = full if s.prior.truncation == n_max else full.truncate(s.prior.truncation)
                out[i] = s.forward(state)
            if norms is not None:
                first = specs[0].prior.truncation
                norms[i] = lepage_lp_norm(full if first == n_max else full.truncate(first), norm_p)
        return lus, norms
    fine = max(s.prior.resolution for s in specs)
    fine_prior = next(s.prior for s in specs if s.prior.resolution == fine)
    mats = [s.increment_matrix() for s in specs]
    d = prior.d
    for start in range(0, n, chunk):
        c = min(chunk, n - start)
        inc = fine_prior.draw_increments(c, rng)
        for out, s, b in zip(lus, specs, mats):
            coarse = inc if s.prior.resolution == fine else _block_sum(inc, d, fine // s.prior.resolution)
            out[start : start + c] = coarse @ b.T
            if norms is not None and s is specs[0]:
                cells = coarse.reshape((c,) + (s.prior.resolution,) * d)
                for ax in range(1, d + 1):
                    cells = np.cumsum(cells, axis=ax)
                h = 1.0 / s.prior.resolution
                norms[start : start + c] = [lp_norm_grid(f, norm_p, h) for f in cells]
    return lus, norms


def estimate_log_z(spec: PosteriorSpec, n_samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Plain prior Monte Carlo estimate of log Z_y with its delta-method standard error."""
    if n_samples < 2:
        raise ValueError("need at least two prior samples")
    (lu,), _ = prior_responses([spec], n_samples, rng)
    return _log_z_from_phi(ndll_from_lu(lu, spec.obs))


def _log_z_from_phi(phi: np.ndarray) -> tuple[float, float]:
    a = -phi
    est = log_mean_exp(a)
    w = np.exp(a - a.max())
    se = float(np.std(w, ddof=1) / (math.sqrt(w.size) * np.mean(w)))
    return est, se


# ---------------------------------------------------------------------------
# well-posedness probes
# ---------------------------------------------------------------------------


@dataclass
class WellposednessReport:
    """Numerical evidence for boundedness and continuity of Phi and Z_y.

    ``wd2_sup_phi``: sup of Phi over clipped draws and all perturbed data.
    ``wp1_modulus[i]``: |Z(y + delta_i) - Z(y)| from common draws;
    ``wp1_half_ratio[i]``: the same modulus at delta_i / 2 divided by it.
    ``wp3_sup[i]``: sup over clipped draws of |Phi(u, y + delta_i) - Phi(u, y)|;
    ``wp3_bound_ok[i]``: whether every draw respects
    |delta|_S (|y - Lu|_S + |delta|_S / 2) with |.|_S the Sigma-weighted norm.
    """

    radius: float
    p: float
    n_samples: int
    delta_norms: list
    wd2_sup_phi: float
    wd2_finite: bool
    wp1_modulus: list
    wp1_half_ratio: list
    wp3_sup: list
    wp3_max_bound_ratio: list
    wp3_bound_ok: list
    nonfinite: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _nan_to_none(x: float):
    return None if not math.isfinite(x) else float(x)


def probe_wellposedness(
    spec: PosteriorSpec,
    y_perturbations: Sequence,
    bounded_set_radius: float,
    n_samples: int,
    rng: np.random.Generator,
    p: float = 2.0,
) -> WellposednessReport:
    """Probe boundedness of Phi on an L^p ball and continuity of Phi and Z_y in y."""
    deltas = [np.asarray(dl, dtype=float).reshape(spec.k) for dl in y_perturbations]
    if not deltas:
        raise ValueError("need at least one perturbation")
    if bounded_set_radius <= 0:
        raise ValueError("radius must be positive")
    (lu,), norms = prior_responses([spec], n_samples, rng, norm_p=p)
    # Lu is linear, so clipping u to the ball scales Lu by the same factor
    with np.errstate(divide="ignore"):
        factor = np.minimum(1.0, bounded_set_radius / norms)
    lu_ball = lu * factor[:, None]
    obs = spec.obs
    y = obs.y
    phi0_ball = ndll_from_lu(lu_ball, obs)
    phi0 = ndll_from_lu(lu, obs)
    z0 = float(np.mean(np.exp(-phi0)))
    resid = sigma_norm(obs, y - lu_ball)

    sup_phi = float(np.max(phi0_ball))
    finite = bool(np.all(np.isfinite(phi0_ball)))
    nonfinite = []
    mod, ratio, sup3, bound_ratio, ok = [], [], [], [], []
    for i, dl in enumerate(deltas):
        phi_ball = ndll_from_lu(lu_ball, obs, y + dl)
        if not np.all(np.isfinite(phi_ball)):
            finite = False
            nonfinite.append(i)
        sup_phi = max(sup_phi, float(np.max(phi_ball)))
        z = float(np.mean(np.exp(-ndll_from_lu(lu, obs, y + dl))))
        z_half = float(np.mean(np.exp(-ndll_from_lu(lu, obs, y + 0.5 * dl))))
        m = abs(z - z0)
        mod.append(m)
        ratio.append(_nan_to_none(abs(z_half - z0) / m) if m > 0 else None)
        gap = np.abs(phi_ball - phi0_ball)
        dn = float(sigma_norm(obs, dl))
        bound = dn * (resid + 0.5 * dn)
        sup3.append(float(gap.max()))
        with np.errstate(invalid="ignore", divide="ignore"):
            br = np.where(bound > 0, gap / bound, np.where(gap > 0, np.inf, 0.0))
        bound_ratio.append(float(br.max()))
        ok.append(bool(np.all(gap <= bound * (1.0 + 1e-12))))
    return WellposednessReport(
        radius=float(bounded_set_radius),
        p=float(p),
        n_samples=int(n_samples),
        delta_norms=[float(np.linalg.norm(dl)) for dl in deltas],
        wd2_sup_phi=sup_phi,
        wd2_finite=finite,
        wp1_modulus=mod,
        wp1_half_ratio=ratio,
        wp3_sup=sup3,
        wp3_max_bound_ratio=bound_ratio,
        wp3_bound_ok=ok,
        nonfinite=nonfinite,
    )


# ---------------------------------------------------------------------------
# total variation between two posteriors
# ---------------------------------------------------------------------------


def _tv_from_phi(phi_a: np.ndarray, phi_b: np.ndarray) -> tuple[float, float]:
    for name, phi in (("a", phi_a), ("b", phi_b)):
        if float(np.min(phi)) > _EXP_UNDERFLOW:
            raise ValueError(f"all importance weights vanish under spec_{name} (min Phi = {np.min(phi):.4g})")
    a = np.exp(-(phi_a - phi_a.min()))
    b = np.exp(-(phi_b - phi_b.min()))
    n = a.size
    abar, bbar = a.mean(), b.mean()
    diff = a / abar - b / bbar
    tv = 0.5 * float(np.sum(np.abs(a / a.sum() - b / b.sum())))
    # influence function of 1/2 mean|a/abar - b/bbar| as a function of (mean s*diff, abar, bbar)
    s = np.sign(diff)
    psi = (
        0.5 * s * diff
        - 0.5 * np.mean(s * a) / abar**2 * (a - abar)
        + 0.5 * np.mean(s * b) / bbar**2 * (b - bbar)
    )
    se = float(np.std(psi, ddof=1) / math.sqrt(n))
    return tv, se


def tv_distance_weighted(
    spec_a: PosteriorSpec, spec_b: PosteriorSpec, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """TV(mu_a, mu_b) from self-normalised weights on common prior draws."""
    if n_samples < 2:
        raise ValueError("need at least two prior samples")
    (lu_a, lu_b), _ = prior_responses([spec_a, spec_b], n_samples, rng)
    return _tv_from_phi(ndll_from_lu(lu_a, spec_a.obs), ndll_from_lu(lu_b, spec_b.obs))


# ---------------------------------------------------------------------------
# bounded-Lipschitz gaps between sample sets
# ---------------------------------------------------------------------------


@dataclass
class WeakConvergenceReport:
    """Pairwise gaps |mean g_j(set_a) - mean g_j(set_b)| with pooled standard errors."""

    labels: list
    means: np.ndarray
    ses: np.ndarray
    pairs: list
    gaps: np.ndarray
    pooled_se: np.ndarray

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max())

    @property
    def max_z(self) -> float:
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(self.gaps > 0, self.gaps / self.pooled_se, 0.0)
        return float(np.max(z))

    def within(self, n_se: float = 3.0) -> bool:
        return bool(np.all(self.gaps <= n_se * self.pooled_se))

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "means": self.means.tolist(),
            "ses": self.ses.tolist(),
            "pairs": [list(p) for p in self.pairs],
            "gaps": self.gaps.tolist(),
            "pooled_se": self.pooled_se.tolist(),
            "max_gap": self.max_gap,
        }


def _set_fields(sample_set):
    samples = getattr(sample_set, "samples", None)
    if samples is not None:
        return samples, False
    return list(sample_set), True


def _on_grid(u, shape: tuple) -> np.ndarray:
    f = as_field(u)
    if f.shape == shape:
        return f
    if f.ndim != len(shape) or shape[0] % f.shape[0]:
        raise ValueError(f"field on grid {f.shape} cannot be prolonged to {shape}")
    return prolong(f, shape[0] // f.shape[0])


def weak_convergence_report(sample_sets: Sequence, functionals: BLFamily, labels=None) -> WeakConvergenceReport:
    """Compare BL-functional means across sample sets on the functionals' grid.

    A set is a ChainOutput (standard errors from the effective sample size of
    each functional trace) or a sequence of grid fields (i.i.d. standard errors).
    """
    if len(sample_sets) < 2:
        raise ValueError("need at least two sample sets")
    labels = list(labels) if labels is not None else [str(i) for i in range(len(sample_sets))]
    means, ses = [], []
    for s in sample_sets:
        fields, iid = _set_fields(s)
        if len(fields) < 2:
            raise ValueError("each sample set needs at least two samples")
        g = np.array([functionals(_on_grid(u, functionals.shape)) for u in fields])
        stats = [mean_and_se(g[:, j], iid=iid) for j in range(len(functionals))]
        means.append([m for m, _ in stats])
        ses.append([e for _, e in stats])
    means, ses = np.array(means), np.array(ses)
    pairs = [(i, j) for i in range(len(sample_sets)) for j in range(i + 1, len(sample_sets))]
    gaps = np.array([np.abs(means[i] - means[j]) for i, j in pairs])
    pooled = np.array([np.sqrt(ses[i] ** 2 + ses[j] ** 2) for i, j in pairs])
    return WeakConvergenceReport(labels, means, ses, pairs, gaps, pooled)

"""Reference inverse problem and the convergence experiments.

These drivers are shared by the command-line runner and the acceptance
suite.  All randomness comes from ``stream(seed, label, index)`` so every
replicate is reproducible on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bayes import (
    ForwardOp,
    Observation,
    PosteriorSpec,
    PriorConfig,
    mcmc_increments,
    tv_distance_weighted,
    weak_convergence_report,
)
from .lepage import Box, draw_lepage_state
from .norms import bl_functionals, lp_distance_coupled, sobolev_norm
from .rng import stream
from .sheet import discretize_lepage

__all__ = [
    "REFERENCE_POINTS",
    "REFERENCE_NOISE_VAR",
    "REFERENCE_SEED",
    "reference_truth",
    "reference_observation",
    "reference_spec",
    "reference_anchors",
    "PriorConvergence",
    "converge_prior",
    "sobolev_ladder",
    "converge_posterior_weak",
    "converge_posterior_tv",
    "WEAK_DEFAULTS",
]

REFERENCE_POINTS = (0.1, 0.3, 0.5, 0.7, 0.9)
REFERENCE_NOISE_VAR = 0.1
REFERENCE_SEED = 7

# tuned on the reference problem: acceptance about 0.3 at N = 32 and N = 256
WEAK_DEFAULTS = {"step_scale": 8.0, "thin": 50, "burn_in": 2000, "samples": 1000}


def reference_truth(x) -> np.ndarray:
    """Piecewise-constant truth: +1 on (0.25, 0.6], -0.5 on (0.6, 1]."""
    x = np.asarray(x, dtype=float)
    return 1.0 * (x > 0.25) - 1.5 * (x > 0.6)


def reference_observation(seed: int = REFERENCE_SEED) -> Observation:
    x = np.asarray(REFERENCE_POINTS)
    noise = math.sqrt(REFERENCE_NOISE_VAR) * stream(seed, "reference-noise").standard_normal(x.size)
    return Observation(reference_truth(x) + noise, np.full(x.size, REFERENCE_NOISE_VAR))


def reference_spec(
    representation: str = "increments",
    resolution: int | None = None,
    truncation: int | None = None,
    alpha: float = 1.0,
    seed: int = REFERENCE_SEED,
) -> PosteriorSpec:
    """alpha-stable sheet prior on [0, 1], five pointwise observations, Sigma = 0.1 I."""
    prior = PriorConfig(alpha, 1, representation, resolution=resolution, truncation=truncation, seed=seed)
    forward = ForwardOp.pointwise(np.asarray(REFERENCE_POINTS)[:, None])
    return PosteriorSpec(prior, forward, reference_observation(seed))


def reference_anchors(n_cells: int = 256) -> list:
    """Five anchor fields for the BL family: zero, truth, half truth and two steps."""
    x = (np.arange(n_cells) + 1.0) / n_cells
    step = 1.0 * (x > 0.5)
    truth = reference_truth(x)
    return [np.zeros(n_cells), truth, 0.5 * truth, step, -step]


# ---------------------------------------------------------------------------
# prior convergence
# ---------------------------------------------------------------------------


@dataclass
class PriorConvergence:
    """Coupled distances ||U^N - U||_p per replicate along a resolution ladder."""

    resolutions: list
    distances: np.ndarray  # (replicates, len(resolutions))
    rows: list = field(default_factory=list)

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.distances, axis=0)

    @property
    def median_ratio(self) -> float:
        """median at the finest level over median at the coarsest."""
        med = self.medians
        return float(med[-1] / med[0]) if med[0] > 0 else 0.0

    @property
    def nonincreasing_fraction(self) -> float:
        steps = np.diff(self.distances, axis=1)
        return float(np.mean(steps <= 0.0)) if steps.size else 1.0

    def summary(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "medians": self.medians.tolist(),
            "median_ratio_finest_to_coarsest": self.median_ratio,
            "nonincreasing_fraction": self.nonincreasing_fraction,
        }


def _prior_replicate(args) -> list:
    alpha, d, p, resolutions, truncation, seed, index, eval_resolution = args
    state = draw_lepage_state(alpha, Box.unit(d), truncation, stream(seed, "converge-prior", index), seed=seed)
    return [lp_distance_coupled(state, n, p, eval_resolution) for n in resolutions]


def converge_prior(
    alpha: float,
    d: int,
    p: float,
    resolutions: Sequence[int],
    truncation: int,
    replicates: int,
    seed: int,
    eval_resolution: int | None = None,
    mapper=map,
) -> PriorConvergence:
    """Distances between the LePage sheet and its coupled grid discretisations."""
    _check_ladder(resolutions)
    if d > 1 and eval_resolution is None:
        eval_resolution = 2 * max(resolutions)
    jobs = [(alpha, d, p, list(resolutions), truncation, seed, i, eval_resolution) for i in range(replicates)]
    dist = np.array(list(mapper(_prior_replicate, jobs)), dtype=float).reshape(replicates, len(resolutions))
    rows = [(i, n, float(dist[i, j])) for i in range(replicates) for j, n in enumerate(resolutions)]
    return PriorConvergence(list(resolutions), dist, rows)


def _check_ladder(levels: Sequence[int]) -> None:
    if len(levels) < 1 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must be strictly increasing, got {list(levels)}")


def _sobolev_replicate(args) -> list:
    alpha, p, s_values, resolutions, truncation, seed, index = args
    state = draw_lepage_state(alpha, Box.unit(1), truncation, stream(seed, "sobolev", index))
    out = []
    for n in resolutions:
        sheet = discretize_lepage(state, n)
        out.append([sobolev_norm(sheet, s, p) for s in s_values])
    return out


def sobolev_ladder(
    alpha: float,
    p: float,
    s_values: Sequence[float],
    resolutions: Sequence[int],
    replicates: int,
    seed: int,
    truncation: int = 10_000,
    mapper=map,
) -> np.ndarray:
    """Discrete H^s_p norms of coupled discretisations of one LePage sheet per seed.

    Returns an array of shape (replicates, len(resolutions), len(s_values)).
    """
    _check_ladder(resolutions)
    jobs = [(alpha, p, list(s_values), list(resolutions), truncation, seed, i) for i in range(replicates)]
    return np.array(list(mapper(_sobolev_replicate, jobs)), dtype=float)


# ---------------------------------------------------------------------------
# posterior convergence
# ---------------------------------------------------------------------------


def converge_posterior_weak(
    spec: PosteriorSpec,
    resolutions: Sequence[int],
    seed: int,
    anchors=None,
    p: float = 1.0,
    samples: int = WEAK_DEFAULTS["samples"],
    step_scale: float = WEAK_DEFAULTS["step_scale"],
    thin: int = WEAK_DEFAULTS["thin"],
    burn_in: int = WEAK_DEFAULTS["burn_in"],
):
    """BL-functional gaps between increment-prior posteriors at several resolutions.

    Returns (report, chains).  Anchors default to :func:`reference_anchors`
    on the finest grid.
    """
    _check_ladder(resolutions)
    if anchors is None:
        anchors = reference_anchors(max(resolutions))
    family = bl_functionals(anchors, p)
    chains = []
    for n in resolutions:
        level = spec.with_prior(representation="increments", resolution=n, truncation=None)
        chains.append(
            mcmc_increments(level, samples * thin, step_scale, stream(seed, "posterior-weak", n), thin=thin, burn_in=burn_in)
        )
    report = weak_convergence_report(chains, family, labels=[f"N={n}" for n in resolutions])
    return report, chains


def converge_posterior_tv(
    spec: PosteriorSpec,
    truncations: Sequence[int],
    seed: int,
    prior_samples: int = 10_000,
    reference: int | None = None,
) -> list:
    """TV between each truncation and the reference (default: the largest).

    Returns rows (N, reference, tv, se).
    """
    _check_ladder(truncations)
    ref_n = reference if reference is not None else max(truncations)
    ref = spec.with_prior(representation="lepage", truncation=ref_n, resolution=None)
    rows = []
    for n in truncations:
        if n == ref_n:
            continue
        level = spec.with_prior(representation="lepage", truncation=n, resolution=None)
        tv, se = tv_distance_weighted(level, ref, prior_samples, stream(seed, "posterior-tv", n))
        rows.append((n, ref_n, tv, se))
    return rows

"""Posterior samplers in LePage-latent and increment coordinates.

Both samplers only touch the k-dimensional forward value Lu per proposal:
the increment sampler keeps the whitened residual Sigma^(-1/2)(y - Lu) and
the LePage sampler keeps Lu together with the per-atom response matrix.
Lu is recomputed from scratch at every stored sample to stop round-off
drift from the incremental updates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..lepage import ArrivalSequence, LePageState
from ..sheet import GridSheet
from .diagnostics import effective_sample_size, mean_and_se
from .model import PosteriorSpec, ndll_from_lu

__all__ = [
    "ChainOutput",
    "mcmc_lepage",
    "mcmc_increments",
    "sign_block_kernel",
    "DEFAULT_THIN",
    "DEFAULT_REFRESH_PROB",
]

DEFAULT_THIN = 10
DEFAULT_REFRESH_PROB = 0.1


@dataclass
class ChainOutput:
    """Thinned chain: samples, Phi trace, forward values and acceptance by move kind."""

    samples: list
    loglik: np.ndarray
    observables: np.ndarray
    acceptance: dict
    iters: int
    thin: int
    acc_trace: np.ndarray = None
    ess: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ess = {"loglik": effective_sample_size(self.loglik)}
        for j in range(self.observables.shape[1]):
            self.ess[f"Lu[{j}]"] = effective_sample_size(self.observables[:, j])

    def __len__(self) -> int:
        return self.loglik.size

    def observable_mean(self, j: int) -> tuple[float, float]:
        return mean_and_se(self.observables[:, j])

    def trace_rows(self):
        """(iteration, loglik, acceptance) rows; acceptance is the running overall rate."""
        for i, ll in enumerate(self.loglik):
            yield (i + 1) * self.thin, float(ll), float(self.acc_trace[i])


class _Counter:
    def __init__(self, kinds):
        self.tried = {k: 0 for k in kinds}
        self.taken = {k: 0 for k in kinds}

    def add(self, kind: str, tried: int, taken: int) -> None:
        self.tried[kind] += tried
        self.taken[kind] += taken

    def overall(self) -> float:
        tried = sum(self.tried.values())
        return sum(self.taken.values()) / tried if tried else math.nan

    def rates(self) -> dict:
        return {k: (self.taken[k] / self.tried[k] if self.tried[k] else math.nan) for k in self.tried}


def _accepts(log_u: float, log_ratio: float) -> bool:
    # u < min(1, exp(r)); u in [0, 1) so a zero log-ratio always accepts
    return log_ratio >= 0.0 or log_u < log_ratio


# ---------------------------------------------------------------------------
# increment coordinates
# ---------------------------------------------------------------------------


def _prior_log_ratio(alpha: float, sigma: float):
    if alpha == 1.0:
        s2 = sigma * sigma
        return lambda x, xn: np.log(s2 + x * x) - np.log(s2 + xn * xn)
    if alpha == 2.0:
        c = 1.0 / (4.0 * sigma * sigma)
        return lambda x, xn: (x * x - xn * xn) * c
    raise ValueError(
        f"closed-form increment density needs alpha in {{1, 2}}, got {alpha}; use mcmc_lepage"
    )


def mcmc_increments(
    spec: PosteriorSpec,
    iters: int,
    step_scale: float,
    rng: np.random.Generator,
    thin: int = DEFAULT_THIN,
    burn_in: int = 0,
    init: Optional[GridSheet] = None,
    keep_samples: bool = True,
) -> ChainOutput:
    """Single-site random-walk Metropolis on the cell increments.

    One iteration is a sweep over all N^d sites in random order.  The
    proposal at site n is x + step_scale * h^(d/alpha) * Z, accepted with
    the Cauchy (alpha = 1) or Gaussian (alpha = 2) prior density ratio times
    the likelihood ratio.
    """
    prior = spec.prior
    if prior.is_lepage:
        raise ValueError("mcmc_increments needs an increments prior")
    log_prior_ratio = _prior_log_ratio(prior.alpha, (1.0 / prior.resolution) ** (prior.d / prior.alpha))
    if iters < 1 or thin < 1 or iters % thin:
        raise ValueError("iters must be a positive multiple of thin")
    n_cells, d = prior.resolution, prior.d
    scale = step_scale * (1.0 / n_cells) ** (d / prior.alpha)
    obs = spec.obs
    bmat = spec.increment_matrix()
    cols = obs.whiten(bmat.T)  # row i: Sigma^(-1/2) B[:, i]
    col_sq = np.sum(cols * cols, axis=1)
    cols_list = cols.tolist()

    inc = (init if init is not None else prior.draw(rng)).increments.ravel().copy()
    if inc.size != n_cells**d:
        raise ValueError("initial sheet does not match the prior resolution")
    n_sites = inc.size

    def residual():
        return obs.whiten(obs.y - bmat @ inc)

    r = residual().tolist()
    k = len(r)
    counter = _Counter(["single-site"])
    samples, trace, lus, acc = [], [], [], []
    for it in range(burn_in + iters):
        order = rng.permutation(n_sites)
        steps = scale * rng.standard_normal(n_sites)
        log_u = np.log(rng.random(n_sites))
        x = inc[order]
        lpr = log_prior_ratio(x, x + steps)
        taken = 0
        for pos in range(n_sites):
            i = order[pos]
            dx = steps[pos]
            c = cols_list[i]
            rc = 0.0
            for j in range(k):
                rc += r[j] * c[j]
            dphi = -dx * rc + 0.5 * dx * dx * col_sq[i]
            if _accepts(log_u[pos], lpr[pos] - dphi):
                inc[i] += dx
                for j in range(k):
                    r[j] -= dx * c[j]
                taken += 1
        counter.add("single-site", n_sites, taken)
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            rv = residual()
            r = rv.tolist()
            trace.append(0.5 * float(rv @ rv))
            acc.append(counter.overall())
            lus.append(bmat @ inc)
            if keep_samples:
                samples.append(
                    GridSheet.from_increments(inc.reshape((n_cells,) * d), prior.alpha, prior.seed)
                )
    return ChainOutput(samples, np.array(trace), np.array(lus).reshape(-1, k), counter.rates(), iters, thin, np.array(acc))


# ---------------------------------------------------------------------------
# LePage latent coordinates
# ---------------------------------------------------------------------------


def _weights(scale, rhos, gammas, alpha):
    return scale * rhos * gammas ** (-1.0 / alpha)


def mcmc_lepage(
    spec: PosteriorSpec,
    iters: int,
    block_size: Optional[int],
    rng: np.random.Generator,
    refresh_prob: float = DEFAULT_REFRESH_PROB,
    thin: int = DEFAULT_THIN,
    burn_in: int = 0,
    init: Optional[LePageState] = None,
    keep_samples: bool = True,
) -> ChainOutput:
    """Blockwise prior-resampling Metropolis on (rho, Gamma spacings, V).

    Each iteration either (probability ``refresh_prob``) proposes a fresh
    spacing sequence, or redraws (rho_k, V_k) from the prior on a uniformly
    chosen block of ``block_size`` indices.  Both proposals are reversible
    with respect to the prior, so acceptance is min(1, exp(Phi - Phi')).
    """
    prior = spec.prior
    if not prior.is_lepage:
        raise ValueError("mcmc_lepage needs a lepage prior")
    n = prior.truncation
    b = max(1, n // 50) if block_size is None else int(block_size)
    if not 1 <= b <= n:
        raise ValueError(f"block size must lie in 1..{n}, got {b}")
    if not 0.0 <= refresh_prob <= 1.0:
        raise ValueError("refresh_prob must lie in [0, 1]")
    if iters < 1 or thin < 1 or iters % thin:
        raise ValueError("iters must be a positive multiple of thin")
    state = init if init is not None else prior.draw(rng)
    if state.n_terms != n:
        raise ValueError("initial state does not match the truncation")
    alpha, d, scale = state.alpha, state.d, state.scale
    fwd, obs = spec.forward, spec.obs
    rhos = state.rhos.copy()
    spacings = state.arrivals.spacings.copy()
    gammas = np.cumsum(spacings)
    vs = state.vs.copy()
    resp = fwd.lepage_response(vs)
    w = _weights(scale, rhos, gammas, alpha)
    lu = w @ resp
    phi = float(ndll_from_lu(lu, obs))

    counter = _Counter(["block", "spacings"])
    samples, trace, lus, acc = [], [], [], []
    for it in range(burn_in + iters):
        log_u = math.log(rng.random())
        if rng.random() < refresh_prob:
            sp_new = rng.standard_exponential(n)
            g_new = np.cumsum(sp_new)
            w_new = _weights(scale, rhos, g_new, alpha)
            lu_new = w_new @ resp
            phi_new = float(ndll_from_lu(lu_new, obs))
            ok = _accepts(log_u, phi - phi_new)
            counter.add("spacings", 1, int(ok))
            if ok:
                spacings, gammas, w, lu, phi = sp_new, g_new, w_new, lu_new, phi_new
        else:
            idx = rng.choice(n, size=b, replace=False)
            rho_b = np.where(rng.random(b) < 0.5, 1.0, -1.0)
            v_b = 1.0 - rng.random((b, d))
            resp_b = fwd.lepage_response(v_b)
            w_b = _weights(scale, rho_b, gammas[idx], alpha)
            lu_new = lu - w[idx] @ resp[idx] + w_b @ resp_b
            phi_new = float(ndll_from_lu(lu_new, obs))
            ok = _accepts(log_u, phi - phi_new)
            counter.add("block", 1, int(ok))
            if ok:
                rhos[idx], vs[idx], resp[idx], w[idx] = rho_b, v_b, resp_b, w_b
                lu, phi = lu_new, phi_new
        if it >= burn_in and (it - burn_in + 1) % thin == 0:
            lu = w @ resp
            phi = float(ndll_from_lu(lu, obs))
            trace.append(phi)
            acc.append(counter.overall())
            lus.append(lu.copy())
            if keep_samples:
                samples.append(
                    LePageState(alpha, state.domain, rhos.copy(), ArrivalSequence(spacings.copy()), vs.copy(), state.seed)
                )
    return ChainOutput(samples, np.array(trace), np.array(lus).reshape(-1, spec.k), counter.rates(), iters, thin, np.array(acc))


def sign_block_kernel(state: LePageState, spec: PosteriorSpec, block_size: int = 1):
    """Exact transition matrix of the sign part of the block move.

    With the arrivals and atoms of ``state`` frozen, enumerate all 2^n sign
    configurations.  A move picks a uniform block of ``block_size`` indices,
    redraws their signs fairly and accepts with the sampler's rule.  Returns
    (configurations, target probabilities, transition matrix).
    """
    n = state.n_terms
    if n > 12:
        raise ValueError("enumeration is limited to 12 terms")
    configs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    resp = spec.forward.lepage_response(state.vs)
    phis = np.array([float(ndll_from_lu(state.with_rhos(c).weights @ resp, spec.obs)) for c in configs])
    target = np.exp(-(phis - phis.min()))
    target /= target.sum()
    blocks = list(itertools.combinations(range(n), block_size))
    m = len(configs)
    kernel = np.zeros((m, m))
    for a in range(m):
        for blk in blocks:
            mask = np.ones(n, dtype=bool)
            mask[list(blk)] = False
            for b in range(m):
                if np.array_equal(configs[a][mask], configs[b][mask]):
                    q = 1.0 / (len(blocks) * 2**block_size)
                    acc = min(1.0, math.exp(phis[a] - phis[b]))
                    kernel[a, b] += q * acc
                    kernel[a, a] += q * (1.0 - acc)
    return configs, target, kernel

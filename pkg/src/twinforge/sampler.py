"""Spike-and-slab sparse Bayesian linear regression via Gibbs sampling.

The model is Y = L theta + eps with eps ~ N(0, sigma2 I).  Each coefficient
carries a binary latent indicator psi_k: psi_k = 0 pins theta_k at zero
(spike), psi_k = 1 gives it a Gaussian slab N(0, sigma2 * theta_s).  The
latent vector is sampled column-by-column from its Bernoulli conditional,
whose odds ratio lambda is the ratio of marginal likelihoods with theta and
sigma2 integrated out; sigma2, the slab variance theta_s and the inclusion
probability p0 follow their conjugate conditionals, and the active weights
are drawn from the conjugate Gaussian.

Numerical notes:

* Library columns are standardized to unit RMS internally (coefficients are
  reported in original units).  Column scales in these problems span many
  orders of magnitude and a single shared slab variance cannot cover them
  raw.
* The marginal-likelihood ratio is evaluated in log space with the common
  Gamma-function factors cancelled.
* The slab correlation matrix is the identity (in standardized space).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .dictionary import LibraryMatrix
from .errors import ConfigurationError, IllConditionedLibraryError

_FROZEN_NONE: frozenset = frozenset()


@dataclass
class Hyperparameters:
    """Prior constants, initial values and chain settings.

    Defaults: Beta(0.1, 1) on p0, IG(1e-4, 1e-4) on sigma2 (vague),
    IG(0.5, 0.5) on the slab variance, 3000-sample chain with 500 burn-in,
    PIP selection threshold 0.7 (0.5 is the other common preset).
    """

    alpha_p: float = 0.1
    beta_p: float = 1.0
    alpha_sigma: float = 1e-4
    beta_sigma: float = 1e-4
    alpha_v: float = 0.5
    beta_v: float = 0.5
    p0_init: float = 0.1
    theta_s_init: float = 10.0
    n_mcmc: int = 3000
    n_burn: int = 500
    pip_threshold: float = 0.7

    def __post_init__(self):
        for name in ("alpha_p", "beta_p", "alpha_sigma", "beta_sigma", "alpha_v", "beta_v"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        if not 0 < self.p0_init < 1:
            raise ConfigurationError("p0_init must lie in (0, 1)")
        if self.theta_s_init <= 0:
            raise ConfigurationError("theta_s_init must be > 0")
        if self.n_burn >= self.n_mcmc:
            raise ConfigurationError("n_burn must be < n_mcmc")
        if not 0 < self.pip_threshold < 1:
            raise ConfigurationError("pip_threshold must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(**d)


@dataclass
class SamplerState:
    """One Gibbs-chain state. theta is in original (unstandardized) units."""

    theta: np.ndarray
    psi: np.ndarray
    theta_s: float
    sigma2: float
    p0: float
    rng: np.random.Generator

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.psi = np.asarray(self.psi, dtype=np.int8)
        if self.sigma2 <= 0 or self.theta_s <= 0:
            raise ConfigurationError("sigma2 and theta_s must be > 0")
        if not 0 <= self.p0 <= 1:
            raise ConfigurationError("p0 must lie in [0, 1]")
        if np.any((self.psi == 0) & (self.theta != 0.0)):
            raise ConfigurationError("theta must be zero wherever psi is zero")


@dataclass
class PosteriorSummary:
    """Post burn-in statistics of one chain."""

    labels: list
    pip: np.ndarray
    selected: list
    mu_theta: np.ndarray
    sigma_theta: np.ndarray
    mu_sigma2: float
    n_mc: int
    seed: int
    hyperparameters: Hyperparameters
    flip_rate: np.ndarray | None = None
    confused: list = field(default_factory=list)
    n_consensus: int = 0
    samples: dict | None = None

    @property
    def selected_labels(self) -> list:
        return [self.labels[k] for k in self.selected]

    def term(self, label: str) -> tuple[float, float]:
        """(posterior mean, posterior std) of one selected column."""
        k = self.labels.index(label)
        return float(self.mu_theta[k]), float(np.sqrt(max(self.sigma_theta[k, k], 0.0)))

    def to_json(self) -> str:
        payload = {
            "labels": list(self.labels),
            "pip": self.pip.tolist(),
            "selected": list(map(int, self.selected)),
            "mu_theta": self.mu_theta.tolist(),
            "sigma_theta": self.sigma_theta.ravel().tolist(),
            "mu_sigma2": float(self.mu_sigma2),
            "n_mc": int(self.n_mc),
            "seed": int(self.seed),
            "hyperparameters": self.hyperparameters.to_dict(),
            "flip_rate": None if self.flip_rate is None else self.flip_rate.tolist(),
            "confused": list(self.confused),
            "n_consensus": int(self.n_consensus),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PosteriorSummary":
        d = json.loads(text)
        K = len(d["labels"])
        return cls(
            labels=list(d["labels"]),
            pip=np.asarray(d["pip"], dtype=float),
            selected=list(d["selected"]),
            mu_theta=np.asarray(d["mu_theta"], dtype=float),
            sigma_theta=np.asarray(d["sigma_theta"], dtype=float).reshape(K, K),
            mu_sigma2=d["mu_sigma2"],
            n_mc=d["n_mc"],
            seed=d["seed"],
            hyperparameters=Hyperparameters.from_dict(d["hyperparameters"]),
            flip_rate=None if d.get("flip_rate") is None else np.asarray(d["flip_rate"]),
            confused=list(d.get("confused", [])),
            n_consensus=d.get("n_consensus", 0),
        )


class _Workspace:
    """Precomputed sufficient statistics of one regression problem.

    Everything the chain touches is collapsed into the Gram matrix
    G = Ls^T Ls of the standardized library, b = Ls^T Y and yty = Y^T Y,
    so sweep cost is independent of N.
    """

    def __init__(self, Y: np.ndarray, L: LibraryMatrix):
        Y = np.asarray(Y, dtype=float).ravel()
        if Y.shape[0] != L.n_rows:
            raise ConfigurationError("Y and library row counts differ")
        if Y.shape[0] == 0:
            raise ConfigurationError("empty regression problem")
        if not np.isfinite(Y).all():
            raise ConfigurationError("Y contains non-finite entries")
        self.N = Y.shape[0]
        self.K = L.n_columns
        if self.K < 1:
            raise ConfigurationError("library must have at least one column")
        self.labels = list(L.labels)
        rms = np.sqrt(np.mean(L.values**2, axis=0))
        self.scales = np.where(rms > 0, rms, 1.0)
        Ls = L.values / self.scales
        self.G = Ls.T @ Ls
        self.b = Ls.T @ Y
        self.yty = float(Y @ Y)

    def chol_active(self, active: np.ndarray, theta_s: float):
        """Cholesky of A = G[S,S] + I/theta_s for the active index array."""
        A = self.G[np.ix_(active, active)].copy()
        A[np.diag_indices_from(A)] += 1.0 / theta_s
        try:
            c, low = cho_factor(A, lower=True)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedLibraryError(
                "failed to factorize the active library block",
                labels=[self.labels[k] for k in active],
            ) from exc
        diag = np.abs(np.diag(c))
        if diag.min() <= 0 or diag.max() / diag.min() > 1e14:
            raise IllConditionedLibraryError(
                "active library block is numerically singular",
                labels=[self.labels[k] for k in active],
            )
        return c, low

    def log_marginal(self, active: np.ndarray, theta_s: float, hp: Hyperparameters) -> float:
        """log p(Y | Psi, theta_s) up to Psi-independent constants.

        Implements the latent-indicator marginal likelihood (theta and
        sigma2 integrated out, identity slab correlation) with the shared
        Gamma/(2 pi) factors dropped.
        """
        a_post = hp.alpha_sigma + 0.5 * self.N
        if active.size == 0:
            return -a_post * np.log(hp.beta_sigma + 0.5 * self.yty)
        c, low = self.chol_active(active, theta_s)
        bS = self.b[active]
        w = solve_triangular(c, bS, lower=low, trans=0)
        quad = float(w @ w)  # b_S^T A^{-1} b_S
        logdet_A = 2.0 * float(np.sum(np.log(np.abs(np.diag(c)))))
        resid = max(self.yty - quad, 1e-300)
        return (
            -0.5 * logdet_A
            - 0.5 * active.size * np.log(theta_s)
            - a_post * np.log(hp.beta_sigma + 0.5 * resid)
        )

    def posterior_gaussian(self, active: np.ndarray, theta_s: float, sigma2: float):
        """Conjugate Gaussian of the active standardized weights.

        Returns (mu, chol_lower C with A = C C^T); covariance is
        sigma2 * A^{-1}.
        """
        c, low = self.chol_active(active, theta_s)
        mu = cho_solve((c, low), self.b[active])
        return mu, c, low


def inclusion_probability(ws: _Workspace, k: int, psi: np.ndarray, theta_s: float,
                          p0: float, hp: Hyperparameters) -> float:
    """Bernoulli probability u_k that column k enters, given the rest of Psi.

    u_k = p0 / (p0 + lambda (1 - p0)) with lambda the marginal-likelihood
    ratio between psi_k = 0 and psi_k = 1.
    """
    others = np.flatnonzero((psi > 0) & (np.arange(ws.K) != k))
    s0 = others
    s1 = np.sort(np.append(others, k))
    log_lambda = ws.log_marginal(s0, theta_s, hp) - ws.log_marginal(s1, theta_s, hp)
    logit = np.clip(np.log1p(-p0) - np.log(p0) + log_lambda, -700.0, 700.0)
    return float(1.0 / (1.0 + np.exp(logit)))


def _draw_sigma2(ws: _Workspace, active: np.ndarray, theta_s: float,
                 hp: Hyperparameters, rng: np.random.Generator) -> float:
    shape = hp.alpha_sigma + 0.5 * ws.N
    if active.size:
        c, low = ws.chol_active(active, theta_s)
        w = solve_triangular(c, ws.b[active], lower=low, trans=0)
        quad = float(w @ w)
    else:
        quad = 0.0
    scale = hp.beta_sigma + 0.5 * max(ws.yty - quad, 0.0)
    g = rng.standard_gamma(shape)
    g = max(g, 1e-300)
    return float(scale / g)


def _sweep(ws: _Workspace, theta_std: np.ndarray, psi: np.ndarray, theta_s: float,
           sigma2: float, p0: float, rng: np.random.Generator, hp: Hyperparameters,
           frozen: frozenset, order: np.ndarray | None = None):
    """One full Gibbs sweep over (psi, sigma2, theta_s, p0, theta).

    Operates on standardized coefficients; ``frozen`` names blocks to hold
    fixed (used by correctness oracles).  Returns the updated quintuple and
    the number of latent flips per column (0/1 array).
    """
    K = ws.K
    flips = np.zeros(K, dtype=np.int8)

    if "psi" not in frozen:
        scan = order if order is not None else np.arange(K)
        # cache the log-marginal of the evolving current set; per column only
        # the complementary configuration needs a fresh factorization
        lm_current = ws.log_marginal(np.flatnonzero(psi > 0), theta_s, hp)
        log_prior_odds = np.log1p(-p0) - np.log(p0)
        for k in scan:
            k = int(k)
            if psi[k]:
                s_other = np.flatnonzero((psi > 0) & (np.arange(K) != k))
                lm0, lm1 = ws.log_marginal(s_other, theta_s, hp), lm_current
            else:
                s_other = np.sort(np.append(np.flatnonzero(psi > 0), k))
                lm0, lm1 = lm_current, ws.log_marginal(s_other, theta_s, hp)
            logit = np.clip(log_prior_odds + lm0 - lm1, -700.0, 700.0)
            u = 1.0 / (1.0 + np.exp(logit))
            new = np.int8(rng.random() < u)
            if new != psi[k]:
                flips[k] = 1
                lm_current = lm0 if new == 0 else lm1
            psi[k] = new

    active = np.flatnonzero(psi > 0)

    if "sigma2" not in frozen:
        sigma2 = _draw_sigma2(ws, active, theta_s, hp, rng)

    if "theta_s" not in frozen:
        # previous theta draw restricted to the current active set
        quad = float(theta_std[active] @ theta_std[active]) if active.size else 0.0
        shape = hp.alpha_v + 0.5 * active.size
        scale = hp.beta_v + quad / (2.0 * sigma2)
        g = max(rng.standard_gamma(shape), 1e-300)
        theta_s = float(scale / g)

    if "p0" not in frozen:
        h = int(active.size)
        p0 = float(rng.beta(hp.alpha_p + h, hp.beta_p + ws.K - h))

    if "theta" not in frozen:
        theta_std = np.zeros(K)
        if active.size:
            mu, c, low = ws.posterior_gaussian(active, theta_s, sigma2)
            z = rng.standard_normal(active.size)
            # theta = mu + sqrt(sigma2) * C^{-T} z  gives cov sigma2 * A^{-1}
            dev = solve_triangular(c, z, lower=low, trans=1 if low else 0)
            theta_std[active] = mu + np.sqrt(sigma2) * dev

    return theta_std, psi, theta_s, sigma2, p0, flips


def initialize(Y: np.ndarray, L: LibraryMatrix, hp: Hyperparameters, seed: int) -> SamplerState:
    """Chain initialization: OLS residual variance, greedy latent vector,
    and a conjugate Gaussian draw for the starting weights.

    The greedy pass starts from the empty model and keeps adding the
    single best column while it reduces the OLS mean-squared error by more
    than 1% (relative); this reproduces forward selection on exact data.
    """
    ws = _Workspace(Y, L)
    rng = np.random.default_rng(seed)
    Y = np.asarray(Y, dtype=float).ravel()

    # full-library least squares for the initial noise variance
    Ls = (L.values / ws.scales)
    coef, *_ = np.linalg.lstsq(Ls, Y, rcond=None)
    resid = Y - Ls @ coef
    sigma2 = float(max(np.var(resid), np.finfo(float).eps))

    # greedy forward selection on OLS mse
    active: list[int] = []
    mse = ws.yty / ws.N
    ridge = 1e-10
    for _ in range(ws.K):
        best_k, best_mse = -1, mse
        for k in range(ws.K):
            if k in active:
                continue
            trial = np.array(sorted(active + [k]))
            A = ws.G[np.ix_(trial, trial)].copy()
            A[np.diag_indices_from(A)] += ridge * max(np.trace(A) / trial.size, 1.0)
            try:
                sol = np.linalg.solve(A, ws.b[trial])
            except np.linalg.LinAlgError:
                continue
            m = (ws.yty - float(ws.b[trial] @ sol)) / ws.N
            if m < best_mse:
                best_k, best_mse = k, m
        if best_k < 0 or (mse - best_mse) <= 0.01 * max(mse, np.finfo(float).eps):
            break
        active.append(best_k)
        mse = best_mse

    psi = np.zeros(ws.K, dtype=np.int8)
    psi[active] = 1
    theta_std = np.zeros(ws.K)
    act = np.flatnonzero(psi > 0)
    if act.size:
        mu, c, low = ws.posterior_gaussian(act, hp.theta_s_init, sigma2)
        z = rng.standard_normal(act.size)
        dev = solve_triangular(c, z, lower=low, trans=1 if low else 0)
        theta_std[act] = mu + np.sqrt(sigma2) * dev
    return SamplerState(
        theta=theta_std / ws.scales,
        psi=psi,
        theta_s=hp.theta_s_init,
        sigma2=sigma2,
        p0=hp.p0_init,
        rng=rng,
    )


def gibbs_sweep(state: SamplerState, Y: np.ndarray, L: LibraryMatrix,
                hp: Hyperparameters, frozen: frozenset = _FROZEN_NONE) -> SamplerState:
    """One full sweep of the Gibbs kernel, returning a new state."""
    ws = _Workspace(Y, L)
    theta_std = state.theta * ws.scales
    psi = state.psi.copy()
    theta_std, psi, theta_s, sigma2, p0, _ = _sweep(
        ws, theta_std, psi, state.theta_s, state.sigma2, state.p0, state.rng, hp, frozen
    )
    return SamplerState(
        theta=theta_std / ws.scales,
        psi=psi,
        theta_s=theta_s,
        sigma2=sigma2,
        p0=p0,
        rng=state.rng,
    )


def run_chain(Y: np.ndarray, L: LibraryMatrix, hp: Hyperparameters, seed: int,
              frozen: frozenset = _FROZEN_NONE, latent_order: str = "ascending",
              init_state: SamplerState | None = None,
              store_samples: bool = False) -> PosteriorSummary:
    """Run the full chain and summarize the retained samples.

    PIP is the arithmetic mean of each latent indicator over retained
    sweeps; columns with PIP above ``hp.pip_threshold`` are selected.
    Coefficient moments are empirical over the retained sweeps in which the
    whole selected set is simultaneously active (conditional-on-inclusion
    moments; with decisive chains that is every retained sweep), zero off
    the selection.  Deterministic given (Y, L, hp, seed).
    """
    if latent_order not in ("ascending", "random"):
        raise ConfigurationError("latent_order must be 'ascending' or 'random'")
    ws = _Workspace(Y, L)
    state = init_state if init_state is not None else initialize(Y, L, hp, seed)
    rng = state.rng
    theta_std = state.theta * ws.scales
    psi = state.psi.copy()
    theta_s, sigma2, p0 = state.theta_s, state.sigma2, state.p0

    n_keep = hp.n_mcmc - hp.n_burn
    psi_kept = np.zeros((n_keep, ws.K), dtype=np.int8)
    theta_kept = np.zeros((n_keep, ws.K))
    sigma2_kept = np.zeros(n_keep)
    flip_count = np.zeros(ws.K, dtype=np.int64)

    for it in range(hp.n_mcmc):
        order = rng.permutation(ws.K) if latent_order == "random" else None
        theta_std, psi, theta_s, sigma2, p0, flips = _sweep(
            ws, theta_std, psi, theta_s, sigma2, p0, rng, hp, frozen, order
        )
        if it >= hp.n_burn:
            j = it - hp.n_burn
            psi_kept[j] = psi
            theta_kept[j] = theta_std
            sigma2_kept[j] = sigma2
            flip_count += flips

    pip = psi_kept.mean(axis=0)
    selected = [int(k) for k in np.flatnonzero(pip > hp.pip_threshold)]
    mu = np.zeros(ws.K)
    cov = np.zeros((ws.K, ws.K))
    n_consensus = n_keep
    if selected:
        sel = np.array(selected)
        mask = psi_kept[:, sel].all(axis=1)
        n_consensus = int(mask.sum())
        rows = theta_kept[np.flatnonzero(mask)][:, sel] if n_consensus else theta_kept[:, sel]
        mu[sel] = rows.mean(axis=0)
        if rows.shape[0] > 1:
            dev = rows - rows.mean(axis=0)
            cov[np.ix_(sel, sel)] = dev.T @ dev / (rows.shape[0] - 1)
    # back to original units
    mu = mu / ws.scales
    cov = cov / np.outer(ws.scales, ws.scales)

    confused = [ws.labels[k] for k in range(ws.K) if 0.3 < pip[k] < 0.7]
    summary = PosteriorSummary(
        labels=ws.labels,
        pip=pip,
        selected=selected,
        mu_theta=mu,
        sigma_theta=cov,
        mu_sigma2=float(sigma2_kept.mean()),
        n_mc=n_keep,
        seed=seed,
        hyperparameters=hp,
        flip_rate=flip_count / float(hp.n_mcmc),
        confused=confused,
        n_consensus=n_consensus,
    )
    if store_samples:
        summary.samples = {
            "theta": theta_kept / ws.scales,
            "psi": psi_kept,
            "sigma2": sigma2_kept,
        }
    return summary


def predict(summary: PosteriorSummary, Lp: LibraryMatrix):
    """Posterior-predictive mean and covariance on a test library.

    mean = Lp mu_theta; cov = Lp Sigma_theta Lp^T + mu_sigma2 I.  The test
    library must be label-identical to the training one.
    """
    if list(Lp.labels) != list(summary.labels):
        raise ConfigurationError("test library columns do not match the training library")
    mean = Lp.values @ summary.mu_theta
    cov = Lp.values @ summary.sigma_theta @ Lp.values.T
    cov[np.diag_indices_from(cov)] += summary.mu_sigma2
    return mean, cov

"""Self-contained (mu/mu_w, lambda) covariance matrix adaptation evolution strategy.

Maximization convention throughout: higher fitness is better, and the update
consumes only the ranking of the fitness values, never their magnitudes.
The sample-evaluate-update cycle is split into ask (draw a population from
N(mean, sigma^2 C)) and tell (rank, recombine the top mu, adapt the evolution
paths, step size, and covariance). Strategy constants follow the standard
dimension-dependent defaults. The eigendecomposition of C used for sampling
is refreshed lazily because it dominates the update cost in high dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

SIGMA_FLOOR = 1e-12
CONDITION_LIMIT = 1e14


def default_population(dimension: int) -> int:
    """Standard population size: 4 + floor(3 ln d)."""
    return 4 + int(3 * math.log(dimension))


@dataclass(frozen=True)
class CmaConfig:
    """Search setup; population and parents default to the standard sizes."""

    dimension: int
    initial_sigma: float = 0.5
    population: int | None = None
    parents: int | None = None
    initial_mean: np.ndarray | None = None
    seed: int = 0


@dataclass(frozen=True)
class _Strategy:
    """Dimension-dependent constants, fixed at init."""

    dimension: int
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float
    eigen_gap: int


@dataclass
class CmaState:
    """Full optimizer state; ask and tell require exclusive access."""

    strategy: _Strategy
    mean: np.ndarray
    sigma: float
    covariance: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int
    rng: np.random.Generator
    # eigendecomposition cache: covariance = B diag(D^2) B^T as of eigen_generation
    eig_b: np.ndarray = field(default=None)  # type: ignore[assignment]
    eig_d: np.ndarray = field(default=None)  # type: ignore[assignment]
    inv_sqrt: np.ndarray = field(default=None)  # type: ignore[assignment]
    eigen_generation: int = 0

    @property
    def weights(self) -> np.ndarray:
        return self.strategy.weights

    @property
    def dimension(self) -> int:
        return self.strategy.dimension

    @property
    def population(self) -> int:
        return self.strategy.lam

    def condition_number(self) -> float:
        d = self.eig_d
        return float((d.max() / d.min()) ** 2)

    def copy(self) -> "CmaState":
        """Deep copy, including the generator state."""
        bg = np.random.PCG64()
        bg.state = self.rng.bit_generator.state
        return CmaState(
            strategy=self.strategy,
            mean=self.mean.copy(),
            sigma=self.sigma,
            covariance=self.covariance.copy(),
            path_sigma=self.path_sigma.copy(),
            path_c=self.path_c.copy(),
            generation=self.generation,
            rng=np.random.Generator(bg),
            eig_b=self.eig_b.copy(),
            eig_d=self.eig_d.copy(),
            inv_sqrt=self.inv_sqrt.copy(),
            eigen_generation=self.eigen_generation,
        )


def _make_strategy(dimension: int, lam: int, mu: int) -> _Strategy:
    raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1, dtype=np.float64))
    weights = raw / raw.sum()
    mu_eff = float(1.0 / np.sum(weights**2))
    d = float(dimension)
    c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (d + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d)
    c_1 = 2.0 / ((d + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))
    eigen_gap = max(1, math.ceil(1.0 / (10.0 * d * (c_1 + c_mu))))
    weights.setflags(write=False)
    return _Strategy(
        dimension=dimension,
        lam=lam,
        mu=mu,
        weights=weights,
        mu_eff=mu_eff,
        c_sigma=c_sigma,
        d_sigma=d_sigma,
        c_c=c_c,
        c_1=c_1,
        c_mu=c_mu,
        chi_n=chi_n,
        eigen_gap=eigen_gap,
    )


def init(config: CmaConfig) -> CmaState:
    """Fresh optimizer state: identity covariance, zero paths, log-rank weights."""
    d = config.dimension
    if d < 1:
        raise ConfigError(f"dimension must be >= 1, got {d}")
    if config.initial_sigma <= 0.0:
        raise ConfigError(f"initial_sigma must be > 0, got {config.initial_sigma}")
    lam = config.population if config.population is not None else default_population(d)
    if lam < 2:
        raise ConfigError(f"population must be >= 2, got {lam}")
    mu = config.parents if config.parents is not None else lam // 2
    if not 1 <= mu <= lam:
        raise ConfigError(f"parents must be in 1..{lam}, got {mu}")
    if config.initial_mean is None:
        mean = np.zeros(d, dtype=np.float64)
    else:
        mean = np.array(config.initial_mean, dtype=np.float64)
        if mean.shape != (d,):
            raise ConfigError(f"initial_mean must have length {d}, got {mean.shape}")
    return CmaState(
        strategy=_make_strategy(d, lam, mu),
        mean=mean,
        sigma=float(config.initial_sigma),
        covariance=np.eye(d, dtype=np.float64),
        path_sigma=np.zeros(d, dtype=np.float64),
        path_c=np.zeros(d, dtype=np.float64),
        generation=0,
        rng=np.random.Generator(np.random.PCG64(config.seed)),
        eig_b=np.eye(d, dtype=np.float64),
        eig_d=np.ones(d, dtype=np.float64),
        inv_sqrt=np.eye(d, dtype=np.float64),
        eigen_generation=0,
    )


def _refresh_eigensystem(state: CmaState) -> None:
    eigvals, eigvecs = np.linalg.eigh(state.covariance)
    if not np.all(np.isfinite(eigvals)) or eigvals.min() <= 0.0:
        raise NumericalError(
            f"covariance is no longer positive definite (min eigenvalue {eigvals.min()})"
        )
    state.eig_b = eigvecs
    state.eig_d = np.sqrt(eigvals)
    inv_sqrt = eigvecs @ np.diag(1.0 / state.eig_d) @ eigvecs.T
    state.inv_sqrt = (inv_sqrt + inv_sqrt.T) / 2.0
    state.eigen_generation = state.generation


def ask(state: CmaState) -> list[np.ndarray]:
    """Sample the population from N(mean, sigma^2 C); advances the generator."""
    if state.generation - state.eigen_generation >= state.strategy.eigen_gap:
        _refresh_eigensystem(state)
    z = state.rng.standard_normal((state.strategy.lam, state.strategy.dimension))
    cands = state.mean + state.sigma * (z * state.eig_d) @ state.eig_b.T
    return [cands[i] for i in range(state.strategy.lam)]


def tell(
    state: CmaState, candidates: list[np.ndarray], fitnesses: list[float]
) -> CmaState:
    """Rank-based update. Returns the successor state; the input is untouched.

    Candidates are sorted descending by fitness with ties broken by index,
    the mean moves to the weighted recombination of the top mu, and the
    evolution paths, step size, and covariance follow the standard update.
    """
    st = state.strategy
    if len(candidates) != st.lam or len(fitnesses) != st.lam:
        raise ShapeError(
            f"expected {st.lam} candidates and fitnesses, "
            f"got {len(candidates)} and {len(fitnesses)}"
        )
    xs = np.asarray(candidates, dtype=np.float64)
    if xs.shape != (st.lam, st.dimension):
        raise ShapeError(f"candidates must be {st.lam}x{st.dimension}, got {xs.shape}")
    fs = np.asarray(fitnesses, dtype=np.float64)
    if not np.all(np.isfinite(fs)):
        raise ShapeError("non-finite fitness values are not rankable")

    order = np.argsort(-fs, kind="stable")
    sel = xs[order[: st.mu]]

    xold = state.mean
    sigma = state.sigma
    gen = state.generation
    mean = st.weights @ sel
    y_w = (mean - xold) / sigma

    ps = (1.0 - st.c_sigma) * state.path_sigma + math.sqrt(
        st.c_sigma * (2.0 - st.c_sigma) * st.mu_eff
    ) * (state.inv_sqrt @ y_w)
    norm_ps = float(np.linalg.norm(ps))
    hsig = float(
        norm_ps / math.sqrt(1.0 - (1.0 - st.c_sigma) ** (2 * (gen + 1))) / st.chi_n
        < 1.4 + 2.0 / (st.dimension + 1.0)
    )
    pc = (1.0 - st.c_c) * state.path_c + hsig * math.sqrt(
        st.c_c * (2.0 - st.c_c) * st.mu_eff
    ) * y_w

    ys = (sel - xold) / sigma
    rank_mu = ys.T @ (st.weights[:, None] * ys)
    delta_h = (1.0 - hsig) * st.c_c * (2.0 - st.c_c)
    cov = (
        (1.0 - st.c_1 - st.c_mu) * state.covariance
        + st.c_1 * (np.outer(pc, pc) + delta_h * state.covariance)
        + st.c_mu * rank_mu
    )
    cov = (cov + cov.T) / 2.0

    new_sigma = sigma * math.exp(
        min(1.0, (st.c_sigma / st.d_sigma) * (norm_ps / st.chi_n - 1.0))
    )

    return CmaState(
        strategy=st,
        mean=mean,
        sigma=new_sigma,
        covariance=cov,
        path_sigma=ps,
        path_c=pc,
        generation=gen + 1,
        rng=state.rng,
        eig_b=state.eig_b,
        eig_d=state.eig_d,
        inv_sqrt=state.inv_sqrt,
        eigen_generation=state.eigen_generation,
    )


def should_stop(state: CmaState, budget: int) -> tuple[bool, str]:
    """Stop on generation budget, step-size collapse, or ill-conditioned C."""
    if state.generation >= budget:
        return True, "budget"
    if state.sigma < SIGMA_FLOOR:
        return True, "sigma-collapse"
    if state.condition_number() > CONDITION_LIMIT:
        return True, "condition"
    return False, ""


def state_to_dict(state: CmaState) -> dict:
    """Serialize for checkpoints; round-trips bit-exactly via state_from_dict."""
    return {
        "dimension": state.strategy.dimension,
        "population": state.strategy.lam,
        "parents": state.strategy.mu,
        "mean": state.mean.tolist(),
        "sigma": state.sigma,
        "covariance": state.covariance.tolist(),
        "path_sigma": state.path_sigma.tolist(),
        "path_c": state.path_c.tolist(),
        "generation": state.generation,
        "rng_state": state.rng.bit_generator.state,
        "eig_b": state.eig_b.tolist(),
        "eig_d": state.eig_d.tolist(),
        "inv_sqrt": state.inv_sqrt.tolist(),
        "eigen_generation": state.eigen_generation,
    }


def state_from_dict(data: dict) -> CmaState:
    """Rebuild a CmaState serialized by state_to_dict."""
    bg = np.random.PCG64()
    bg.state = data["rng_state"]
    return CmaState(
        strategy=_make_strategy(data["dimension"], data["population"], data["parents"]),
        mean=np.asarray(data["mean"], dtype=np.float64),
        sigma=float(data["sigma"]),
        covariance=np.asarray(data["covariance"], dtype=np.float64),
        path_sigma=np.asarray(data["path_sigma"], dtype=np.float64),
        path_c=np.asarray(data["path_c"], dtype=np.float64),
        generation=int(data["generation"]),
        rng=np.random.Generator(bg),
        eig_b=np.asarray(data["eig_b"], dtype=np.float64),
        eig_d=np.asarray(data["eig_d"], dtype=np.float64),
        inv_sqrt=np.asarray(data["inv_sqrt"], dtype=np.float64),
        eigen_generation=int(data["eigen_generation"]),
    )

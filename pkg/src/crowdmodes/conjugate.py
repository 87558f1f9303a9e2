"""Conjugate sufficient statistics and posterior predictive densities.

Two families cover the whole model: Dirichlet-multinomial for grid-cell
tokens and Normal-Inverse-Gamma for the scalar (timestamp / speed) channels,
whose posterior predictive is a Student-t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import InvalidInputError


# ---------------------------------------------------------------------------
# Dirichlet-multinomial


@dataclass
class DirMultStats:
    """Per-cell counts of one categorical mode under a symmetric Dirichlet prior."""

    counts: np.ndarray
    eta: float
    total: int = 0

    @classmethod
    def empty(cls, vocab_size: int, eta: float = 0.5) -> "DirMultStats":
        if eta <= 0:
            raise InvalidInputError("eta must be > 0")
        return cls(np.zeros(vocab_size, dtype=np.int64), float(eta), 0)

    @property
    def vocab_size(self) -> int:
        return len(self.counts)

    def add(self, cell: int) -> None:
        self.counts[cell] += 1
        self.total += 1

    def remove(self, cell: int) -> None:
        if self.counts[cell] <= 0:
            raise InvalidInputError(f"cell {cell} has no observations to remove")
        self.counts[cell] -= 1
        self.total -= 1

    def copy(self) -> "DirMultStats":
        return DirMultStats(self.counts.copy(), self.eta, self.total)


def space_predictive(stats: DirMultStats, cell: int) -> float:
    """Posterior predictive probability of a cell, (c + eta) / (n + V eta)."""
    if cell < 0 or cell >= stats.vocab_size:
        raise InvalidInputError(f"cell {cell} outside vocabulary of {stats.vocab_size}")
    v = stats.vocab_size
    return (stats.counts[cell] + stats.eta) / (stats.total + v * stats.eta)


def dirmult_log_predictive(counts, totals, eta: float, vocab_size: int, cell: int):
    """Vectorized log predictive of one cell under stacked count rows."""
    c = np.asarray(counts)[..., cell]
    return np.log(c + eta) - np.log(np.asarray(totals) + vocab_size * eta)


def dirmult_log_joint(counts, totals, eta: float, vocab_size: int, cells) -> np.ndarray:
    """Log joint predictive of a multiset of cells under stacked count rows.

    Equals the product of sequential one-step predictives; computed in
    closed form as a ratio of Dirichlet normalizers.
    """
    cells = np.asarray(cells, dtype=np.int64)
    counts = np.atleast_2d(np.asarray(counts))
    totals = np.atleast_1d(np.asarray(totals, dtype=float))
    uniq, mult = np.unique(cells, return_counts=True)
    base = counts[:, uniq].astype(float) + eta
    num = gammaln(base + mult[None, :]).sum(axis=1) - gammaln(base).sum(axis=1)
    tot = totals + vocab_size * eta
    den = gammaln(tot + len(cells)) - gammaln(tot)
    return num - den


# ---------------------------------------------------------------------------
# Normal-Inverse-Gamma


@dataclass(frozen=True)
class NigPrior:
    """NIG(mu0, kappa0, a0, b0) prior over a Gaussian's mean and variance."""

    mu0: float = 0.0
    kappa0: float = 1.0
    a0: float = 1.0
    b0: float = 1.0

    def __post_init__(self):
        if self.kappa0 <= 0 or self.a0 <= 0 or self.b0 <= 0:
            raise InvalidInputError("NIG prior needs kappa0, a0, b0 > 0")


@dataclass
class NigStats:
    """Scalar sufficient statistics (n, sum, sum of squares) under a NIG prior."""

    prior: NigPrior
    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        self.total += x
        self.total_sq += x * x

    def remove(self, x: float) -> None:
        if self.n <= 0:
            raise InvalidInputError("no observations to remove")
        self.n -= 1
        self.total -= x
        self.total_sq -= x * x

    def copy(self) -> "NigStats":
        return NigStats(self.prior, self.n, self.total, self.total_sq)


def nig_posterior(prior: NigPrior, n, total, total_sq):
    """Posterior NIG parameters (mu_n, kappa_n, a_n, b_n) given the stats.

    Accepts scalars or aligned arrays.
    """
    n = np.asarray(n, dtype=float)
    total = np.asarray(total, dtype=float)
    total_sq = np.asarray(total_sq, dtype=float)
    kappa_n = prior.kappa0 + n
    mu_n = (prior.kappa0 * prior.mu0 + total) / kappa_n
    a_n = prior.a0 + n / 2.0
    mean = np.divide(total, n, out=np.zeros_like(total), where=n > 0)
    ss = np.maximum(total_sq - n * mean * mean, 0.0)
    b_n = prior.b0 + 0.5 * ss + 0.5 * prior.kappa0 * n * (mean - prior.mu0) ** 2 / kappa_n
    return mu_n, kappa_n, a_n, b_n


def student_t_logpdf(x, df, loc, scale):
    """Log density of a location-scale Student-t; vectorized."""
    z = (np.asarray(x, dtype=float) - loc) / scale
    return (
        gammaln((df + 1.0) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * np.log(df * np.pi)
        - np.log(scale)
        - (df + 1.0) / 2.0 * np.log1p(z * z / df)
    )


def nig_predictive_params(prior: NigPrior, n, total, total_sq):
    """Student-t (df, loc, scale) of the NIG posterior predictive."""
    mu_n, kappa_n, a_n, b_n = nig_posterior(prior, n, total, total_sq)
    df = 2.0 * a_n
    scale = np.sqrt(b_n * (kappa_n + 1.0) / (a_n * kappa_n))
    return df, mu_n, scale


def scalar_predictive(stats: NigStats, value: float) -> float:
    """Posterior predictive density of a scalar under NIG statistics."""
    df, loc, scale = nig_predictive_params(stats.prior, stats.n, stats.total, stats.total_sq)
    return float(np.exp(student_t_logpdf(value, df, loc, scale)))


def nig_log_marginal(prior: NigPrior, n, total, total_sq):
    """Log marginal likelihood of data with the given sufficient statistics."""
    n = np.asarray(n, dtype=float)
    _, kappa_n, a_n, b_n = nig_posterior(prior, n, total, total_sq)
    return (
        -0.5 * n * np.log(2.0 * np.pi)
        + 0.5 * (np.log(prior.kappa0) - np.log(kappa_n))
        + prior.a0 * np.log(prior.b0)
        - a_n * np.log(b_n)
        + gammaln(a_n)
        - gammaln(prior.a0)
    )


def nig_log_joint(prior: NigPrior, n, total, total_sq, values) -> np.ndarray:
    """Log joint predictive of ``values`` under stacked NIG statistics.

    Ratio of marginal likelihoods with and without the new batch; equals the
    product of sequential one-step Student-t predictives.
    """
    values = np.asarray(values, dtype=float)
    m = len(values)
    s, ss = values.sum(), (values * values).sum()
    n = np.asarray(n, dtype=float)
    total = np.asarray(total, dtype=float)
    total_sq = np.asarray(total_sq, dtype=float)
    return nig_log_marginal(prior, n + m, total + s, total_sq + ss) - nig_log_marginal(
        prior, n, total, total_sq
    )


# ---------------------------------------------------------------------------
# Concentration parameters of the six Dirichlet processes


@dataclass(frozen=True)
class HyperParams:
    """Concentrations of the six DPs plus the shared Gamma prior.

    gamma_* are the top-level (menu) concentrations and alpha_* the
    restaurant-level ones, for the space / time / speed processes
    respectively. ``customer_selection`` bounds the subsample used to
    approximate a table's collective scalar-channel preference.
    """

    gamma_s: float = 0.1
    alpha_s: float = 0.1
    gamma_t: float = 0.1
    alpha_t: float = 0.1
    gamma_e: float = 0.1
    alpha_e: float = 0.1
    prior_shape: float = 1.0
    prior_rate: float = 1.0
    customer_selection: int = 1000

    def __post_init__(self):
        vals = (self.gamma_s, self.alpha_s, self.gamma_t, self.alpha_t,
                self.gamma_e, self.alpha_e)
        if any(v < 0 for v in vals):
            raise InvalidInputError("concentration parameters must be >= 0")
        if self.prior_shape <= 0 or self.prior_rate <= 0:
            raise InvalidInputError("Gamma prior shape/rate must be > 0")
        if self.customer_selection < 1:
            raise InvalidInputError("customer_selection must be >= 1")

"""Chinese Restaurant Franchise Gibbs sampler for a single HDP.

Customers (observations) sit at tables inside restaurants (data groups);
every table serves one dish (a global mode) from a shared menu. The sampler
alternates customer-level table moves, table-level dish moves and
concentration resampling. The same machinery runs standalone (infinite
mixture over one channel) and as the inner engine of the coupled triplet
sampler.

All categorical draws happen on log weights with max subtraction, via
inverse CDF on the main generator, so a (data, config, seed) triple fully
determines the trajectory of the chain. Dish statistics live in reusable
array slots so predictive likelihoods vectorize across the whole menu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .conjugate import NigPrior, nig_posterior
from .errors import ConsistencyError, InvalidInputError

_NEG_INF = float("-inf")
_LOG_2PI = math.log(2.0 * math.pi)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else _NEG_INF


# ---------------------------------------------------------------------------
# Slotted dish-statistic families


class DirMultFamily:
    """Dirichlet-multinomial dish statistics stored in reusable slots."""

    kind = "dirmult"

    def __init__(self, vocab_size: int, eta: float = 0.5, capacity: int = 8):
        self.vocab_size = int(vocab_size)
        self.eta = float(eta)
        self.counts = np.zeros((capacity, self.vocab_size), dtype=np.int64)
        self.totals = np.zeros(capacity, dtype=np.int64)
        self._log_prior = -math.log(self.vocab_size)

    @property
    def capacity(self) -> int:
        return len(self.totals)

    def grow(self, capacity: int) -> None:
        extra = capacity - self.capacity
        self.counts = np.vstack(
            [self.counts, np.zeros((extra, self.vocab_size), dtype=np.int64)]
        )
        self.totals = np.concatenate([self.totals, np.zeros(extra, dtype=np.int64)])

    def clear_slot(self, d: int) -> None:
        self.counts[d] = 0
        self.totals[d] = 0

    def add(self, d: int, x) -> None:
        self.counts[d, int(x)] += 1
        self.totals[d] += 1

    def remove(self, d: int, x) -> None:
        self.counts[d, int(x)] -= 1
        self.totals[d] -= 1

    def add_many(self, d: int, xs) -> None:
        np.add.at(self.counts[d], np.asarray(xs, dtype=np.int64), 1)
        self.totals[d] += len(xs)

    def remove_many(self, d: int, xs) -> None:
        np.add.at(self.counts[d], np.asarray(xs, dtype=np.int64), -1)
        self.totals[d] -= len(xs)

    def set_from_values(self, d: int, xs) -> None:
        self.counts[d] = np.bincount(
            np.asarray(xs, dtype=np.int64), minlength=self.vocab_size
        )
        self.totals[d] = len(xs)

    def log_predictive(self, slots, x) -> np.ndarray:
        x = int(x)
        return np.log(
            (self.counts[slots, x] + self.eta)
            / (self.totals[slots] + self.vocab_size * self.eta)
        )

    def log_prior_predictive(self, x) -> float:
        return self._log_prior

    def log_predictive_with_prior(self, slots, x):
        return self.log_predictive(slots, x), self._log_prior

    def log_joint(self, slots, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        uniq, mult = np.unique(xs, return_counts=True)
        base = self.counts[np.asarray(slots)][:, uniq] + self.eta
        num = gammaln(base + mult[None, :]).sum(axis=1) - gammaln(base).sum(axis=1)
        tot = self.totals[slots] + self.vocab_size * self.eta
        return num - (gammaln(tot + len(xs)) - gammaln(tot))

    def log_joint_prior(self, xs) -> float:
        xs = np.asarray(xs, dtype=np.int64)
        uniq, mult = np.unique(xs, return_counts=True)
        num = (gammaln(self.eta + mult) - gammaln(self.eta)).sum()
        tot = self.vocab_size * self.eta
        return float(num - (gammaln(tot + len(xs)) - gammaln(tot)))

    def log_score(self, dish_of, xs) -> float:
        """Summed log predictive of each value under its own dish."""
        dish_of = np.asarray(dish_of)
        xs = np.asarray(xs, dtype=np.int64)
        return float(
            np.log(
                (self.counts[dish_of, xs] + self.eta)
                / (self.totals[dish_of] + self.vocab_size * self.eta)
            ).sum()
        )


class NigFamily:
    """Normal-Inverse-Gamma dish statistics stored in reusable slots.

    The posterior predictive is a Student-t. Its parameters and the current
    log marginal likelihood are cached per slot and refreshed lazily, so a
    single customer move only dirties the one or two dishes it touched; the
    df-dependent normalizers depend on the integer customer count alone and
    are memoized in lookup tables indexed by n.
    """

    kind = "nig"

    def __init__(self, prior: NigPrior, capacity: int = 8):
        self.prior = prior
        self.n = np.zeros(capacity, dtype=np.int64)
        self.total = np.zeros(capacity, dtype=float)
        self.total_sq = np.zeros(capacity, dtype=float)
        self._k0mu0 = prior.kappa0 * prior.mu0
        self._const = np.empty(0)
        self._gml_an = np.empty(0)
        self._ensure_const(64)
        a0, k0, b0 = prior.a0, prior.kappa0, prior.b0
        self._prior_c = float(self._const[0])
        self._prior_logscale = 0.5 * math.log(b0 * (k0 + 1.0) / (a0 * k0))
        self._prior_w = k0 / (2.0 * b0 * (k0 + 1.0))
        self._prior_a = a0 + 0.5
        # marginal-likelihood constant: log kappa0 / 2 + a0 log b0 - gammaln(a0)
        self._gml_base = 0.5 * math.log(k0) + a0 * math.log(b0) - gammaln(a0)
        self._mu = np.full(capacity, prior.mu0)
        self._an = np.full(capacity, a0)
        self._bn = np.full(capacity, b0)
        self._kap = np.full(capacity, k0)
        self._logscale = np.full(capacity, self._prior_logscale)
        self._w = np.full(capacity, self._prior_w)
        self._logml = np.zeros(capacity)

    @property
    def capacity(self) -> int:
        return len(self.n)

    def grow(self, capacity: int) -> None:
        extra = capacity - self.capacity
        prior = self.prior
        self.n = np.concatenate([self.n, np.zeros(extra, dtype=np.int64)])
        self.total = np.concatenate([self.total, np.zeros(extra)])
        self.total_sq = np.concatenate([self.total_sq, np.zeros(extra)])
        self._mu = np.concatenate([self._mu, np.full(extra, prior.mu0)])
        self._an = np.concatenate([self._an, np.full(extra, prior.a0)])
        self._bn = np.concatenate([self._bn, np.full(extra, prior.b0)])
        self._kap = np.concatenate([self._kap, np.full(extra, prior.kappa0)])
        self._logscale = np.concatenate([self._logscale, np.full(extra, self._prior_logscale)])
        self._w = np.concatenate([self._w, np.full(extra, self._prior_w)])
        self._logml = np.concatenate([self._logml, np.zeros(extra)])

    def _ensure_const(self, nmax: int) -> None:
        # gammaln(a_n + 1/2) - gammaln(a_n) - log(2 a_n pi)/2 for a_n = a0 + n/2,
        # and gammaln(a_n) itself for the marginal likelihood, indexed by n
        if len(self._const) > nmax:
            return
        ns = np.arange(0, nmax + 65, dtype=float)
        an = self.prior.a0 + 0.5 * ns
        gl = gammaln(an)
        self._const = gammaln(an + 0.5) - gl - 0.5 * np.log(2.0 * an * np.pi)
        self._gml_an = gl

    def _recompute_slot(self, d: int) -> None:
        prior = self.prior
        n = int(self.n[d])
        s = float(self.total[d])
        kap = prior.kappa0 + n
        mu = (self._k0mu0 + s) / kap
        an = prior.a0 + 0.5 * n
        if n > 0:
            ss = float(self.total_sq[d])
            mean = s / n
            bn = (
                prior.b0
                + 0.5 * max(ss - s * mean, 0.0)
                + (0.5 * prior.kappa0) * n * (mean - prior.mu0) ** 2 / kap
            )
        else:
            bn = prior.b0
        if n >= len(self._const):
            self._ensure_const(n)
        self._mu[d] = mu
        self._an[d] = an
        self._bn[d] = bn
        self._kap[d] = kap
        self._logscale[d] = 0.5 * math.log(bn * (kap + 1.0) / (an * kap))
        self._w[d] = kap / (2.0 * bn * (kap + 1.0))
        self._logml[d] = (
            -0.5 * n * _LOG_2PI
            + self._gml_base
            - 0.5 * math.log(kap)
            - an * math.log(bn)
            + self._gml_an[n]
        )

    def clear_slot(self, d: int) -> None:
        self.n[d] = 0
        self.total[d] = 0.0
        self.total_sq[d] = 0.0
        self._recompute_slot(d)

    def add(self, d: int, x) -> None:
        x = float(x)
        self.n[d] += 1
        self.total[d] += x
        self.total_sq[d] += x * x
        self._recompute_slot(d)

    def remove(self, d: int, x) -> None:
        x = float(x)
        self.n[d] -= 1
        self.total[d] -= x
        self.total_sq[d] -= x * x
        self._recompute_slot(d)

    def add_many(self, d: int, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        self.n[d] += len(xs)
        self.total[d] += xs.sum()
        self.total_sq[d] += (xs * xs).sum()
        self._recompute_slot(d)

    def remove_many(self, d: int, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        self.n[d] -= len(xs)
        self.total[d] -= xs.sum()
        self.total_sq[d] -= (xs * xs).sum()
        self._recompute_slot(d)

    def set_from_values(self, d: int, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        self.n[d] = len(xs)
        self.total[d] = xs.sum()
        self.total_sq[d] = (xs * xs).sum()
        self._recompute_slot(d)

    def log_predictive(self, slots, x) -> np.ndarray:
        q = float(x) - self._mu[slots]
        q *= q
        an = self._an[slots]
        return (
            self._const[self.n[slots]]
            - self._logscale[slots]
            - (an + 0.5) * np.log1p(q * self._w[slots])
        )

    def log_prior_predictive(self, x) -> float:
        q = float(x) - self.prior.mu0
        return (
            self._prior_c
            - self._prior_logscale
            - self._prior_a * math.log1p(q * q * self._prior_w)
        )

    def log_predictive_with_prior(self, slots, x):
        return self.log_predictive(slots, x), self.log_prior_predictive(x)

    def log_predictive_batch(self, slots, xs) -> np.ndarray:
        """(len(xs), len(slots)) matrix of log predictive densities."""
        q = np.asarray(xs, dtype=float)[:, None] - self._mu[slots][None, :]
        q *= q
        an = self._an[slots]
        return (
            self._const[self.n[slots]][None, :]
            - self._logscale[slots][None, :]
            - (an + 0.5)[None, :] * np.log1p(q * self._w[slots][None, :])
        )

    def log_prior_predictive_batch(self, xs) -> np.ndarray:
        q = np.asarray(xs, dtype=float) - self.prior.mu0
        return (
            self._prior_c
            - self._prior_logscale
            - self._prior_a * np.log1p(q * q * self._prior_w)
        )

    def log_score(self, dish_of, xs) -> float:
        """Summed log predictive of each value under its own dish."""
        dish_of = np.asarray(dish_of)
        q = np.asarray(xs, dtype=float) - self._mu[dish_of]
        q *= q
        an = self._an[dish_of]
        return float(
            (
                self._const[self.n[dish_of]]
                - self._logscale[dish_of]
                - (an + 0.5) * np.log1p(q * self._w[dish_of])
            ).sum()
        )

    def log_marginal(self, n, total, total_sq):
        """Log marginal likelihood of data with the given statistics."""
        n = np.asarray(n, dtype=float)
        _, kappa_n, a_n, b_n = nig_posterior(self.prior, n, total, total_sq)
        return (
            -0.5 * n * _LOG_2PI
            + self._gml_base
            - 0.5 * np.log(kappa_n)
            - a_n * np.log(b_n)
            + gammaln(a_n)
        )

    def log_joint(self, slots, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        m, s, ss = len(xs), xs.sum(), (xs * xs).sum()
        n = self.n[slots] + m
        tot = self.total[slots] + s
        totsq = self.total_sq[slots] + ss
        prior = self.prior
        kap = prior.kappa0 + n
        an = prior.a0 + 0.5 * n
        mean = tot / n
        bn = (
            prior.b0
            + 0.5 * np.maximum(totsq - tot * mean, 0.0)
            + (0.5 * prior.kappa0) * n * (mean - prior.mu0) ** 2 / kap
        )
        self._ensure_const(int(n.max()) if len(n) else 0)
        logml_new = (
            -0.5 * n * _LOG_2PI
            + self._gml_base
            - 0.5 * np.log(kap)
            - an * np.log(bn)
            + self._gml_an[n]
        )
        return logml_new - self._logml[slots]

    def log_joint_prior(self, xs) -> float:
        xs = np.asarray(xs, dtype=float)
        return float(self.log_marginal(len(xs), xs.sum(), (xs * xs).sum()))


# ---------------------------------------------------------------------------
# Seating state


class HdpSeating:
    """Full franchise bookkeeping for one HDP.

    Customers are fixed (value, restaurant) pairs indexed 0..N-1; seating
    assigns each a table and, through the table, a dish. Counts are kept
    incrementally: customers per table, tables per dish (m), customers per
    (restaurant, dish) for fast preference queries, and per-dish conjugate
    statistics inside the family.
    """

    def __init__(self, values, restaurants, family):
        self.family = family
        self.values = np.asarray(values)
        self.rest_of = np.asarray(restaurants, dtype=np.int64).copy()
        n = len(self.values)
        if len(self.rest_of) != n:
            raise InvalidInputError("values and restaurants must align")
        self.table_of = np.full(n, -1, dtype=np.int64)
        self.dish_of = np.full(n, -1, dtype=np.int64)
        self.table_rest: dict[int, int] = {}
        self.table_dish: dict[int, int] = {}
        self.table_n: dict[int, int] = {}
        self.table_members: dict[int, set[int]] = {}
        self.rest_tables: dict[int, list[int]] = {}
        self.rest_n: dict[int, int] = {}
        self._next_tid = 0
        cap = family.capacity
        self.m = np.zeros(cap, dtype=np.int64)
        self._free = list(range(cap - 1, -1, -1))
        self._live = np.empty(0, dtype=np.int64)
        rows = int(self.rest_of.max()) + 1 if n else 1
        self.rest_dish_n = np.zeros((rows, cap), dtype=np.int64)

    # -- capacity management

    def _ensure_rest_row(self, r: int) -> None:
        if r >= len(self.rest_dish_n):
            extra = r + 1 - len(self.rest_dish_n)
            pad = np.zeros((extra, self.rest_dish_n.shape[1]), dtype=np.int64)
            self.rest_dish_n = np.vstack([self.rest_dish_n, pad])

    def alloc_dish(self) -> int:
        if not self._free:
            cap = self.family.capacity
            new_cap = cap * 2
            self.family.grow(new_cap)
            self.m = np.concatenate([self.m, np.zeros(cap, dtype=np.int64)])
            pad = np.zeros((len(self.rest_dish_n), cap), dtype=np.int64)
            self.rest_dish_n = np.hstack([self.rest_dish_n, pad])
            self._free = list(range(new_cap - 1, cap - 1, -1))
        return self._free.pop()

    def _release_dish(self, d: int) -> None:
        self.family.clear_slot(d)
        self._free.append(d)
        self._live = self._live[self._live != d]

    def _mark_dish_live(self, d: int) -> None:
        pos = int(np.searchsorted(self._live, d))
        self._live = np.insert(self._live, pos, d)

    # -- queries

    def live_dishes(self) -> np.ndarray:
        return self._live

    def n_dishes(self) -> int:
        return len(self._live)

    def n_tables(self) -> int:
        return len(self.table_rest)

    def n_seated(self) -> int:
        return int((self.table_of >= 0).sum())

    def restaurants(self) -> list[int]:
        return sorted(self.rest_tables)

    def table_value_array(self, tid: int) -> np.ndarray:
        ids = sorted(self.table_members[tid])
        return self.values[ids]

    def dish_customers(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.dish_of == d)

    # -- seating moves

    def unseat(self, i: int) -> None:
        tid = int(self.table_of[i])
        if tid < 0:
            raise ConsistencyError(f"customer {i} is not seated")
        r = self.table_rest[tid]
        d = self.table_dish[tid]
        self.table_n[tid] -= 1
        self.table_members[tid].discard(i)
        self.rest_n[r] -= 1
        self.rest_dish_n[r, d] -= 1
        self.family.remove(d, self.values[i])
        self.table_of[i] = -1
        self.dish_of[i] = -1
        if self.table_n[tid] == 0:
            self.rest_tables[r].remove(tid)
            del self.table_rest[tid], self.table_dish[tid]
            del self.table_n[tid], self.table_members[tid]
            self.m[d] -= 1
            if self.m[d] == 0:
                self._release_dish(d)
            if not self.rest_tables[r]:
                del self.rest_tables[r]
                del self.rest_n[r]

    def seat(self, i: int, tid: int) -> None:
        r = self.table_rest[tid]
        d = self.table_dish[tid]
        self.table_n[tid] += 1
        self.table_members[tid].add(i)
        self.rest_n[r] = self.rest_n.get(r, 0) + 1
        self.rest_dish_n[r, d] += 1
        self.family.add(d, self.values[i])
        self.table_of[i] = tid
        self.dish_of[i] = d
        self.rest_of[i] = r

    def seat_new_table(self, i: int, r: int, d: int) -> int:
        self._ensure_rest_row(r)
        tid = self._next_tid
        self._next_tid += 1
        self.table_rest[tid] = r
        self.table_dish[tid] = d
        self.table_n[tid] = 0
        self.table_members[tid] = set()
        self.rest_tables.setdefault(r, []).append(tid)
        self.rest_n.setdefault(r, 0)
        self.m[d] += 1
        if self.m[d] == 1:
            self._mark_dish_live(d)
        self.seat(i, tid)
        return tid

    def detach_table_dish(self, tid: int) -> int:
        """Take a table off its dish, removing its customers' statistics."""
        d = self.table_dish[tid]
        r = self.table_rest[tid]
        vals = self.table_value_array(tid)
        self.family.remove_many(d, vals)
        self.rest_dish_n[r, d] -= len(vals)
        self.m[d] -= 1
        if self.m[d] == 0:
            self._release_dish(d)
        self.table_dish[tid] = -1
        for j in self.table_members[tid]:
            self.dish_of[j] = -1
        return d

    def attach_table_dish(self, tid: int, d: int) -> None:
        r = self.table_rest[tid]
        vals = self.table_value_array(tid)
        self.family.add_many(d, vals)
        self.rest_dish_n[r, d] += len(vals)
        self.m[d] += 1
        if self.m[d] == 1:
            self._mark_dish_live(d)
        self.table_dish[tid] = d
        for j in self.table_members[tid]:
            self.dish_of[j] = d

    # -- integrity

    def refresh_stats(self) -> None:
        """Recompute per-dish statistics canonically (customer-id order).

        Incremental float updates drift by rounding; a refresh at sweep
        boundaries keeps the maintained statistics bit-identical to a full
        recount.
        """
        for d in self.live_dishes():
            self.family.set_from_values(int(d), self.values[self.dish_of == d])

    def validate(self) -> None:
        """Full recount of every maintained structure; raises on mismatch."""
        seated = np.flatnonzero(self.table_of >= 0)
        m_check = np.zeros_like(self.m)
        c_check = np.zeros_like(self.rest_dish_n)
        rest_n_check: dict[int, int] = {}
        for tid, r in self.table_rest.items():
            members = self.table_members[tid]
            if not members:
                raise ConsistencyError(f"table {tid} is empty but registered")
            if self.table_n[tid] != len(members):
                raise ConsistencyError(f"table {tid} count mismatch")
            d = self.table_dish[tid]
            m_check[d] += 1
            c_check[r, d] += len(members)
            rest_n_check[r] = rest_n_check.get(r, 0) + len(members)
            for i in members:
                if self.table_of[i] != tid or self.rest_of[i] != r or self.dish_of[i] != d:
                    raise ConsistencyError(f"customer {i} at table {tid} mislinked")
        if len(seated) != sum(self.table_n.values()):
            raise ConsistencyError("seated customer total mismatch")
        if not np.array_equal(m_check, self.m):
            raise ConsistencyError("tables-per-dish counts diverged")
        if not np.array_equal(c_check, self.rest_dish_n):
            raise ConsistencyError("restaurant/dish customer counts diverged")
        if rest_n_check != dict(self.rest_n):
            raise ConsistencyError("restaurant sizes diverged")
        for r, tids in self.rest_tables.items():
            if not tids:
                raise ConsistencyError(f"restaurant {r} registered without tables")
            if any(self.table_rest[t] != r for t in tids):
                raise ConsistencyError(f"restaurant {r} table list mislinked")
        fam = self.family
        for d in range(fam.capacity):
            vals = self.values[self.dish_of == d]
            if self.m[d] == 0 and len(vals):
                raise ConsistencyError(f"dead dish {d} still has customers")
            if fam.kind == "dirmult":
                counts = np.bincount(vals.astype(np.int64), minlength=fam.vocab_size)
                if fam.totals[d] != len(vals) or not np.array_equal(fam.counts[d], counts):
                    raise ConsistencyError(f"dish {d} cell counts diverged")
            else:
                vals = vals.astype(float)
                if fam.n[d] != len(vals):
                    raise ConsistencyError(f"dish {d} customer count diverged")
                if fam.total[d] != vals.sum() or fam.total_sq[d] != (vals * vals).sum():
                    raise ConsistencyError(f"dish {d} sufficient statistics diverged")


def init_seating(values, restaurants, family) -> HdpSeating:
    """One table per restaurant, every table serving a single shared dish."""
    s = HdpSeating(values, restaurants, family)
    if len(s.values) == 0:
        return s
    d = s.alloc_dish()
    for r in sorted(set(int(v) for v in s.rest_of)):
        ids = np.flatnonzero(s.rest_of == r)
        tid = s.seat_new_table(int(ids[0]), r, d)
        for i in ids[1:]:
            s.seat(int(i), tid)
    return s


# ---------------------------------------------------------------------------
# Gibbs moves


def categorical_from_log(logw: np.ndarray, rng) -> int:
    """Inverse-CDF draw from unnormalized log weights with max subtraction."""
    top = logw.max()
    if not np.isfinite(top):
        raise ConsistencyError("no admissible choice: all weights are zero")
    w = np.exp(logw - top)
    cdf = np.cumsum(w)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), len(w) - 1)


def _menu_log_mix(m_live, logf, gamma: float, logf_new: float) -> float:
    """Log predictive of a value under the whole menu plus a fresh dish."""
    k = len(m_live)
    terms = np.empty(k + 1)
    if k:
        np.add(np.log(m_live), logf, out=terms[:k])
    terms[k] = _log(gamma) + logf_new
    top = terms.max()
    if top == _NEG_INF:
        return _NEG_INF
    return top + math.log(np.exp(terms - top).sum()) - math.log(m_live.sum() + gamma)


def table_log_weights(seating: HdpSeating, i: int, alpha: float, gamma: float):
    """Log weights of each existing table plus a new table, for customer i.

    Existing tables weigh popularity times dish preference; the new-table
    weight folds the whole menu (existing dishes by table popularity plus a
    fresh draw scaled by gamma) into one predictive mixture. Also returns
    the per-dish pieces for reuse by the dish draw that follows a new table.
    """
    r = int(seating.rest_of[i])
    x = seating.values[i]
    live = seating.live_dishes()
    logf, logf_new = seating.family.log_predictive_with_prior(live, x)
    mix = _menu_log_mix(seating.m[live], logf, gamma, logf_new)
    tids = seating.rest_tables.get(r)
    if tids:
        narr = np.fromiter(
            (seating.table_n[t] for t in tids), dtype=float, count=len(tids)
        )
        darr = np.fromiter(
            (seating.table_dish[t] for t in tids), dtype=np.int64, count=len(tids)
        )
        logw = np.empty(len(tids) + 1)
        logw[:-1] = np.log(narr) + logf[np.searchsorted(live, darr)]
    else:
        tids = []
        logw = np.empty(1)
    logw[-1] = _log(alpha) + mix
    return tids, logw, (live, logf, logf_new)


def dish_log_weights(seating: HdpSeating, x, gamma: float, parts=None):
    """Log weights over existing dishes plus a new one, for a single value."""
    if parts is None:
        live = seating.live_dishes()
        logf, logf_new = seating.family.log_predictive_with_prior(live, x)
    else:
        live, logf, logf_new = parts
    logw = np.empty(len(live) + 1)
    logw[:-1] = np.log(seating.m[live]) + logf
    logw[-1] = _log(gamma) + logf_new
    return live, logw


def table_dish_log_weights(seating: HdpSeating, vals, gamma: float):
    """Log weights over dishes for a detached table's whole customer group."""
    live = seating.live_dishes()
    if len(vals) == 1:
        return dish_log_weights(seating, vals[0], gamma)
    logw = np.empty(len(live) + 1)
    if len(live):
        logw[:-1] = np.log(seating.m[live]) + seating.family.log_joint(live, vals)
    logw[-1] = _log(gamma) + seating.family.log_joint_prior(vals)
    return live, logw


def sample_table(seating: HdpSeating, i: int, r: int, alpha: float, gamma: float, rng) -> None:
    """Seat an unseated customer in restaurant r by one Gibbs table draw."""
    seating.rest_of[i] = r
    tids, logw, parts = table_log_weights(seating, i, alpha, gamma)
    c = categorical_from_log(logw, rng)
    if c < len(tids):
        seating.seat(i, tids[c])
    else:
        live, lw = dish_log_weights(seating, seating.values[i], gamma, parts)
        k = categorical_from_log(lw, rng)
        d = int(live[k]) if k < len(live) else seating.alloc_dish()
        seating.seat_new_table(i, r, d)


@dataclass(frozen=True)
class HdpHypers:
    """One HDP's concentrations and their shared Gamma(shape, rate) prior."""

    gamma: float = 0.1
    alpha: float = 0.1
    prior_shape: float = 1.0
    prior_rate: float = 1.0


def resample_top_concentration(conc, n_items, n_classes, shape, rate, rng) -> float:
    """Auxiliary-variable update of a DP concentration (items vs classes).

    For the menu-level DP the items are tables and the classes dishes.
    Without data this is a draw from the Gamma prior.
    """
    if n_items <= 0 or n_classes <= 0:
        return float(rng.gamma(shape, 1.0 / rate))
    w = rng.beta(conc + 1.0, n_items)
    rate_post = rate - math.log(w)
    odds = (shape + n_classes - 1.0) / (n_items * rate_post)
    sh = shape + n_classes if rng.random() < odds / (1.0 + odds) else shape + n_classes - 1.0
    return float(rng.gamma(sh, 1.0 / rate_post))


def resample_group_concentration(conc, group_sizes, n_tables, shape, rate, rng) -> float:
    """Auxiliary-variable update of the shared restaurant-level concentration."""
    sizes = np.asarray([s for s in group_sizes if s > 0], dtype=float)
    if len(sizes) == 0 or n_tables <= 0:
        return float(rng.gamma(shape, 1.0 / rate))
    w = rng.beta(conc + 1.0, sizes)
    s = rng.random(len(sizes)) < sizes / (sizes + conc)
    rate_post = rate - np.log(w).sum()
    return float(rng.gamma(shape + n_tables - s.sum(), 1.0 / rate_post))


def crf_sweep(
    seating: HdpSeating,
    hypers: HdpHypers,
    rng,
    resample_hypers: bool = True,
    debug: bool = False,
) -> HdpHypers:
    """One full franchise pass: every customer, every table, then hypers.

    Returns the (possibly resampled) hyper-parameters; the seating is
    updated in place and left with canonically recomputed statistics.
    """
    if debug:
        seating.validate()
    n = len(seating.values)
    for i in range(n):
        r = int(seating.rest_of[i])
        seating.unseat(i)
        sample_table(seating, i, r, hypers.alpha, hypers.gamma, rng)
    for r in seating.restaurants():
        for tid in list(seating.rest_tables.get(r, ())):
            vals = seating.table_value_array(tid)
            seating.detach_table_dish(tid)
            live, lw = table_dish_log_weights(seating, vals, hypers.gamma)
            c = categorical_from_log(lw, rng)
            d = int(live[c]) if c < len(live) else seating.alloc_dish()
            seating.attach_table_dish(tid, d)
    seating.refresh_stats()
    if resample_hypers and n > 0:
        gamma = resample_top_concentration(
            hypers.gamma, seating.n_tables(), seating.n_dishes(),
            hypers.prior_shape, hypers.prior_rate, rng,
        )
        alpha = resample_group_concentration(
            hypers.alpha, list(seating.rest_n.values()), seating.n_tables(),
            hypers.prior_shape, hypers.prior_rate, rng,
        )
        hypers = replace(hypers, gamma=gamma, alpha=alpha)
    return hypers


# ---------------------------------------------------------------------------
# Posterior extraction


@dataclass
class HdpPosterior:
    """Menu weights plus per-dish parameters from a seating snapshot.

    ``weights`` has one entry per live dish plus a trailing mass for a new,
    unseen dish. ``dish_params`` holds a cell-probability vector per dish
    for the categorical family or a (mean, variance) pair for the scalar one.
    """

    weights: np.ndarray
    dish_params: list
    dish_ids: np.ndarray


def extract_hdp_posterior(
    seating: HdpSeating, gamma: float, rng, mode: str = "draw"
) -> HdpPosterior:
    """Draw (or average) menu weights and dish parameters from the seating."""
    live = seating.live_dishes()
    m = seating.m[live].astype(float)
    conc = np.concatenate([m, [gamma]])
    if mode == "draw":
        if gamma > 0:
            weights = rng.dirichlet(conc)
        elif len(m):
            weights = np.concatenate([rng.dirichlet(m), [0.0]])
        else:
            weights = np.array([0.0])
    elif mode == "mean":
        weights = conc / conc.sum() if conc.sum() > 0 else conc
    else:
        raise InvalidInputError(f"unknown extraction mode {mode!r}")
    params = []
    fam = seating.family
    for d in live:
        d = int(d)
        if fam.kind == "dirmult":
            alpha_post = fam.counts[d] + fam.eta
            if mode == "draw":
                params.append(rng.dirichlet(alpha_post))
            else:
                params.append(alpha_post / alpha_post.sum())
        else:
            mu_n, kappa_n, a_n, b_n = nig_posterior(
                fam.prior, fam.n[d], fam.total[d], fam.total_sq[d]
            )
            if mode == "draw":
                var = float(b_n / rng.gamma(a_n))
                mean = float(rng.normal(mu_n, math.sqrt(var / kappa_n)))
            else:
                var = float(b_n / (a_n - 1.0)) if a_n > 1.0 else float(b_n / a_n)
                mean = float(mu_n)
            params.append((mean, var))
    return HdpPosterior(weights=weights, dish_params=params, dish_ids=live.copy())

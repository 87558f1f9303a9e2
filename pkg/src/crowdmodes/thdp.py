"""Coupled Gibbs sampler for the triplet of space/time/speed HDPs.

The space HDP clusters cell tokens into flows (its restaurants are the data
groups). The time and speed HDPs cluster the scalar channels, but their
restaurant structure is not fixed: each live space dish owns one time
restaurant and one speed restaurant, so when an observation's space dish
changes, its two scalar customers move to different restaurants. A space
move therefore weighs, besides table popularity and cell preference, how
much the observation's timestamp and speed like the candidate dish's scalar
restaurants (the restaurant preference, a mixture over that restaurant's
tables plus its escape mass to the global menu).

Sweep order: one plain franchise pass over each scalar HDP with space held
fixed, then the space customer and table passes with the coupled weights,
then one resampling pass over all six concentrations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from collections import deque

import numpy as np

from .codebook import Codebook, Observation, Trajectory
from .conjugate import HyperParams, NigPrior
from .errors import ConsistencyError, InvalidInputError
from .hdp import (
    DirMultFamily,
    HdpSeating,
    NigFamily,
    _log,
    categorical_from_log,
    crf_sweep,
    dish_log_weights,
    init_seating,
    resample_group_concentration,
    resample_top_concentration,
    sample_table,
    HdpHypers,
)

_NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# Coupled seating state


class ThdpSeating:
    """Three seatings plus the link: scalar restaurants follow space dishes.

    Observation i owns space customer i, time customer i and speed customer
    i; the time/speed customers always sit in the restaurant named after i's
    current space dish slot.
    """

    def __init__(self, space: HdpSeating, time: HdpSeating, speed: HdpSeating):
        self.space = space
        self.time = time
        self.speed = speed

    @property
    def n_observations(self) -> int:
        return len(self.space.values)

    def unseat_observation(self, i: int) -> None:
        """Remove all three customers of observation i (scalars first, so a
        dying space dish leaves empty scalar restaurants behind)."""
        self.time.unseat(i)
        self.speed.unseat(i)
        self.space.unseat(i)

    def validate(self) -> None:
        self.space.validate()
        self.time.validate()
        self.speed.validate()
        n = self.n_observations
        if self.time.n_seated() != n or self.speed.n_seated() != n or self.space.n_seated() != n:
            raise ConsistencyError("observation count differs across the three seatings")
        if not np.array_equal(self.time.rest_of, self.space.dish_of):
            raise ConsistencyError("time customers not in their space dish's restaurant")
        if not np.array_equal(self.speed.rest_of, self.space.dish_of):
            raise ConsistencyError("speed customers not in their space dish's restaurant")
        live = set(self.space.live_dishes().tolist())
        if set(self.time.restaurants()) != live or set(self.speed.restaurants()) != live:
            raise ConsistencyError("scalar restaurants do not match live space dishes")

    def log_score(self) -> float:
        """Sum of each customer's log predictive under its own dish."""
        return (
            self.space.family.log_score(self.space.dish_of, self.space.values)
            + self.time.family.log_score(self.time.dish_of, self.time.values)
            + self.speed.family.log_score(self.speed.dish_of, self.speed.values)
        )


def build_thdp_seating(
    space: HdpSeating, times, speeds, time_prior: NigPrior, speed_prior: NigPrior
) -> ThdpSeating:
    """Wrap a space seating: one scalar table per live space dish, all scalar
    tables sharing a single global mode."""
    time = HdpSeating(times, space.dish_of, NigFamily(time_prior))
    speed = HdpSeating(speeds, space.dish_of, NigFamily(speed_prior))
    if len(space.values):
        dt = time.alloc_dish()
        de = speed.alloc_dish()
        for k in space.live_dishes():
            ids = np.flatnonzero(space.dish_of == k)
            tt = time.seat_new_table(int(ids[0]), int(k), dt)
            te = speed.seat_new_table(int(ids[0]), int(k), de)
            for i in ids[1:]:
                time.seat(int(i), tt)
                speed.seat(int(i), te)
    return ThdpSeating(space, time, speed)


# ---------------------------------------------------------------------------
# Restaurant preference


def restaurant_log_preference(sc: HdpSeating, value, rest_ids, alpha: float, gamma: float):
    """Log predictive of a scalar value in each candidate restaurant.

    For restaurant k the preference mixes its tables by their customer
    counts with an alpha-weighted escape to the global menu (tables per
    dish, plus a gamma-weighted brand-new mode); the menu value doubles as
    the preference of a hypothetical new restaurant. Returns
    (log preference per rest_id, log menu).
    """
    live = sc.live_dishes()
    rest_ids = np.asarray(rest_ids, dtype=np.int64)
    if len(rest_ids):
        sc._ensure_rest_row(int(rest_ids.max()))
    logg, logg_new = sc.family.log_predictive_with_prior(live, value)
    top = max(logg.max() if len(logg) else _NEG_INF, logg_new)
    g = np.exp(logg - top)
    gn = math.exp(logg_new - top)
    h = sc.m[live]
    menu = (h @ g + gamma * gn) / (h.sum() + gamma)
    rows = sc.rest_dish_n[rest_ids][:, live]
    sizes = rows.sum(axis=1)
    with np.errstate(divide="ignore"):
        pref = (rows @ g + alpha * menu) / (sizes + alpha)
        return np.log(pref) + top, math.log(menu) + top


def restaurant_log_preference_batch(sc: HdpSeating, values, rest_ids, alpha: float, gamma: float):
    """Summed log preferences of many scalar values per candidate restaurant.

    Returns (per-restaurant sums over values, summed log menu), the factors
    a whole table contributes when its dish (and so its customers'
    restaurant) is up for resampling.
    """
    live = sc.live_dishes()
    rest_ids = np.asarray(rest_ids, dtype=np.int64)
    if len(rest_ids):
        sc._ensure_rest_row(int(rest_ids.max()))
    logg = sc.family.log_predictive_batch(live, values)
    logg_new = sc.family.log_prior_predictive_batch(values)
    top = np.maximum(logg.max(axis=1) if logg.shape[1] else _NEG_INF, logg_new)
    g = np.exp(logg - top[:, None])
    gn = np.exp(logg_new - top)
    h = sc.m[live]
    menu = (g @ h + gamma * gn) / (h.sum() + gamma)
    rows = sc.rest_dish_n[rest_ids][:, live]
    sizes = rows.sum(axis=1)
    with np.errstate(divide="ignore"):
        pref = (g @ rows.T + alpha * menu[:, None]) / (sizes + alpha)[None, :]
        log_pref = np.log(pref) + top[:, None]
        log_menu = np.log(menu) + top
    return log_pref.sum(axis=0), float(log_menu.sum())


# ---------------------------------------------------------------------------
# Coupled space moves


def space_table_log_weights(thdp: ThdpSeating, i: int, hypers: HyperParams):
    """Coupled table weights for space customer i.

    Each candidate table's dish contributes cell preference times the
    timestamp's and speed's preference for that dish's scalar restaurants;
    the new-table branch mixes the same triple over the dish menu.
    """
    sp = thdp.space
    r = int(sp.rest_of[i])
    live = sp.live_dishes()
    logf, logf_new = sp.family.log_predictive_with_prior(live, sp.values[i])
    logp_t, menu_t = restaurant_log_preference(
        thdp.time, thdp.time.values[i], live, hypers.alpha_t, hypers.gamma_t
    )
    logp_e, menu_e = restaurant_log_preference(
        thdp.speed, thdp.speed.values[i], live, hypers.alpha_e, hypers.gamma_e
    )
    logd = logf + logp_t + logp_e
    logd_new = logf_new + menu_t + menu_e
    k = len(live)
    terms = np.empty(k + 1)
    if k:
        np.add(np.log(sp.m[live]), logd, out=terms[:k])
    terms[k] = _log(hypers.gamma_s) + logd_new
    top = terms.max()
    mix = (
        top + math.log(np.exp(terms - top).sum()) - math.log(sp.m[live].sum() + hypers.gamma_s)
        if top > _NEG_INF
        else _NEG_INF
    )
    tids = sp.rest_tables.get(r)
    if tids:
        narr = np.fromiter((sp.table_n[t] for t in tids), dtype=float, count=len(tids))
        darr = np.fromiter((sp.table_dish[t] for t in tids), dtype=np.int64, count=len(tids))
        logw = np.empty(len(tids) + 1)
        logw[:-1] = np.log(narr) + logd[np.searchsorted(live, darr)]
    else:
        tids = []
        logw = np.empty(1)
    logw[-1] = _log(hypers.alpha_s) + mix
    return tids, logw, (live, logd, logd_new)


def space_dish_log_weights(thdp: ThdpSeating, i: int, hypers: HyperParams, parts=None):
    """Coupled dish weights for a space customer that opened a new table."""
    if parts is None:
        _, _, parts = space_table_log_weights(thdp, i, hypers)
    live, logd, logd_new = parts
    logw = np.empty(len(live) + 1)
    logw[:-1] = np.log(thdp.space.m[live]) + logd
    logw[-1] = _log(hypers.gamma_s) + logd_new
    return live, logw


def _seat_dependents(thdp: ThdpSeating, i: int, k: int, hypers: HyperParams, rng) -> None:
    sample_table(thdp.time, i, k, hypers.alpha_t, hypers.gamma_t, rng)
    sample_table(thdp.speed, i, k, hypers.alpha_e, hypers.gamma_e, rng)


def sample_space_table(thdp: ThdpSeating, i: int, hypers: HyperParams, rng) -> int:
    """Seat an observation's three customers after a coupled table draw.

    The observation must be fully unseated. Returns the space dish chosen.
    """
    sp = thdp.space
    r = int(sp.rest_of[i])
    tids, logw, parts = space_table_log_weights(thdp, i, hypers)
    c = categorical_from_log(logw, rng)
    if c < len(tids):
        tid = tids[c]
        sp.seat(i, tid)
        k = sp.table_dish[tid]
    else:
        live, lw = space_dish_log_weights(thdp, i, hypers, parts)
        j = categorical_from_log(lw, rng)
        k = int(live[j]) if j < len(live) else sp.alloc_dish()
        sp.seat_new_table(i, r, k)
    _seat_dependents(thdp, i, k, hypers, rng)
    return k


def table_space_dish_log_weights(
    thdp: ThdpSeating, cells, sel_times, sel_speeds, hypers: HyperParams
):
    """Coupled dish weights for a detached space table.

    The cell factor is the exact joint predictive; the scalar factors are
    products of restaurant preferences over the (sub)sampled linked
    customers, evaluated with those customers removed from their seatings.
    """
    sp = thdp.space
    live = sp.live_dishes()
    logp_t, menu_t = restaurant_log_preference_batch(
        thdp.time, sel_times, live, hypers.alpha_t, hypers.gamma_t
    )
    logp_e, menu_e = restaurant_log_preference_batch(
        thdp.speed, sel_speeds, live, hypers.alpha_e, hypers.gamma_e
    )
    logw = np.empty(len(live) + 1)
    if len(live):
        logw[:-1] = (
            np.log(sp.m[live]) + sp.family.log_joint(live, cells) + logp_t + logp_e
        )
    logw[-1] = (
        _log(hypers.gamma_s) + sp.family.log_joint_prior(cells) + menu_t + menu_e
    )
    return live, logw


def resample_table_space_dish(thdp: ThdpSeating, tid: int, hypers: HyperParams, rng) -> int:
    """One coupled dish move for a space table and its linked customers.

    All linked scalar customers leave their restaurants first; after the
    draw they are reseated one by one into the chosen dish's restaurants.
    Returns the new dish slot.
    """
    sp = thdp.space
    members = sorted(sp.table_members[tid])
    for j in members:
        thdp.time.unseat(j)
        thdp.speed.unseat(j)
    sp.detach_table_dish(tid)
    cells = sp.table_value_array(tid)
    if len(members) > hypers.customer_selection:
        sub_rng = np.random.default_rng(int(rng.integers(2**63)))
        sel = np.sort(
            sub_rng.choice(len(members), size=hypers.customer_selection, replace=False)
        )
        sel_ids = [members[s] for s in sel]
    else:
        sel_ids = members
    live, logw = table_space_dish_log_weights(
        thdp, cells, thdp.time.values[sel_ids], thdp.speed.values[sel_ids], hypers
    )
    c = categorical_from_log(logw, rng)
    k = int(live[c]) if c < len(live) else sp.alloc_dish()
    sp.attach_table_dish(tid, k)
    for j in members:
        _seat_dependents(thdp, j, k, hypers, rng)
    return k


def reseat_dependents(thdp: ThdpSeating, obs_ids, old_dish: int, new_dish: int, hypers, rng) -> None:
    """Move observations' scalar customers between restaurants after their
    space dish changed from old_dish to new_dish; no-op when equal."""
    if old_dish == new_dish:
        return
    for i in sorted(obs_ids):
        if int(thdp.time.rest_of[i]) != old_dish or int(thdp.speed.rest_of[i]) != old_dish:
            raise ConsistencyError(f"observation {i} not linked to restaurant {old_dish}")
        thdp.time.unseat(i)
        thdp.speed.unseat(i)
    for i in sorted(obs_ids):
        _seat_dependents(thdp, i, new_dish, hypers, rng)


def sample_hyperparameters(thdp: ThdpSeating, hypers: HyperParams, rng) -> HyperParams:
    """Resample all six concentrations with their auxiliary-variable updates."""
    def pair(seating, gamma, alpha):
        gamma = resample_top_concentration(
            gamma, seating.n_tables(), seating.n_dishes(),
            hypers.prior_shape, hypers.prior_rate, rng,
        )
        alpha = resample_group_concentration(
            alpha, list(seating.rest_n.values()), seating.n_tables(),
            hypers.prior_shape, hypers.prior_rate, rng,
        )
        return gamma, alpha

    gs, als = pair(thdp.space, hypers.gamma_s, hypers.alpha_s)
    gt, alt = pair(thdp.time, hypers.gamma_t, hypers.alpha_t)
    ge, ale = pair(thdp.speed, hypers.gamma_e, hypers.alpha_e)
    return replace(
        hypers, gamma_s=gs, alpha_s=als, gamma_t=gt, alpha_t=alt, gamma_e=ge, alpha_e=ale
    )


def crfl_sweep(
    thdp: ThdpSeating,
    hypers: HyperParams,
    rng,
    resample_hypers: bool = True,
    debug: bool = False,
) -> HyperParams:
    """One coupled sweep over the whole triplet.

    Scalar channels first get a plain franchise pass each (space fixed,
    their own concentrations held), then every space customer and every
    space table is resampled with the coupled weights, then all six
    concentrations are refreshed once.
    """
    if debug:
        thdp.validate()
    crf_sweep(
        thdp.time, HdpHypers(hypers.gamma_t, hypers.alpha_t), rng, resample_hypers=False
    )
    crf_sweep(
        thdp.speed, HdpHypers(hypers.gamma_e, hypers.alpha_e), rng, resample_hypers=False
    )
    n = thdp.n_observations
    sp = thdp.space
    for i in range(n):
        thdp.unseat_observation(i)
        sample_space_table(thdp, i, hypers, rng)
    for r in sp.restaurants():
        for tid in list(sp.rest_tables.get(r, ())):
            resample_table_space_dish(thdp, tid, hypers, rng)
    sp.refresh_stats()
    thdp.time.refresh_stats()
    thdp.speed.refresh_stats()
    if resample_hypers and n > 0:
        hypers = sample_hyperparameters(thdp, hypers, rng)
    return hypers


# ---------------------------------------------------------------------------
# Posterior


@dataclass(frozen=True)
class GaussianMode:
    """One scalar mode: a Gaussian over timestamps or speeds."""

    mean: float
    var: float


@dataclass
class FlowMode:
    """One space flow with its scalar profiles.

    Cell probabilities are stored sparsely: cells never seen by the flow all
    share ``cell_baseline``. ``time_weights`` / ``speed_weights`` mix the
    posterior's global mode lists.
    """

    weight: float
    dish_id: int
    cell_baseline: float
    cell_probs: dict[int, float]
    time_weights: np.ndarray
    speed_weights: np.ndarray
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def cell_prob_array(self, vocab_size: int) -> np.ndarray:
        if self._dense is None or len(self._dense) != vocab_size:
            dense = np.full(vocab_size, self.cell_baseline)
            if self.cell_probs:
                idx = np.fromiter(self.cell_probs.keys(), dtype=np.int64, count=len(self.cell_probs))
                vals = np.fromiter(self.cell_probs.values(), dtype=float, count=len(self.cell_probs))
                dense[idx] = vals
            self._dense = dense
        return self._dense


@dataclass
class ThdpPosterior:
    """Weighted space flows, each with time and speed profiles over shared
    global scalar mode lists."""

    codebook: Codebook
    flows: list[FlowMode]
    time_modes: list[GaussianMode]
    speed_modes: list[GaussianMode]
    info: dict = field(default_factory=dict)

    @property
    def n_flows(self) -> int:
        return len(self.flows)

    def weights(self) -> np.ndarray:
        return np.array([f.weight for f in self.flows])

    def validate_cells(self, cells) -> None:
        cells = np.asarray(cells)
        if len(cells) and (cells.min() < 0 or cells.max() >= self.codebook.size):
            raise InvalidInputError(
                "cell tokens outside this model's codebook; was the data "
                "tokenized against a different grid?"
            )


def _weight_vector(counts, conc: float, rng, mode: str) -> np.ndarray:
    """Dirichlet draw or mean over live classes, new-class mass dropped."""
    counts = np.asarray(counts, dtype=float)
    if len(counts) == 0:
        return counts
    if mode == "draw":
        full = np.concatenate([counts, [conc]]) if conc > 0 else counts
        w = rng.dirichlet(full)[: len(counts)]
    elif mode == "mean":
        w = counts
    else:
        raise InvalidInputError(f"unknown report mode {mode!r}")
    return w / w.sum()


def extract_posterior(
    thdp: ThdpSeating,
    hypers: HyperParams,
    codebook: Codebook,
    rng,
    mode: str = "draw",
    prune: float = 0.01,
    info: dict | None = None,
) -> ThdpPosterior:
    """Posterior snapshot: flow weights from tables-per-dish counts, scalar
    mode lists from the scalar menus, per-flow profiles from each flow's
    restaurant (its customer counts per mode, smoothed by the restaurant
    concentration times the global mode weights).

    Flows under the prune threshold are dropped and the rest renormalized;
    flow cell distributions are always posterior means so their sparse form
    stays exact.
    """
    sp, tm, ev = thdp.space, thdp.time, thdp.speed
    live_s = sp.live_dishes()
    if not len(live_s):
        raise InvalidInputError("cannot extract a posterior from an empty seating")
    beta = _weight_vector(sp.m[live_s], hypers.gamma_s, rng, mode)

    def scalar_modes(sc: HdpSeating, gamma: float, alpha: float):
        live = sc.live_dishes()
        g_weights = _weight_vector(sc.m[live], gamma, rng, mode)
        modes = []
        fam = sc.family
        for d in live:
            d = int(d)
            mu_n = (fam.prior.kappa0 * fam.prior.mu0 + fam.total[d]) / (fam.prior.kappa0 + fam.n[d])
            an = fam.prior.a0 + 0.5 * fam.n[d]
            bn = float(fam._bn[d])
            if mode == "draw":
                var = float(bn / rng.gamma(an))
                mean = float(rng.normal(mu_n, math.sqrt(var / (fam.prior.kappa0 + fam.n[d]))))
            else:
                var = float(bn / (an - 1.0)) if an > 1.0 else float(bn / an)
                mean = float(mu_n)
            modes.append(GaussianMode(mean=mean, var=max(var, 1e-12)))
        per_flow = {}
        for k in live_s:
            counts = sc.rest_dish_n[int(k)][live].astype(float)
            smoothed = counts + alpha * g_weights
            if mode == "draw":
                w = rng.dirichlet(smoothed)
            else:
                w = smoothed / smoothed.sum()
            per_flow[int(k)] = w
        return modes, per_flow

    time_modes, zeta = scalar_modes(tm, hypers.gamma_t, hypers.alpha_t)
    speed_modes, rho = scalar_modes(ev, hypers.gamma_e, hypers.alpha_e)

    fam = sp.family
    flows = []
    for pos, k in enumerate(live_s):
        k = int(k)
        counts = fam.counts[k]
        denom = fam.totals[k] + fam.vocab_size * fam.eta
        baseline = fam.eta / denom
        nz = np.flatnonzero(counts)
        cell_probs = {int(c): float((counts[c] + fam.eta) / denom) for c in nz}
        flows.append(
            FlowMode(
                weight=float(beta[pos]),
                dish_id=k,
                cell_baseline=float(baseline),
                cell_probs=cell_probs,
                time_weights=zeta[k],
                speed_weights=rho[k],
            )
        )
    flows.sort(key=lambda f: (-f.weight, f.dish_id))
    kept = [f for f in flows if f.weight >= prune]
    if not kept:
        kept = flows[:1]
    total = sum(f.weight for f in kept)
    for f in kept:
        f.weight /= total
    return ThdpPosterior(
        codebook=codebook,
        flows=kept,
        time_modes=time_modes,
        speed_modes=speed_modes,
        info=dict(info or {}),
    )


def space_only_posterior(
    space: HdpSeating,
    gamma_s: float,
    codebook: Codebook,
    rng,
    mode: str = "draw",
    prune: float = 0.01,
) -> ThdpPosterior:
    """Classification-only posterior from a space seating alone.

    Every flow shares one dummy scalar mode per channel, so timestamps and
    speeds contribute equal terms to every flow and classification is
    driven purely by the cell distributions.
    """
    live = space.live_dishes()
    if not len(live):
        raise InvalidInputError("cannot extract a posterior from an empty seating")
    beta = _weight_vector(space.m[live], gamma_s, rng, mode)
    fam = space.family
    flows = []
    for pos, k in enumerate(live):
        k = int(k)
        counts = fam.counts[k]
        denom = fam.totals[k] + fam.vocab_size * fam.eta
        nz = np.flatnonzero(counts)
        flows.append(
            FlowMode(
                weight=float(beta[pos]),
                dish_id=k,
                cell_baseline=float(fam.eta / denom),
                cell_probs={int(c): float((counts[c] + fam.eta) / denom) for c in nz},
                time_weights=np.array([1.0]),
                speed_weights=np.array([1.0]),
            )
        )
    flows.sort(key=lambda f: (-f.weight, f.dish_id))
    kept = [f for f in flows if f.weight >= prune] or flows[:1]
    total = sum(f.weight for f in kept)
    for f in kept:
        f.weight /= total
    return ThdpPosterior(
        codebook=codebook,
        flows=kept,
        time_modes=[GaussianMode(0.0, 1.0)],
        speed_modes=[GaussianMode(0.0, 1.0)],
        info={"space_only": True},
    )


# ---------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class FitConfig:
    """Sampler schedule, base-measure choices and extraction knobs."""

    burn_in: int = 5000
    max_iters: int = 2000
    early_stop_window: int = 200
    early_stop_tol: float = 1e-3
    customer_selection: int = 1000
    init_concentration: float = 0.1
    prior_shape: float = 1.0
    prior_rate: float = 1.0
    eta: float = 0.5
    kappa0: float = 0.01
    a0: float = 3.0
    b0_scale: float = 0.1
    prune: float = 0.01
    report_mode: str = "draw"


def _flatten(data) -> list[Observation]:
    obs: list[Observation] = []
    for item in data:
        if isinstance(item, Trajectory):
            obs.extend(item.observations)
        elif isinstance(item, Observation):
            obs.append(item)
        else:
            raise InvalidInputError(f"cannot fit on {type(item).__name__} items")
    return obs


def _nig_prior_for(values: np.ndarray, config: FitConfig) -> NigPrior:
    var = float(values.var())
    return NigPrior(
        mu0=float(values.mean()),
        kappa0=config.kappa0,
        a0=config.a0,
        b0=max(var * config.b0_scale, 1e-6),
    )


def fit(data, config: FitConfig, rng, codebook: Codebook) -> ThdpPosterior:
    """Burn in the space HDP alone, then run coupled sweeps to a posterior.

    ``data`` is a list of tokenized trajectories or observations whose
    group ids name the space restaurants. Stops early once the space dish
    count and the joint seating score have been stable over the configured
    window.
    """
    obs = _flatten(data)
    if not obs:
        raise InvalidInputError("cannot fit on an empty dataset")
    cells = np.array([o.cell for o in obs], dtype=np.int64)
    times = np.array([o.timestamp for o in obs], dtype=float)
    speeds = np.array([o.speed for o in obs], dtype=float)
    groups = np.array([o.group_id for o in obs], dtype=np.int64)
    if cells.max() >= codebook.size:
        raise InvalidInputError("cell tokens exceed the codebook size")

    space = init_seating(cells, groups, DirMultFamily(codebook.size, config.eta))
    sh = HdpHypers(
        gamma=config.init_concentration,
        alpha=config.init_concentration,
        prior_shape=config.prior_shape,
        prior_rate=config.prior_rate,
    )
    for _ in range(config.burn_in):
        sh = crf_sweep(space, sh, rng)

    thdp = build_thdp_seating(
        space, times, speeds, _nig_prior_for(times, config), _nig_prior_for(speeds, config)
    )
    hypers = HyperParams(
        gamma_s=sh.gamma,
        alpha_s=sh.alpha,
        gamma_t=config.init_concentration,
        alpha_t=config.init_concentration,
        gamma_e=config.init_concentration,
        alpha_e=config.init_concentration,
        prior_shape=config.prior_shape,
        prior_rate=config.prior_rate,
        customer_selection=config.customer_selection,
    )
    history: deque[tuple[int, float]] = deque(maxlen=max(config.early_stop_window, 1))
    sweeps_run = 0
    for it in range(config.max_iters):
        hypers = crfl_sweep(thdp, hypers, rng)
        sweeps_run = it + 1
        if config.early_stop_window > 0:
            history.append((thdp.space.n_dishes(), thdp.log_score()))
            if len(history) == config.early_stop_window:
                ks = {k for k, _ in history}
                scores = np.array([s for _, s in history])
                spread = scores.max() - scores.min()
                if len(ks) == 1 and spread <= config.early_stop_tol * max(abs(scores.mean()), 1.0):
                    break
    info = {
        "burn_in": config.burn_in,
        "crfl_sweeps": sweeps_run,
        "n_observations": len(obs),
        "space_dishes": int(thdp.space.n_dishes()),
        "time_dishes": int(thdp.time.n_dishes()),
        "speed_dishes": int(thdp.speed.n_dishes()),
        "final_hypers": {
            "gamma_s": hypers.gamma_s, "alpha_s": hypers.alpha_s,
            "gamma_t": hypers.gamma_t, "alpha_t": hypers.alpha_t,
            "gamma_e": hypers.gamma_e, "alpha_e": hypers.alpha_e,
        },
    }
    return extract_posterior(
        thdp, hypers, codebook, rng, mode=config.report_mode, prune=config.prune, info=info
    )

"""Lévy bridge ``zeta^z`` of random length ``tau``.

Given ``tau = r`` the process is the bridge of length ``r`` from 0 to ``z``,
held at ``z`` after time ``r``. Everything the observer can infer about
``tau`` is carried by the likelihood ratio

    phi(r, t, x) = f_{r-t}(z - x) / f_r(z) * 1{t < r}.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .bridge_fixed import (
    CHUNK_PATHS,
    TIME_EPS,
    SamplingTables,
    _validate_grid,
    bridge_values,
    chunk_generators,
)
from .density import (
    DEFAULT_CACHE,
    DENSITY_FLOOR,
    DensityCache,
    InversionPlan,
    common_plan,
    denominator_floor,
    density_point,
    density_points,
    shifted_lattice_mixture,
)
from .errors import (
    DenominatorUnderflowError,
    InvalidObservationError,
    TimeOrderError,
    ZeroNormalizerError,
)
from .models import CharacteristicExponent, LengthLaw, integrate, sample_tau
from .paths import PathBatch, PathSample

#: Observation token for "the path has reached z and stays there". A bare
#: number equal to ``z`` is an ordinary, not yet absorbed, value.
ABSORBED = "z"

ZERO_NORMALIZER_RTOL = 1e-12


def is_absorbed_token(value) -> bool:
    return isinstance(value, str) and value.strip().lower() == ABSORBED


@dataclass(frozen=True, eq=False)
class RandomBridge:
    """Bridge from 0 to ``z`` whose length is drawn from ``length_law``."""

    model: CharacteristicExponent
    z: float
    length_law: LengthLaw

    def __post_init__(self) -> None:
        if not math.isfinite(self.z):
            raise ValueError("z must be finite")
        nodes = self.length_law.support_nodes()
        dens = self.endpoint_densities(nodes)
        floors = np.array([denominator_floor(self.model, r) for r in nodes])
        bad = ~(dens > floors) | ~np.isfinite(dens)
        if np.any(bad):
            raise DenominatorUnderflowError(
                f"f_r(z) is numerically zero at r = {nodes[bad].tolist()} for z = {self.z}"
            )

    @cached_property
    def _end_cache(self) -> dict[float, float]:
        return {}

    def endpoint_densities(self, rs) -> np.ndarray:
        """``f_r(z)`` for each ``r``, memoized."""
        rs = np.asarray(rs, dtype=float).reshape(-1)
        out = np.empty(rs.size)
        for i, r in enumerate(rs):
            key = float(r)
            hit = self._end_cache.get(key)
            if hit is None:
                hit = self._end_cache[key] = density_point(self.model, key, self.z)
            out[i] = hit
        return out



def _phi_matrix(rb: RandomBridge, rs: np.ndarray, t: float, xs: np.ndarray) -> np.ndarray:
    """``phi(r, t, x)`` for every pair, shape ``(len(xs), len(rs))``."""
    rs = np.asarray(rs, dtype=float).reshape(-1)
    xs = np.asarray(xs, dtype=float).reshape(-1)
    out = np.zeros((xs.size, rs.size))
    ends = rb.endpoint_densities(rs)
    for j, r in enumerate(rs):
        if r - t <= 0.0:
            continue
        out[:, j] = density_points(rb.model, r - t, rb.z - xs) / ends[j]
    return out


def phi(rb: RandomBridge, r: float, t: float, x: float) -> float:
    """Likelihood ratio ``f_{r-t}(z-x) / f_r(z)`` for ``t < r``, else 0."""
    if t >= r:
        return 0.0
    end = rb.endpoint_densities([r])[0]
    if not end > denominator_floor(rb.model, r):
        raise DenominatorUnderflowError(f"f_r(z) underflows at r={r}")
    return density_point(rb.model, r - t, rb.z - x) / end


def marginal_density(rb: RandomBridge, t: float, ys) -> np.ndarray:
    """Continuous part of the law of ``zeta_t`` started from 0: ``f_t(y) int_(t,inf) phi(r,t,y) P_tau(dr)``.

    Its mass is ``1 - F(t)``; the rest sits at ``z``.
    """
    if not t > 0:
        raise TimeOrderError(f"need t > 0, got {t}")
    ys = np.asarray(ys, dtype=float).reshape(-1)
    rs, ws = _support_after(rb, t)
    tail = _phi_matrix(rb, rs, t, ys) @ ws if rs.size else np.zeros(ys.size)
    return density_points(rb.model, t, ys) * tail


# ---------------------------------------------------------------------------
# Posteriors of tau
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TauPosterior:
    """Normalized conditional law of ``tau`` supported in ``(lower, upper]``."""

    law: LengthLaw
    lower: float
    upper: float

    @property
    def atom_times(self) -> np.ndarray:
        return self.law.atom_times

    @property
    def atom_probs(self) -> np.ndarray:
        return self.law.atom_probs

    def integrate(self, g: Callable | None = None) -> float:
        return integrate(self.law, g)

    def mean(self) -> float:
        return integrate(self.law, lambda r: r)

    def probability(self, a: float, b: float = math.inf) -> float:
        """``P(a < tau <= b)`` under the posterior."""
        return integrate(self.law, None, a, b)

    def write_csv(self, path) -> None:
        """Rows ``kind, r, value``: ``atom`` rows carry weights, ``density`` rows density values."""
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "r", "value"])
            for r, p in zip(self.law.atom_times, self.law.atom_probs):
                w.writerow(["atom", repr(float(r)), repr(float(p))])
            if self.law.grid is not None:
                for r, v in zip(self.law.grid, self.law.values):
                    w.writerow(["density", repr(float(r)), repr(float(v))])


def _weighted_restriction(rb: RandomBridge, a: float, b: float, weight: Callable[[np.ndarray], np.ndarray]):
    """Pieces of ``weight(r) P_tau(dr)`` on ``(a, b]`` and their total."""
    at, ap, grid, values = rb.length_law.restrict(a, b)
    wa = ap * weight(at) if at.size else ap
    wv = None if grid is None else values * weight(grid)
    total = float(np.sum(wa)) + (0.0 if grid is None else float(np.trapezoid(wv, grid)))
    return at, wa, grid, wv, total


def _normalizer_floor(rb: RandomBridge, a: float, b: float = math.inf) -> float:
    """Normalizers below ``ZERO_NORMALIZER_RTOL`` times their value for an
    observation at the origin, which is the prior mass of ``(a, b]``, count as zero."""
    return max(DENSITY_FLOOR, ZERO_NORMALIZER_RTOL * integrate(rb.length_law, None, a, b))


def _posterior_from_pieces(at, wa, grid, wv, total, a, b, what: str, floor: float = DENSITY_FLOOR) -> TauPosterior:
    if not (total > floor and math.isfinite(total)):
        raise ZeroNormalizerError(f"{what}: normalizer {total!r} vanishes on ({a}, {b}]")
    if grid is not None and not np.any(wv > 0):
        grid = wv = None
    law = LengthLaw.normalized(at, wa, grid, wv)
    return TauPosterior(law, a, b)


def _phi_weight(rb: RandomBridge, t: float, x: float) -> Callable[[np.ndarray], np.ndarray]:
    def weight(rs: np.ndarray) -> np.ndarray:
        return _phi_matrix(rb, rs, t, np.array([x]))[0]

    return weight


def tau_posterior_single(rb: RandomBridge, t: float, x) -> TauPosterior:
    """Law of ``tau`` given an unabsorbed observation ``zeta_t = x``.

    The posterior has density ``phi(., t, x)`` w.r.t. ``P_tau`` on ``(t, inf)``.
    Passing the absorption token is rejected: then ``tau <= t`` is known.
    """
    if not t > 0:
        raise TimeOrderError(f"observation time must be positive, got {t}")
    if is_absorbed_token(x):
        raise InvalidObservationError("an absorbed observation means tau <= t; use tau_posterior_multi")
    x = float(x)
    pieces = _weighted_restriction(rb, t, math.inf, _phi_weight(rb, t, x))
    floor = _normalizer_floor(rb, t)
    return _posterior_from_pieces(*pieces, t, math.inf, f"posterior at t={t}, x={x}", floor)


def tau_posterior_multi(rb: RandomBridge, times, xs) -> TauPosterior:
    """Law of ``tau`` given ``zeta_{t_1} = x_1, ..., zeta_{t_n} = x_n``.

    The token ``"z"`` (:data:`ABSORBED`) marks an absorbed observation.
    Only the last value before absorption matters:

    * ``x_1 = z``: the prior restricted to ``(0, t_1]``;
    * ``x_k != z = x_{k+1}``: density ``phi(., t_k, x_k)`` on ``(t_k, t_{k+1}]``;
    * ``x_n != z``: density ``phi(., t_n, x_n)`` on ``(t_n, inf)``.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    xs = list(xs)
    if times.size == 0 or times.size != len(xs):
        raise InvalidObservationError("need equally many observation times and values")
    if times[0] <= 0 or np.any(np.diff(times) <= 0):
        raise TimeOrderError("observation times must satisfy 0 < t_1 < ... < t_n")
    absorbed = np.array([is_absorbed_token(v) for v in xs])
    first = int(np.argmax(absorbed)) if absorbed.any() else times.size
    if np.any(~absorbed[first:]):
        raise InvalidObservationError("a value different from z was observed after absorption at z")
    if first == 0:
        pieces = _weighted_restriction(rb, 0.0, times[0], lambda rs: np.ones_like(rs))
        return _posterior_from_pieces(*pieces, 0.0, float(times[0]), "prior mass F(t_1)")
    k = first - 1
    t_k, x_k = float(times[k]), float(xs[k])
    upper = float(times[first]) if first < times.size else math.inf
    pieces = _weighted_restriction(rb, t_k, upper, _phi_weight(rb, t_k, x_k))
    floor = _normalizer_floor(rb, t_k, upper)
    return _posterior_from_pieces(*pieces, t_k, upper, f"posterior on ({t_k}, {upper}]", floor)


def atom_posteriors(rb: RandomBridge, t: float, xs) -> np.ndarray:
    """Posterior atom probabilities given ``zeta_t = x`` for many ``x`` at once.

    Only for purely atomic length laws; row ``i`` is the law of ``tau`` given
    ``zeta_t = xs[i] != z``. Same weights as :func:`tau_posterior_single`.
    """
    law = rb.length_law
    if law.has_density:
        raise ValueError("atom_posteriors needs a purely atomic length law")
    xs = np.asarray(xs, dtype=float).reshape(-1)
    w = _phi_matrix(rb, law.atom_times, t, xs) * law.atom_probs[None, :]
    total = w.sum(axis=1, keepdims=True)
    if np.any(~(total > _normalizer_floor(rb, t))):
        raise ZeroNormalizerError(f"posterior normalizer vanishes for some observations at t={t}")
    return w / total


# ---------------------------------------------------------------------------
# Mixed transition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixedTransition:
    """Law of ``zeta_u`` given ``zeta_t = x``: an atom at ``z`` plus a density on a lattice."""

    atom_mass: float
    grid: np.ndarray
    density: np.ndarray
    dy: float
    z: float
    source: tuple[float, float, float]

    def continuous_mass(self) -> float:
        return float(np.sum(self.density) * self.dy)

    def total_mass(self) -> float:
        return self.atom_mass + self.continuous_mass()

    def density_at(self, y) -> np.ndarray:
        return np.interp(y, self.grid, self.density, left=0.0, right=0.0)

    def expectation(self, g: Callable) -> float:
        """``g(z) * atom + sum g(y) density(y) dy``; ``g`` must accept arrays."""
        cont = 0.0
        if self.density.size:
            cont = float(np.sum(np.asarray(g(self.grid), dtype=float) * self.density) * self.dy)
        return float(g(np.array([self.z]))[0]) * self.atom_mass + cont

    def cropped(self, tail: float = 1e-14) -> MixedTransition:
        """Drop lattice ends carrying less than ``tail`` of the continuous mass each."""
        if self.density.size == 0:
            return self
        cum = np.cumsum(self.density) * self.dy
        total = cum[-1]
        lo = int(np.searchsorted(cum, tail * total))
        hi = int(np.searchsorted(cum, (1 - tail) * total)) + 1
        lo, hi = max(lo - 1, 0), min(hi + 1, self.grid.size)
        return MixedTransition(self.atom_mass, self.grid[lo:hi], self.density[lo:hi], self.dy, self.z, self.source)

    def to_json(self, tail: float = 1e-14) -> str:
        c = self.cropped(tail)
        return json.dumps(
            {
                "atom_mass": c.atom_mass,
                "z": c.z,
                "source": {"t": c.source[0], "x": c.source[1], "u": c.source[2]},
                "dy": c.dy,
                "grid": c.grid.tolist(),
                "density": c.density.tolist(),
            }
        )


@dataclass(frozen=True, eq=False)
class _Lattice:
    """Shared lattice ``y = x + j dy`` with the tables a transition needs.

    ``plain[s]`` holds ``f_s(y - x)``. Tables ``f_s(z - y)`` toward the
    endpoint are built on demand: :meth:`toward` caches one per time,
    :meth:`toward_mixture` sums many in a single transform.
    """

    y: np.ndarray
    dy: float
    plain: dict
    model: CharacteristicExponent
    plan: InversionPlan
    shift: float
    cache: DensityCache

    def toward(self, s: float) -> np.ndarray:
        return self.cache.shifted(self.model, float(s), self.plan, self.shift)

    def toward_mixture(self, times, weights) -> np.ndarray:
        return shifted_lattice_mixture(self.model, times, weights, self.plan, self.shift)


def _support_after(rb: RandomBridge, a: float, b: float = math.inf):
    """Support nodes of ``P_tau`` on ``(a, b]`` with their integration weights.

    Atoms carry their probability; density nodes carry trapezoid weights
    times the density, with breakpoints inserted at ``a`` and ``b``.
    """
    at, ap, grid, values = rb.length_law.restrict(a, b)
    rs, ws = [at], [ap]
    if grid is not None:
        tw = np.zeros(grid.size)
        h = np.diff(grid)
        tw[:-1] += 0.5 * h
        tw[1:] += 0.5 * h
        rs.append(grid)
        ws.append(values * tw)
    return np.concatenate(rs), np.concatenate(ws)


def _lattice_for(rb: RandomBridge, x: float, times_plain, times_z, cache: DensityCache) -> _Lattice:
    times_plain = sorted({float(s) for s in times_plain if s > 0})
    times_z = sorted({float(s) for s in times_z if s > 0})
    # tiny remaining times (density nodes just past u) do not set the spacing
    ref = max(times_plain + times_z)
    resolving = [s for s in times_z if s >= ref / 64.0]
    # the extremes set spacing and period; times in between need neither
    resolving = [s for s in times_plain if s >= ref / 64.0] + resolving[:1] + resolving[-1:]
    plan = common_plan(rb.model, tuple(sorted(set(resolving or [ref]))), reach=abs(x - rb.z), alias_rtol=1e-8)
    n = plan.n_freq - 1
    y = x + np.arange(-n, n + 1) * plan.dx
    plain = {s: cache.table(rb.model, s, plan).values for s in times_plain}
    return _Lattice(y, plan.dx, plain, rb.model, plan, x - rb.z, cache)


def _lattice_index_near(lat: _Lattice, value: float):
    pos = (value - lat.y[0]) / lat.dy
    i = int(math.floor(pos))
    frac = pos - i
    return i, frac


def _survival_profile(
    rb: RandomBridge, lat: _Lattice, u: float, rs: np.ndarray, ws: np.ndarray, with_point: bool = True
):
    """``S(y) = sum_r w_r f_{r-u}(z-y) / f_r(z)`` over support nodes ``r > u`` on the lattice.

    A density node sitting exactly at ``u`` contributes a point mass at ``z``.
    With ``with_point`` it is split linearly between the two neighbouring
    lattice nodes; otherwise its total weight is returned separately as
    ``(profile, point_weight)``.
    """
    ends = rb.endpoint_densities(rs)
    out = np.zeros(lat.y.size)
    point = 0.0
    atoms = set(rb.length_law.atom_times.tolist())
    mix_t, mix_w = [], []
    for r, w, e in zip(rs, ws, ends):
        if w == 0.0:
            continue
        rem = float(r - u)
        if rem <= 0:
            point += w / e
        elif float(r) in atoms:
            out += (w / e) * lat.toward(rem)
        else:
            mix_t.append(rem)
            mix_w.append(w / e)
    if mix_t:
        out += lat.toward_mixture(mix_t, mix_w)
    if not with_point:
        return out, point
    if point:
        _add_point(lat, rb.z, point, out)
    return out


def _add_point(lat: _Lattice, at: float, mass: float, out: np.ndarray) -> None:
    i, frac = _lattice_index_near(lat, at)
    out[i] += mass * (1 - frac) / lat.dy
    out[i + 1] += mass * frac / lat.dy


def _check_transition_args(rb: RandomBridge, t: float, u: float) -> None:
    if not (0.0 <= t < u):
        raise TimeOrderError(f"need 0 <= t < u, got t={t}, u={u}")


def _normalizer(rb: RandomBridge, t: float, x: float, u: float) -> tuple[float, float]:
    """``(int_(t,u] phi dP_tau, int_(t,inf) phi dP_tau)`` for ``x != z``."""
    weight = _phi_weight(rb, t, x)
    *_, bracket = _weighted_restriction(rb, t, u, weight)
    *_, tail = _weighted_restriction(rb, u, math.inf, weight)
    total = bracket + tail
    if not (total > _normalizer_floor(rb, t) and math.isfinite(total)):
        raise ZeroNormalizerError(f"no surviving length is consistent with zeta_{t} = {x}")
    return bracket, total


def _transition_on(rb: RandomBridge, t: float, x: float, u: float, lat: _Lattice | None, cache: DensityCache):
    bracket, total = _normalizer(rb, t, x, u)
    rs, ws = _support_after(rb, u)
    if rs.size == 0 or not np.any(ws > 0):
        return MixedTransition(bracket / total, np.array([rb.z]), np.zeros(1), 1.0, rb.z, (t, x, u))
    if lat is None:
        lat = _lattice_for(rb, x, [u - t], [r - u for r in rs], cache)
    survival, point = _survival_profile(rb, lat, u, rs, ws, with_point=False)
    dens = lat.plain[float(u - t)] * survival / total
    if point:
        # density nodes at r = u: the bridge of that length sits at z at time u
        _add_point(lat, rb.z, point * density_point(rb.model, u - t, rb.z - x) / total, dens)
    return MixedTransition(bracket / total, lat.y, dens, lat.dy, rb.z, (t, x, u))


def transition(
    rb: RandomBridge, t: float, x: float, u: float, cache: DensityCache = DEFAULT_CACHE, absorbed: bool = False
) -> MixedTransition:
    """Law of ``zeta_u`` given ``zeta_t = x``.

    From an absorbed state (``absorbed=True``, value ``z``) this is the
    point mass at ``z``. Otherwise the atom at ``z``
    has mass ``int_(t,u] phi(r,t,x) P_tau(dr) / N`` and the density is
    ``f_{u-t}(y-x) int_(u,inf) phi(r,u,y) P_tau(dr) / N`` with
    ``N = int_(t,inf) phi(r,t,x) P_tau(dr)``.
    """
    _check_transition_args(rb, t, u)
    if absorbed:
        return MixedTransition(1.0, np.array([rb.z]), np.zeros(1), 1.0, rb.z, (t, rb.z, u))
    return _transition_on(rb, t, x, u, None, cache)


def conditional_expectation(
    rb: RandomBridge,
    t: float,
    x: float,
    u: float,
    g: Callable,
    cache: DensityCache = DEFAULT_CACHE,
    absorbed: bool = False,
) -> float:
    """``E[g(zeta_u) | zeta_t = x]``; ``g`` must accept numpy arrays. Returns ``g(z)`` when absorbed."""
    _check_transition_args(rb, t, u)
    if absorbed:
        return float(np.asarray(g(np.array([rb.z])), dtype=float)[0])
    return transition(rb, t, x, u, cache).expectation(g)


def joint_conditional(
    rb: RandomBridge, t: float, x: float, u: float, g2: Callable, cache: DensityCache = DEFAULT_CACHE
) -> float:
    """``E[g2(tau, zeta_u) | zeta_t = x]`` for an unabsorbed observation.

    ``g2(r, y)`` must broadcast over arrays. Lengths in ``(t, u]`` contribute
    ``g2(r, z)``; lengths beyond ``u`` contribute the bridge expectation of
    ``g2(r, zeta_u)``. The absorbed branch needs the realized ``tau`` and is
    left to the caller.
    """
    _check_transition_args(rb, t, u)
    _, total = _normalizer(rb, t, x, u)
    weight = _phi_weight(rb, t, x)
    at, wa, grid, wv, _ = _weighted_restriction(rb, t, u, weight)
    value = 0.0
    if at.size:
        value += float(np.sum(wa * np.asarray(g2(at, np.full(at.size, rb.z)), dtype=float)))
    if grid is not None:
        value += float(np.trapezoid(wv * np.asarray(g2(grid, np.full(grid.size, rb.z)), dtype=float), grid))
    rs, ws = _support_after(rb, u)
    if rs.size:
        lat = _lattice_for(rb, x, [u - t], [r - u for r in rs], cache)
        step = lat.plain[float(u - t)]
        ends = rb.endpoint_densities(rs)
        for r, w, e in zip(rs, ws, ends):
            if w == 0.0:
                continue
            rem = float(r - u)
            if rem > 0:
                prof = step * lat.toward(rem) / e
                gv = np.asarray(g2(np.full(lat.y.size, r), lat.y), dtype=float)
                value += w * float(np.sum(gv * prof) * lat.dy)
            else:
                # point mass at y = z with weight f_{u-t}(z-x) / f_u(z)
                fz = density_point(rb.model, u - t, rb.z - x)
                value += w * fz / e * float(np.asarray(g2(np.array([r]), np.array([rb.z])), dtype=float)[0])
    return value / total


def compose_transitions(
    rb: RandomBridge, t: float, x: float, s: float, u: float, cache: DensityCache = DEFAULT_CACHE
) -> tuple[MixedTransition, MixedTransition]:
    """``(composed, direct)``: ``t -> s -> u`` through the kernel versus ``t -> u`` directly.

    The intermediate kernel ``s -> u`` is evaluated from every lattice node
    ``y`` at once: its atom is ``int_(s,u] phi(r,s,y) dP / N_s(y)`` and its
    density ``f_{u-s}(w-y) S_u(w) / N_s(y)``, where ``N_s(y)`` and ``S_u``
    are survival integrals of ``phi``. Intended for atomic length laws; a
    density node exactly at ``s`` or ``u`` enters only as a lattice spike.
    """
    from scipy.signal import fftconvolve

    if not (0.0 <= t < s < u):
        raise TimeOrderError(f"need 0 <= t < s < u, got {t}, {s}, {u}")
    rs_s, ws_s = _support_after(rb, s)
    rs_u, ws_u = _support_after(rb, u)
    rem_times = [r - s for r in rs_s] + [r - u for r in rs_u]
    lat = _lattice_for(rb, x, [s - t, u - s, u - t], rem_times, cache)
    step = _transition_on(rb, t, x, s, lat, cache)
    first = step.density if step.density.size == lat.y.size else np.zeros(lat.y.size)
    # N_s(y) and the (s, u] bracket mass from every node y
    in_bracket = rs_s <= u
    n_s = _survival_profile(rb, lat, s, rs_s, ws_s)
    bracket_s = _survival_profile(rb, lat, s, rs_s[in_bracket], ws_s[in_bracket])
    safe = n_s > DENSITY_FLOOR
    ratio = np.divide(first, n_s, out=np.zeros_like(first), where=safe)
    atom = step.atom_mass + float(np.sum(ratio * bracket_s) * lat.dy)
    survival_u = _survival_profile(rb, lat, u, rs_u, ws_u)
    composed = fftconvolve(ratio, lat.plain[float(u - s)], mode="same") * lat.dy * survival_u
    direct = _transition_on(rb, t, x, u, lat, cache)
    return MixedTransition(atom, lat.y, composed, lat.dy, rb.z, (t, x, u)), direct


# ---------------------------------------------------------------------------
# Path sampling
# ---------------------------------------------------------------------------


def _random_bridge_values(rb: RandomBridge, tables: tuple[SamplingTables, SamplingTables], grid: np.ndarray, n: int, rng):
    """Draw lengths, then bridge values grouped by length.

    Atom lengths use the shared tables; lengths drawn from the density part
    are all distinct and use the transient ones.
    """
    shared, transient = tables
    atoms = set(rb.length_law.atom_times.tolist())
    lengths = np.atleast_1d(sample_tau(rb.length_law, rng, size=n))
    values = np.empty((n, grid.size))
    for r in np.unique(lengths):
        rows = np.flatnonzero(lengths == r)
        tab = shared if float(r) in atoms else transient
        values[rows] = bridge_values(tab, float(r), rb.z, grid, rows.size, rng)
    return lengths, values


def _tables(rb: RandomBridge, cache: DensityCache) -> tuple[SamplingTables, SamplingTables]:
    return SamplingTables(rb.model, cache), SamplingTables(rb.model, cache, transient=True)


def sample_paths(
    rb: RandomBridge, grid, n_paths: int, seed=None, cache: DensityCache = DEFAULT_CACHE
) -> PathBatch:
    """Draw ``tau`` from its law, then a bridge of that length on ``grid``, then hold ``z``.

    Paths are simulated in chunks; chunk ``k`` uses child ``k`` of the root
    seed sequence (see :func:`levybridge.bridge_fixed.chunk_generators`).
    """
    g = _validate_grid(grid, None)
    n_chunks = max(1, math.ceil(n_paths / CHUNK_PATHS))
    rngs = chunk_generators(seed, n_chunks)
    tables = _tables(rb, cache)
    lengths, values = [], []
    for k in range(n_chunks):
        size = min(CHUNK_PATHS, n_paths - k * CHUNK_PATHS)
        lk, vk = _random_bridge_values(rb, tables, g, size, rngs[k])
        lengths.append(lk)
        values.append(vk)
    lengths = np.concatenate(lengths) if lengths else np.empty(0)
    values = np.concatenate(values) if values else np.empty((0, g.size))
    absorbed = g[None, :] >= lengths[:, None] * (1 - TIME_EPS)
    return PathBatch(g, values, lengths, absorbed)


def sample_path(rb: RandomBridge, grid, rng=None, cache: DensityCache = DEFAULT_CACHE) -> PathSample:
    """One path of the random-length bridge on ``grid`` (starting at 0)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    g = _validate_grid(grid, None)
    lengths, values = _random_bridge_values(rb, _tables(rb, cache), g, 1, rng)
    r = float(lengths[0])
    return PathSample(g, values[0], r, g >= r * (1 - TIME_EPS))

"""Lévy bridge of deterministic length ``r`` from 0 to ``z``.

The bridge is a non-homogeneous Markov process with kernel

    P(X_u in dy | X_t = x) = f_{u-t}(y-x) f_{r-u}(z-y) / f_{r-t}(z-x) dy,   0 <= t < u < r,

and it is continued by the constant ``z`` from time ``r`` on.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .density import (
    DEFAULT_CACHE,
    DENSITY_FLOOR,
    DensityCache,
    DensityTable,
    InversionPlan,
    common_plan,
    density_grid,
    density_point,
    denominator_floor,
    density_points,
    frequency_scale,
)
from .errors import DenominatorUnderflowError, TimeOrderError
from .models import CharacteristicExponent
from .paths import PathBatch, PathSample

CHUNK_PATHS = 2048
SINH_NODES = 160
SINH_REACH = 2000.0
TIME_EPS = 1e-12


def _check_den(value: float, what: str, model: CharacteristicExponent, t: float) -> float:
    if not (value > denominator_floor(model, t) and math.isfinite(value)):
        raise DenominatorUnderflowError(f"{what} = {value!r} is numerically zero")
    return value


@dataclass(frozen=True)
class BridgeSpec:
    """Bridge of ``model`` from 0 at time 0 to ``z`` at time ``r``."""

    model: CharacteristicExponent
    r: float
    z: float

    def __post_init__(self) -> None:
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"bridge length must be positive, got {self.r}")
        if not math.isfinite(self.z):
            raise ValueError("z must be finite")
        _check_den(self.endpoint_density, f"f_r(z) for r={self.r}, z={self.z}", self.model, self.r)

    @cached_property
    def endpoint_density(self) -> float:
        """``f_r(z)``."""
        return density_point(self.model, self.r, self.z)


def _check_order(t: float, u: float, r: float) -> None:
    if not (0.0 <= t < u < r):
        raise TimeOrderError(f"need 0 <= t < u < r, got t={t}, u={u}, r={r}")


def bridge_transition_density(spec: BridgeSpec, t: float, x: float, u: float, y):
    """Kernel density at ``y`` (scalar or array) by pointwise quadrature."""
    _check_order(t, u, spec.r)
    den = _check_den(density_point(spec.model, spec.r - t, spec.z - x), f"f_(r-t)(z-x) at t={t}, x={x}", spec.model, spec.r - t)
    y_arr = np.asarray(y, dtype=float)
    num = density_points(spec.model, u - t, y_arr - x) * density_points(spec.model, spec.r - u, spec.z - y_arr)
    out = num / den
    return float(out) if np.ndim(y) == 0 else out


def bridge_fdd(spec: BridgeSpec, times, xs) -> float:
    """Joint density of ``(X_{t_1}, ..., X_{t_n})`` at ``xs``."""
    times = np.asarray(times, dtype=float).reshape(-1)
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if times.shape != xs.shape or times.size == 0:
        raise ValueError("times and xs must be nonempty and of equal length")
    if times[0] <= 0 or np.any(np.diff(times) <= 0) or times[-1] >= spec.r:
        raise TimeOrderError(f"need 0 < t_1 < ... < t_n < r = {spec.r}")
    f_rz = _check_den(spec.endpoint_density, "f_r(z)", spec.model, spec.r)
    prev_t, prev_x = 0.0, 0.0
    prod = 1.0
    for ti, xi in zip(times, xs):
        prod *= density_point(spec.model, ti - prev_t, xi - prev_x)
        prev_t, prev_x = ti, xi
    prod *= density_point(spec.model, spec.r - times[-1], spec.z - xs[-1])
    return prod / f_rz


# ---------------------------------------------------------------------------
# Kernel on a uniform lattice
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatticeKernel:
    """A density tabulated on the uniform lattice ``y = x + j dy``."""

    y: np.ndarray
    density: np.ndarray
    dy: float

    def mass(self) -> float:
        return float(np.sum(self.density) * self.dy)

    def mean(self) -> float:
        return float(np.sum(self.y * self.density) * self.dy / self.mass())

    def variance(self) -> float:
        m = self.mean()
        return float(np.sum((self.y - m) ** 2 * self.density) * self.dy / self.mass())

    def cdf(self, points) -> np.ndarray:
        cum = np.cumsum(self.density) * self.dy
        cum -= 0.5 * self.density * self.dy
        return np.interp(points, self.y, cum, left=0.0, right=cum[-1])


def lattice_tables(model, times, anchor_shift, reach, cache: DensityCache = DEFAULT_CACHE):
    """Plan shared by several times plus the values needed for bridge ratios.

    Returns ``(plan, offsets, plain, toward_z)`` where ``plain[t]`` is
    ``f_t(j dx)`` and ``toward_z[t]`` is ``f_t(j dx + anchor_shift)``, both over
    the full period ``|j| <= n``.
    """
    times = tuple(float(t) for t in times)
    plan = common_plan(model, tuple(sorted(set(times))), reach=abs(anchor_shift) + reach, alias_rtol=1e-8)
    n = plan.n_freq - 1
    offsets = np.arange(-n, n + 1) * plan.dx
    plain = {t: cache.table(model, t, plan).values for t in set(times)}
    toward_z = {t: cache.shifted(model, t, plan, anchor_shift) for t in set(times)}
    return plan, offsets, plain, toward_z


def kernel_on_lattice(
    spec: BridgeSpec, t: float, x: float, u: float, cache: DensityCache = DEFAULT_CACHE
) -> LatticeKernel:
    """The kernel ``y -> P(X_u in dy | X_t = x)`` on a lattice anchored at ``x``.

    The lattice spans a whole inversion period, so no mass is lost to a
    truncated window; tables come from the cache.
    """
    _check_order(t, u, spec.r)
    den = _check_den(density_point(spec.model, spec.r - t, spec.z - x), f"f_(r-t)(z-x) at t={t}, x={x}", spec.model, spec.r - t)
    step, rem = u - t, spec.r - u
    plan, offsets, plain, toward_z = lattice_tables(spec.model, (step, rem), x - spec.z, 0.0, cache)
    dens = plain[float(step)] * toward_z[float(rem)] / den
    return LatticeKernel(x + offsets, dens, plan.dx)


def compose_kernels(
    spec: BridgeSpec, t: float, x: float, s: float, u: float, cache: DensityCache = DEFAULT_CACHE
) -> tuple[LatticeKernel, LatticeKernel]:
    """``(composed, direct)``: the ``t -> s -> u`` kernel composition and the ``t -> u`` kernel.

    Both live on the same lattice anchored at ``x``.
    """
    if not (0.0 <= t < s < u < spec.r):
        raise TimeOrderError(f"need 0 <= t < s < u < r, got {t}, {s}, {u}, {spec.r}")
    from scipy.signal import fftconvolve

    model, r, z = spec.model, spec.r, spec.z
    times = (s - t, u - s, u - t, r - s, r - u)
    plan, offsets, plain, toward_z = lattice_tables(model, times, x - z, 0.0, cache)
    den_t = _check_den(density_point(model, r - t, z - x), "f_(r-t)(z-x)", model, r - t)
    first = plain[float(s - t)] * toward_z[float(r - s)] / den_t
    # second kernel from y: f_{u-s}(w-y) f_{r-u}(z-w) / f_{r-s}(z-y)
    den_s = toward_z[float(r - s)]
    ratio = np.divide(first, den_s, out=np.zeros_like(first), where=den_s > DENSITY_FLOOR)
    conv = fftconvolve(ratio, plain[float(u - s)], mode="same") * plan.dx
    composed = conv * toward_z[float(r - u)]
    direct = plain[float(u - t)] * toward_z[float(r - u)] / den_t
    y = x + offsets
    return LatticeKernel(y, composed, plan.dx), LatticeKernel(y, direct, plan.dx)


# ---------------------------------------------------------------------------
# Path sampling
# ---------------------------------------------------------------------------


class SamplingTables:
    """Per-time tables used by the samplers, built on first use.

    Tables are oversampled twice relative to the cutoff spacing and cropped
    to a few thousand length scales; kernel nodes beyond them fall back to
    pointwise quadrature. Self-similar models rescale a single ``t = 1``
    table. With ``transient=True`` other tables live in a small LRU instead
    of the shared cache, which suits bridges of many distinct lengths.
    """

    LRU_SIZE = 64

    def __init__(self, model: CharacteristicExponent, cache: DensityCache = DEFAULT_CACHE, transient: bool = False) -> None:
        self.model = model
        self.cache = cache
        self.transient = transient
        self._lock = threading.Lock()
        self._local: OrderedDict[float, tuple[DensityTable, float]] = OrderedDict()

    def _build(self, t: float) -> DensityTable:
        plan = common_plan(self.model, (t,), alias_rtol=1e-8, oversample=2.0)
        crop = min(plan.half_period, 2.0 * SINH_REACH / frequency_scale(self.model, t))
        plan = InversionPlan(plan.cutoff, plan.du, crop)
        if self.transient:
            return density_grid(self.model, t, plan)
        return self.cache.table(self.model, t, plan)

    def _entry(self, t: float) -> tuple[DensityTable, float]:
        t = float(t)
        with self._lock:
            hit = self._local.get(t)
            if hit is not None:
                self._local.move_to_end(t)
                return hit
        alpha = self.model.self_similarity_index
        if alpha is not None and t != 1.0:
            base, base_scale = self._entry(1.0)
            s = t ** (1.0 / alpha)
            tab = DensityTable(t, base.x * s, base.values / s, base.dx * s, None, self.model)
            tab.__dict__["_coeffs"] = base._coeffs / s
            entry = (tab, base_scale * s)
        else:
            tab = self._build(t)
            entry = (tab, tab.quantile_half_range(0.75))
        with self._lock:
            self._local[t] = entry
            if len(self._local) > self.LRU_SIZE:
                # keep the t = 1 base of self-similar models
                for key in list(self._local):
                    if key != 1.0:
                        del self._local[key]
                        break
        return entry

    def table(self, t: float) -> DensityTable:
        return self._entry(t)[0]

    def scale(self, t: float) -> float:
        """Interquartile half-range of ``f_t``."""
        return self._entry(t)[1]


_SINH_OFFSETS = np.sinh(np.linspace(-math.asinh(SINH_REACH), math.asinh(SINH_REACH), SINH_NODES))


def kernel_step(
    tables: SamplingTables,
    x: np.ndarray,
    z: float,
    dt: float,
    remaining: float,
    rng: np.random.Generator,
    t_from: float = math.nan,
) -> np.ndarray:
    """Draw ``X_{t+dt}`` given ``X_t = x`` for a bridge with ``remaining`` time left after the step.

    The kernel is tabulated on two sinh-spaced node sets per path, one
    centred at ``x`` and one at ``z``, merged and sorted; the draw inverts
    the trapezoid CDF exactly within each cell.
    """
    from ._kernels import draw_rows

    x = np.ascontiguousarray(x, dtype=float)
    model = tables.model
    step_tab, rem_tab = tables.table(dt), tables.table(remaining)
    s_a, s_b = tables.scale(dt), tables.scale(remaining)
    uniforms = rng.random(x.size)
    out, totals = draw_rows(
        x, float(z), s_a, s_b, _SINH_OFFSETS,
        step_tab._coeffs, float(step_tab.x[0]), step_tab.dx, step_tab.x.size,
        rem_tab._coeffs, float(rem_tab.x[0]), rem_tab.dx, rem_tab.x.size,
        uniforms, DENSITY_FLOOR,
    )
    for i in np.flatnonzero(np.isnan(out)):
        # beyond the tables: exact quadrature on the same nodes
        nodes = np.sort(np.concatenate((x[i] + s_a * _SINH_OFFSETS, z + s_b * _SINH_OFFSETS)))
        dens = density_points(model, dt, nodes - x[i]) * density_points(model, remaining, z - nodes)
        out[i] = _invert_row(nodes, dens, uniforms[i], t_from, x[i], dt, remaining)
    return out


def _invert_row(nodes, dens, uniform, t_from, x, dt, remaining) -> float:
    widths = np.diff(nodes)
    cells = 0.5 * (dens[1:] + dens[:-1]) * widths
    total = cells.sum()
    if not total > DENSITY_FLOOR:
        raise DenominatorUnderflowError(
            f"bridge kernel vanishes numerically at t={t_from}, x={x} (step {dt}, remaining {remaining})"
        )
    cum = np.cumsum(cells)
    target = uniform * total
    k = min(int(np.searchsorted(cum, target)), cells.size - 1)
    m = target - (cum[k] - cells[k])
    h, d0 = widths[k], dens[k]
    slope = (dens[k + 1] - d0) / h if h > 0 else 0.0
    disc = math.sqrt(max(d0 * d0 + 2.0 * slope * m, 0.0))
    s = 2.0 * m / (d0 + disc) if d0 + disc > 0 else 0.0
    return float(nodes[k] + min(max(s, 0.0), h))


def _validate_grid(grid, r: float | None) -> np.ndarray:
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size < 1 or g[0] != 0.0:
        raise TimeOrderError("time grid must start at 0")
    if np.any(np.diff(g) <= 0):
        raise TimeOrderError("time grid must be strictly increasing")
    if r is not None and g[-1] > r * (1 + TIME_EPS):
        raise TimeOrderError(f"time grid ends at {g[-1]} beyond the bridge length {r}")
    return g


def chunk_generators(seed, n_chunks: int) -> list[np.random.Generator]:
    """Independent generators for path chunks.

    Chunk ``k`` uses child ``k`` of ``SeedSequence(seed)`` (or of the given
    generator via ``Generator.spawn``), so results do not depend on the
    number of workers.
    """
    if isinstance(seed, np.random.Generator):
        return seed.spawn(n_chunks)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(n_chunks)]


def bridge_values(
    tables: SamplingTables, r: float, z: float, grid: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Values of ``n`` bridges of length ``r`` on ``grid``; nodes at or after ``r`` hold ``z``."""
    values = np.empty((n, grid.size))
    values[:, 0] = 0.0
    x = np.zeros(n)
    for i in range(1, grid.size):
        s_prev, s = grid[i - 1], grid[i]
        if s_prev >= r * (1 - TIME_EPS):
            values[:, i:] = z
            break
        if s >= r * (1 - TIME_EPS):
            x = np.full(n, z)
        else:
            x = kernel_step(tables, x, z, s - s_prev, r - s, rng, t_from=s_prev)
        values[:, i] = x
    return values


def sample_bridge_paths(
    spec: BridgeSpec,
    grid,
    n_paths: int,
    seed=None,
    workers: int = 1,
    cache: DensityCache = DEFAULT_CACHE,
) -> PathBatch:
    """Sample ``n_paths`` bridge paths on ``grid``, sequentially through the kernel."""
    g = _validate_grid(grid, spec.r)
    n_chunks = max(1, math.ceil(n_paths / CHUNK_PATHS))
    rngs = chunk_generators(seed, n_chunks)
    tables = SamplingTables(spec.model, cache)
    sizes = [min(CHUNK_PATHS, n_paths - k * CHUNK_PATHS) for k in range(n_chunks)]

    def run(k: int) -> np.ndarray:
        return bridge_values(tables, spec.r, spec.z, g, sizes[k], rngs[k])

    if workers > 1:
        # warm the shared tables serially so workers only read them
        for i in range(1, g.size):
            if g[i] < spec.r * (1 - TIME_EPS):
                tables.scale(g[i] - g[i - 1])
                tables.scale(spec.r - g[i])
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_chunks)))
    else:
        parts = [run(k) for k in range(n_chunks)]
    values = np.concatenate(parts) if parts else np.empty((0, g.size))
    absorbed = np.broadcast_to(g >= spec.r * (1 - TIME_EPS), values.shape).copy()
    return PathBatch(g, values, np.full(values.shape[0], spec.r), absorbed)


def sample_bridge_path(spec: BridgeSpec, grid, rng=None, cache: DensityCache = DEFAULT_CACHE) -> PathSample:
    """One bridge path on ``grid`` (which must lie in ``[0, r]``)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    g = _validate_grid(grid, spec.r)
    values = bridge_values(SamplingTables(spec.model, cache), spec.r, spec.z, g, 1, rng)[0]
    return PathSample(g, values, spec.r, g >= spec.r * (1 - TIME_EPS))

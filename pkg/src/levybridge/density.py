"""Transition densities ``f_t`` of symmetric Lévy models by Fourier inversion.

For a symmetric model ``f_t(x) = (1/pi) int_0^inf cos(x u) exp(t psi(u)) du``.
Single points use Gauss-Legendre panels on ``[0, U]``; whole tables use a
type-I discrete cosine transform on a uniform frequency grid, which yields
``f_t`` on the lattice ``x_j = j * pi / U``.
"""
from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft
from numpy.polynomial.legendre import leggauss
from scipy.signal import fftconvolve

from .errors import AccuracyError, GridMismatchError, TailNotDecayedError
from .models import CharacteristicExponent, evaluate

TAIL_TOL = 1e-16
CUTOFF_CAP = 2.0**20
DENSITY_FLOOR = 1e-300
# pointwise values below this fraction of f_t(0) are indistinguishable from roundoff
RESOLUTION_RTOL = 1e-14
CLAMP_REL = 1e-10
MAX_FFT_POINTS = 2**24

_GL_NODES, _GL_WEIGHTS = leggauss(24)


def cutoff_frequency(model: CharacteristicExponent, t: float) -> float:
    """Smallest power-of-two-bracketed ``U`` with ``exp(t psi(U)) < 1e-16``.

    Doubling locates a bracket ``[U/2, U]``; bisection then tightens ``U`` to
    within 1% while keeping the tail condition true.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")

    def decayed(u: float) -> bool:
        return math.exp(t * evaluate(model, u)) < TAIL_TOL

    hi = 1.0
    while not decayed(hi):
        hi *= 2.0
        if hi > CUTOFF_CAP:
            raise TailNotDecayedError(
                f"exp(t psi(u)) still >= {TAIL_TOL} at u = {CUTOFF_CAP:g} for {model} at t = {t}"
            )
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if decayed(mid):
            hi = mid
        else:
            lo = mid
    return hi


def frequency_scale(model: CharacteristicExponent, t: float) -> float:
    """Frequency ``u*`` at which ``t psi(u*) = -1``; ``1/u*`` is a natural length scale."""
    lo, hi = 0.0, 1.0
    while t * evaluate(model, hi) > -1.0:
        lo, hi = hi, hi * 2.0
        if hi > CUTOFF_CAP:
            raise TailNotDecayedError(f"psi does not reach -1/t for {model} at t = {t}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if t * evaluate(model, mid) > -1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Pointwise inversion
# ---------------------------------------------------------------------------


def _quadrature_nodes(model: CharacteristicExponent, t: float, x_abs_max: float):
    """Gauss-Legendre nodes and weights on ``[0, U]``.

    Panels are graded geometrically toward ``u = 0`` (where ``|u|^alpha``
    exponents are not smooth) and no wider than two oscillation periods of
    ``cos(x u)``.
    """
    cutoff = cutoff_frequency(model, t)
    u_star = min(frequency_scale(model, t), cutoff)
    graded = u_star * 2.0 ** -np.arange(40, -1, -1, dtype=float)
    width = min(cutoff / 64.0, u_star / 4.0 if u_star < cutoff else cutoff / 64.0)
    if x_abs_max > 0:
        width = min(width, 4.0 * math.pi / x_abs_max)
    n_uniform = max(1, int(math.ceil((cutoff - u_star) / width)))
    uniform = np.linspace(u_star, cutoff, n_uniform + 1)[1:]
    # graded panels wider than the oscillation width are split evenly
    pieces = [np.array([0.0])]
    for lo, hi in zip(graded[:-1], graded[1:]):
        k = max(1, int(math.ceil((hi - lo) / width)))
        pieces.append(np.linspace(lo, hi, k + 1)[:-1] if k > 1 else np.array([lo]))
    edges = np.concatenate(pieces + [graded[-1:], uniform])
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
    weights = half[:, None] * _GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def _raw_points(model: CharacteristicExponent, t: float, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape)
    ax = np.abs(x)
    order = np.argsort(ax)
    ax_sorted = ax[order]
    # group points whose magnitude is within a factor of two so that the
    # panel width is set by a comparable |x|
    start = 0
    while start < ax_sorted.size:
        top = max(2.0 * ax_sorted[start], 1.0)
        stop = int(np.searchsorted(ax_sorted, top, side="right"))
        stop = max(stop, start + 1)
        grp = ax_sorted[start:stop]
        nodes, weights = _quadrature_nodes(model, t, float(grp[-1]))
        wg = weights * np.exp(t * evaluate(model, nodes))
        keep = wg > 0
        nodes, wg = nodes[keep], wg[keep]
        chunk = max(1, int(4_000_000 // max(nodes.size, 1)))
        vals = np.empty(grp.size)
        for i in range(0, grp.size, chunk):
            vals[i : i + chunk] = np.cos(np.outer(grp[i : i + chunk], nodes)) @ wg
        out[order[start:stop]] = vals / math.pi
        start = stop
    return out


def _clamp(values: np.ndarray, peak: float, what: str) -> np.ndarray:
    neg = values < 0
    if np.any(neg):
        worst = float(-values[neg].min())
        if worst > CLAMP_REL * peak:
            raise AccuracyError(f"{what}: negative lobe {-worst:.3e} exceeds {CLAMP_REL:g} x peak {peak:.3e}")
        values = np.where(neg, 0.0, values)
    return values


def density_points(model: CharacteristicExponent, t: float, x) -> np.ndarray:
    """Vectorized pointwise ``f_t(x)`` by panel quadrature."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    vals = _raw_points(model, t, flat)
    peak = mass_at_zero(model, t)
    return _clamp(vals, peak, f"density of {model} at t={t}").reshape(x.shape)


def density_point(model: CharacteristicExponent, t: float, x: float) -> float:
    """``f_t(x)`` at a single point, nonnegative."""
    return float(density_points(model, t, np.array([x]))[0])


_peak_lock = threading.Lock()
_peak_cache: dict[tuple[CharacteristicExponent, float], float] = {}


def mass_at_zero(model: CharacteristicExponent, t: float) -> float:
    """``f_t(0) = (1/2pi) ||exp(t psi)||_L1``, strictly positive."""
    key = (model, float(t))
    with _peak_lock:
        hit = _peak_cache.get(key)
    if hit is not None:
        return hit
    value = float(_raw_points(model, t, np.zeros(1))[0])
    if not value > 0:
        raise AccuracyError(f"f_t(0) is not positive for {model} at t={t}")
    with _peak_lock:
        _peak_cache[key] = value
    return value


def denominator_floor(model: CharacteristicExponent, t: float) -> float:
    """Smallest ``f_t(x)`` accepted as a ratio denominator.

    Pointwise inversion carries absolute roundoff near ``1e-16 f_t(0)``, so
    a value below ``RESOLUTION_RTOL f_t(0)`` cannot be told apart from zero.
    """
    return max(DENSITY_FLOOR, RESOLUTION_RTOL * mass_at_zero(model, t))


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InversionPlan:
    """Uniform frequency grid ``u_k = k du`` on ``[0, cutoff]`` and an output window.

    The lattice spacing is ``dx = pi / cutoff`` and the inversion period is
    ``2 pi / du``; ``x_max`` crops the output to ``[-x_max, x_max]``.
    """

    cutoff: float
    du: float
    x_max: float

    def __post_init__(self) -> None:
        if not (self.cutoff > 0 and self.du > 0 and self.x_max > 0):
            raise ValueError("plan fields must be positive")
        k = self.cutoff / self.du
        if abs(k - round(k)) > 1e-6 * max(1.0, k):
            raise ValueError("cutoff must be an integer multiple of du")
        if self.x_max > self.half_period * (1 + 1e-12):
            raise ValueError("x_max exceeds the half period pi/du")
        if self.n_fft > MAX_FFT_POINTS:
            raise ValueError(f"plan needs {self.n_fft} FFT points, above the cap {MAX_FFT_POINTS}")

    @property
    def n_freq(self) -> int:
        return int(round(self.cutoff / self.du)) + 1

    @property
    def n_fft(self) -> int:
        """Length ``N`` of the equivalent complex FFT, ``dx * du * N = 2 pi``."""
        return 2 * (self.n_freq - 1)

    @property
    def dx(self) -> float:
        return math.pi / self.cutoff

    @property
    def half_period(self) -> float:
        return math.pi / self.du

    @property
    def n_half(self) -> int:
        """Number of positive lattice nodes kept in the output window."""
        return min(int(math.floor(self.x_max / self.dx + 1e-9)), self.n_freq - 1)

    @classmethod
    def from_lattice(cls, dx: float, half_period: float, x_max: float | None = None) -> InversionPlan:
        """Plan with spacing ``dx`` whose half period is at least ``half_period``.

        The node count is rounded up to a length the FFT handles quickly.
        """
        n = scipy.fft.next_fast_len(int(math.ceil(half_period / dx - 1e-9)))
        cutoff = math.pi / dx
        du = cutoff / n
        return cls(cutoff, du, math.pi / du if x_max is None else min(x_max, math.pi / du))


@dataclass(frozen=True, eq=False)
class DensityTable:
    """``f_t`` tabulated on the symmetric lattice ``x_j = j dx``, ``|j| <= n``."""

    t: float
    x: np.ndarray
    values: np.ndarray
    dx: float
    plan: InversionPlan | None = None
    model: CharacteristicExponent | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.x.flags.writeable = False
        self.values.flags.writeable = False

    def mass(self) -> float:
        return float(np.trapezoid(self.values, dx=self.dx))

    @property
    def peak(self) -> float:
        return float(self.values[self.values.size // 2])

    @cached_property
    def _coeffs(self) -> np.ndarray:
        from scipy.ndimage import spline_filter1d

        c = spline_filter1d(self.values, order=3, mode="mirror")
        return np.concatenate((c[2:0:-1], c, c[-2:-4:-1]))

    def evaluate(self, x) -> np.ndarray:
        """Cubic B-spline interpolation of the table; zero outside it."""
        from ._kernels import spline_eval

        x = np.ascontiguousarray(x, dtype=float)
        return spline_eval(self._coeffs, float(self.x[0]), self.dx, self.x.size, x)

    def quantile_half_range(self, q: float = 0.75) -> float:
        """Half-range ``x_q`` with ``P(|X| <= x_q) = 2q - 1``; ``q = 0.75`` gives the interquartile half-range."""
        half = self.values[self.values.size // 2 :]
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (half[1:] + half[:-1]) * self.dx)))
        total = cum[-1]
        target = (2.0 * q - 1.0) * total
        return float(np.interp(target, cum, self.x[self.values.size // 2 :]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "f"])
            for xi, fi in zip(self.x, self.values):
                w.writerow([repr(float(xi)), repr(float(fi))])


def _phi_on_grid(model: CharacteristicExponent, t: float, plan: InversionPlan) -> np.ndarray:
    u = np.arange(plan.n_freq) * plan.du
    return np.exp(t * evaluate(model, u))


def _lattice_values(model: CharacteristicExponent, t: float, plan: InversionPlan) -> np.ndarray:
    """Nonnegative-lattice values ``f_t(j dx)``, ``j = 0..n_freq-1`` (full half period)."""
    g = _phi_on_grid(model, t, plan)
    if g.size < 2:
        raise ValueError("plan has fewer than two frequency nodes")
    return scipy.fft.dct(g, type=1) * (plan.du / (2.0 * math.pi))


def density_grid(model: CharacteristicExponent, t: float, plan: InversionPlan) -> DensityTable:
    """``f_t`` on the plan's lattice, cropped to ``[-x_max, x_max]``.

    The transform is a cosine transform, so the table is exactly symmetric.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    half = _lattice_values(model, t, plan)
    n = plan.n_half
    half = half[: n + 1]
    peak = float(half[0])
    half = _clamp(half, max(peak, DENSITY_FLOOR), f"table of {model} at t={t}")
    values = np.concatenate((half[:0:-1], half))
    x = np.arange(-n, n + 1) * plan.dx
    return DensityTable(float(t), x, values, plan.dx, plan, model)


def shifted_lattice_values(model: CharacteristicExponent, t: float, plan: InversionPlan, shift: float) -> np.ndarray:
    """``f_t(j dx + shift)`` for ``j = -(n_freq-1) .. n_freq-1`` over one full period.

    The last node duplicates the first one periodically. Negative ringing
    below the clamp threshold is zeroed.
    """
    return shifted_lattice_mixture(model, [t], [1.0], plan, shift)


def shifted_lattice_mixture(model: CharacteristicExponent, times, weights, plan: InversionPlan, shift: float) -> np.ndarray:
    """``sum_i w_i f_{t_i}(j dx + shift)`` on the lattice of :func:`shifted_lattice_values`.

    The transform is linear, so the spectra are summed and inverted once.
    Weights must be nonnegative.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if np.any(times <= 0) or np.any(weights < 0):
        raise ValueError("times must be positive and weights nonnegative")
    u = np.arange(plan.n_freq) * plan.du
    psi = evaluate(model, u)
    g = np.zeros(plan.n_freq)
    for t, w in zip(times, weights):
        if w > 0:
            g += w * np.exp(t * psi)
    m = plan.n_fft
    k = np.arange(m)
    kk = np.where(k <= m // 2, k, k - m)
    spec = np.empty(m, dtype=complex)
    spec[:] = g[np.abs(kk)] * np.exp(-1j * kk * plan.du * shift)
    # the Nyquist bin stands for both +U and -U
    spec[m // 2] = g[-1] * math.cos(plan.cutoff * shift)
    vals = np.real(scipy.fft.fft(spec)) * (plan.du / (2.0 * math.pi))
    vals = np.fft.fftshift(vals)  # index 0 is j = -m/2
    vals = np.concatenate((vals, vals[:1]))
    peak = sum(w * mass_at_zero(model, t) for t, w in zip(times, weights) if w > 0)
    return _clamp(vals, max(peak, DENSITY_FLOOR), f"shifted table of {model} at t={times.tolist()}")


def plan_for(
    model: CharacteristicExponent,
    t: float,
    x_max: float | None = None,
    dx: float | None = None,
    alias_tol: float = 1e-10,
    mass_tol: float | None = None,
) -> InversionPlan:
    """Choose an :class:`InversionPlan` for ``f_t``.

    The spacing resolves the cutoff frequency (and ``dx`` if finer). The
    period is doubled until the aliased value at the half period is below
    ``alias_tol`` and the window ``[-x_max, x_max]`` sits inside the inner
    half of the period. With ``x_max=None`` the window is the inner half,
    widened further until the mass outside it is below ``mass_tol``.
    """
    spacing = math.pi / cutoff_frequency(model, t)
    if dx is not None:
        spacing = min(spacing, dx)
    scale = 1.0 / frequency_scale(model, t)
    half_period = max(64.0 * scale, 2.0 * x_max if x_max else 0.0, 16.0 * spacing)
    while True:
        plan = InversionPlan.from_lattice(spacing, half_period)
        vals = _lattice_values(model, t, plan)
        edge = abs(float(vals[-1]))
        ok = edge <= alias_tol
        if ok and x_max is None and mass_tol is not None:
            inner = vals[: (vals.size - 1) // 2 + 1]
            inner_mass = spacing * (2.0 * inner.sum() - inner[0] - inner[-1])
            ok = 1.0 - inner_mass <= mass_tol
        if ok:
            break
        half_period *= 2.0
        if 2 * half_period / spacing > MAX_FFT_POINTS:
            raise AccuracyError(f"no plan within {MAX_FFT_POINTS} points meets the tolerances for {model} at t={t}")
    window = x_max if x_max is not None else 0.5 * plan.half_period
    return InversionPlan(plan.cutoff, plan.du, window)


class DensityCache:
    """Thread-safe memo of tables keyed by ``(model, t, plan, shift)``."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._tables: dict = {}

    def __len__(self) -> int:
        return len(self._tables)

    def clear(self) -> None:
        with self._lock:
            self._tables.clear()

    def _get(self, key, build):
        with self._lock:
            hit = self._tables.get(key)
        if hit is not None:
            return hit
        value = build()
        with self._lock:
            return self._tables.setdefault(key, value)

    def table(self, model: CharacteristicExponent, t: float, plan: InversionPlan) -> DensityTable:
        return self._get((model, float(t), plan, None), lambda: density_grid(model, t, plan))

    def shifted(self, model: CharacteristicExponent, t: float, plan: InversionPlan, shift: float) -> np.ndarray:
        return self._get(
            (model, float(t), plan, float(shift)), lambda: shifted_lattice_values(model, t, plan, shift)
        )


DEFAULT_CACHE = DensityCache()


def convolve(a: DensityTable, b: DensityTable) -> DensityTable:
    """Discrete convolution ``dx * sum_j a(x_j) b(x - x_j)`` on the common grid."""
    if a.x.shape != b.x.shape or not math.isclose(a.dx, b.dx, rel_tol=1e-12) or not np.allclose(a.x, b.x, rtol=0, atol=1e-9 * a.dx):
        raise GridMismatchError("tables must share the same grid")
    vals = fftconvolve(a.values, b.values, mode="same") * a.dx
    vals = 0.5 * (vals + vals[::-1])
    peak = float(vals.max())
    vals = _clamp(np.where(np.abs(vals) < 1e-15 * peak, 0.0, vals), peak, "convolution")
    return DensityTable(a.t + b.t, a.x, vals, a.dx, None, a.model if a.model == b.model else None)


@lru_cache(maxsize=256)
def common_plan(
    model: CharacteristicExponent,
    times: tuple[float, ...],
    reach: float = 0.0,
    alias_rtol: float = 1e-10,
    oversample: float = 1.0,
) -> InversionPlan:
    """One lattice plan serving ``f_t`` for every ``t`` in ``times``.

    The spacing resolves the smallest time, the half period exceeds
    ``2 * reach`` and is doubled until every table's aliased edge value is
    below ``alias_rtol`` times its peak.
    """
    spacing = min(math.pi / cutoff_frequency(model, t) for t in times) / oversample
    half_period = max(max(64.0 / frequency_scale(model, t) for t in times), 2.0 * reach, 16.0 * spacing)
    while True:
        plan = InversionPlan.from_lattice(spacing, half_period)
        ok = True
        for t in times:
            vals = _lattice_values(model, t, plan)
            if abs(float(vals[-1])) > alias_rtol * max(float(vals[0]), DENSITY_FLOOR):
                ok = False
                break
        if ok:
            return plan
        half_period *= 2.0
        if 2 * half_period / spacing > MAX_FFT_POINTS:
            raise AccuracyError(f"no common plan within {MAX_FFT_POINTS} points for {model} at times {times}")

"""Characteristic exponents of symmetric Lévy models and the law of a random length.

Every model is given directly by its characteristic exponent ``psi`` with
``E[exp(i u X_t)] = exp(t psi(u))``. Because all models are symmetric, ``psi``
is real, even and non-positive.

The length law ``P_tau`` is a mixture of finitely many atoms and an optional
piecewise-linear density on a grid of strictly positive times.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import ParameterDomainError

MODEL_IDS = (
    "stable",
    "tempered_stable",
    "modified_tempered_stable",
    "nig",
    "gaussian_oracle",
    "cauchy_oracle",
)

# Parameter names accepted per model, in canonical order.
_PARAM_NAMES = {
    "stable": ("alpha",),
    "tempered_stable": ("alpha", "c", "lambda"),
    "modified_tempered_stable": ("alpha",),
    "nig": (),
    "gaussian_oracle": ("sigma",),
    "cauchy_oracle": (),
}

# Short names used on the command line.
_ALIASES = {
    "stable": "stable",
    "tempered": "tempered_stable",
    "tempered_stable": "tempered_stable",
    "ts": "tempered_stable",
    "mts": "modified_tempered_stable",
    "modified_tempered_stable": "modified_tempered_stable",
    "nig": "nig",
    "gaussian": "gaussian_oracle",
    "gaussian_oracle": "gaussian_oracle",
    "cauchy": "cauchy_oracle",
    "cauchy_oracle": "cauchy_oracle",
}

_SHORT_NAMES = {
    "stable": "stable",
    "tempered_stable": "tempered",
    "modified_tempered_stable": "mts",
    "nig": "nig",
    "gaussian_oracle": "gaussian",
    "cauchy_oracle": "cauchy",
}


def _check_alpha(alpha: float, allowed: str) -> None:
    if not math.isfinite(alpha):
        raise ParameterDomainError(f"alpha must be finite, got {alpha}")
    if allowed == "stable":
        ok = 0.0 < alpha < 2.0 and alpha != 1.0
        msg = "alpha must lie in (0,1) or (1,2)"
    else:
        ok = 0.0 < alpha < 1.0
        msg = "alpha must lie in (0,1)"
    if not ok:
        raise ParameterDomainError(f"{msg}, got {alpha}")


@dataclass(frozen=True)
class CharacteristicExponent:
    """A symmetric Lévy model identified by ``model_id`` and its parameters.

    ``params`` is a tuple of ``(name, value)`` pairs so instances are hashable
    and can key density caches. Use the named constructors or
    :func:`parse_model` rather than building instances by hand.
    """

    model_id: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.model_id not in MODEL_IDS:
            raise ParameterDomainError(f"unknown model {self.model_id!r}")
        names = tuple(name for name, _ in self.params)
        if names != _PARAM_NAMES[self.model_id]:
            raise ParameterDomainError(
                f"{self.model_id} expects parameters {_PARAM_NAMES[self.model_id]}, got {names}"
            )
        p = dict(self.params)
        if self.model_id == "stable":
            _check_alpha(p["alpha"], "stable")
        elif self.model_id == "tempered_stable":
            _check_alpha(p["alpha"], "stable")
            if not (p["c"] > 0 and p["lambda"] > 0):
                raise ParameterDomainError("tempered stable needs c > 0 and lambda > 0")
        elif self.model_id == "modified_tempered_stable":
            _check_alpha(p["alpha"], "mts")
        elif self.model_id == "gaussian_oracle":
            if not p["sigma"] > 0:
                raise ParameterDomainError("sigma must be positive")

    # -- named constructors ------------------------------------------------
    @classmethod
    def stable(cls, alpha: float) -> CharacteristicExponent:
        return cls("stable", (("alpha", float(alpha)),))

    @classmethod
    def tempered_stable(cls, alpha: float, c: float = 1.0, lam: float = 1.0) -> CharacteristicExponent:
        return cls("tempered_stable", (("alpha", float(alpha)), ("c", float(c)), ("lambda", float(lam))))

    @classmethod
    def modified_tempered_stable(cls, alpha: float) -> CharacteristicExponent:
        return cls("modified_tempered_stable", (("alpha", float(alpha)),))

    @classmethod
    def nig(cls) -> CharacteristicExponent:
        return cls("nig")

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> CharacteristicExponent:
        return cls("gaussian_oracle", (("sigma", float(sigma)),))

    @classmethod
    def cauchy(cls) -> CharacteristicExponent:
        return cls("cauchy_oracle")

    @property
    def param_dict(self) -> dict[str, float]:
        return dict(self.params)

    def __call__(self, u):
        return evaluate(self, u)

    def spec_string(self) -> str:
        """Inverse of :func:`parse_model`."""
        name = _SHORT_NAMES[self.model_id]
        if not self.params:
            return name
        body = ",".join(f"{k}={v!r}" for k, v in self.params)
        return f"{name}:{body}"

    def __str__(self) -> str:
        return self.spec_string()

    @property
    def self_similarity_index(self) -> float | None:
        """``alpha`` with ``f_t(x) = t^(-1/alpha) f_1(x t^(-1/alpha))``, or None."""
        if self.model_id == "stable":
            return dict(self.params)["alpha"]
        return {"cauchy_oracle": 1.0, "gaussian_oracle": 2.0}.get(self.model_id)


def evaluate(model: CharacteristicExponent, u):
    """Return ``psi(u)`` for scalar or array ``u``.

    The tempered-stable bracket ``(1-iu/l)^a + (1+iu/l)^a - 2`` is evaluated in
    polar form ``2 (1+v^2)^(a/2) cos(a atan v) - 2`` with ``v = u/l``, which is
    real by conjugate symmetry.
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterDomainError("u must be finite")
    p = model.param_dict
    mid = model.model_id
    if mid == "stable":
        out = -np.abs(arr) ** p["alpha"]
    elif mid == "tempered_stable":
        a, c, lam = p["alpha"], p["c"], p["lambda"]
        v = np.abs(arr) / lam
        # (1+v^2)^(a/2) cos(a atan v) - 1, written to keep precision near v = 0
        log_mod = 0.5 * a * np.log1p(v * v)
        theta = a * np.arctan(v)
        bracket = 2.0 * (np.expm1(log_mod) * np.cos(theta) - 2.0 * np.sin(0.5 * theta) ** 2)
        out = gamma_fn(-a) * c * lam**a * bracket
    elif mid == "modified_tempered_stable":
        a = p["alpha"]
        coef = 2.0 ** (-a - 0.5) * gamma_fn(-a) / math.sqrt(math.pi)
        out = coef * np.expm1(a * np.log1p(arr * arr))
    elif mid == "nig":
        # 1 - sqrt(1+u^2) without cancellation at small u
        out = -(arr * arr) / (1.0 + np.sqrt(1.0 + arr * arr))
    elif mid == "gaussian_oracle":
        out = -0.5 * p["sigma"] ** 2 * arr * arr
    else:  # cauchy_oracle
        out = -np.abs(arr)
    out = np.minimum(out, 0.0)
    if np.ndim(u) == 0:
        return float(out)
    return out


def parse_model(text: str) -> CharacteristicExponent:
    """Parse a model spec such as ``"stable:alpha=1.5"`` or ``"tempered:alpha=0.5,c=1,lambda=1"``."""
    text = text.strip()
    name, _, body = text.partition(":")
    key = _ALIASES.get(name.strip().lower())
    if key is None:
        raise ParameterDomainError(f"unknown model {name!r}; choose from {sorted(set(_ALIASES))}")
    given: dict[str, float] = {}
    if body.strip():
        for item in body.split(","):
            k, eq, v = item.partition("=")
            if not eq:
                raise ParameterDomainError(f"malformed parameter {item!r} in {text!r}")
            k = k.strip().lower()
            if k in ("lam", "l"):
                k = "lambda"
            try:
                given[k] = float(v)
            except ValueError as exc:
                raise ParameterDomainError(f"parameter {k} is not a number: {v!r}") from exc
    names = _PARAM_NAMES[key]
    unknown = set(given) - set(names)
    if unknown:
        raise ParameterDomainError(f"{key} does not take parameters {sorted(unknown)}")
    defaults = {"c": 1.0, "lambda": 1.0, "sigma": 1.0}
    params = []
    for n in names:
        if n in given:
            params.append((n, given[n]))
        elif n in defaults:
            params.append((n, defaults[n]))
        else:
            raise ParameterDomainError(f"{key} requires parameter {n}")
    return CharacteristicExponent(key, tuple(params))


# ---------------------------------------------------------------------------
# Length law
# ---------------------------------------------------------------------------

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LengthLaw:
    """Law of the random length: atoms ``(r_i, p_i)`` plus a gridded density.

    The density part is piecewise linear between ``grid`` nodes and zero
    outside ``[grid[0], grid[-1]]``; its mass is the trapezoid integral.
    """

    atom_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    atom_probs: np.ndarray = field(default_factory=lambda: np.empty(0))
    grid: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self) -> None:
        r = np.asarray(self.atom_times, dtype=float).reshape(-1)
        p = np.asarray(self.atom_probs, dtype=float).reshape(-1)
        if r.shape != p.shape:
            raise ParameterDomainError("atom times and probabilities differ in length")
        if np.any(~np.isfinite(r)) or np.any(r <= 0):
            raise ParameterDomainError("atom locations must be finite and strictly positive")
        if np.any(np.diff(r) <= 0):
            raise ParameterDomainError("atom locations must be strictly increasing")
        if np.any(p < 0) or np.any(~np.isfinite(p)):
            raise ParameterDomainError("atom probabilities must be nonnegative")
        object.__setattr__(self, "atom_times", r)
        object.__setattr__(self, "atom_probs", p)
        r.flags.writeable = False
        p.flags.writeable = False
        if (self.grid is None) != (self.values is None):
            raise ParameterDomainError("density grid and values must be given together")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float).reshape(-1)
            v = np.asarray(self.values, dtype=float).reshape(-1)
            if g.shape != v.shape or g.size < 2:
                raise ParameterDomainError("density part needs at least two grid nodes and matching values")
            if np.any(~np.isfinite(g)) or np.any(g <= 0):
                raise ParameterDomainError("density grid must be finite and strictly positive")
            if np.any(np.diff(g) <= 0):
                raise ParameterDomainError("density grid must be strictly increasing")
            if np.any(v < 0) or np.any(~np.isfinite(v)):
                raise ParameterDomainError("density values must be nonnegative")
            g.flags.writeable = False
            v.flags.writeable = False
            object.__setattr__(self, "grid", g)
            object.__setattr__(self, "values", v)
        total = self.total_mass()
        if abs(total - 1.0) > MASS_TOL:
            raise ParameterDomainError(f"length law has total mass {total!r}, expected 1")

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_atoms(cls, atoms) -> LengthLaw:
        """Build from ``[(r, p), ...]``; atoms are sorted by location."""
        pairs = sorted((float(r), float(p)) for r, p in atoms)
        return cls(np.array([r for r, _ in pairs]), np.array([p for _, p in pairs]))

    @classmethod
    def point_mass(cls, r: float) -> LengthLaw:
        return cls(np.array([float(r)]), np.array([1.0]))

    @classmethod
    def uniform(cls, a: float, b: float, n: int = 2) -> LengthLaw:
        """Uniform law on ``[a, b]`` with ``n`` equally spaced density nodes.

        Integrals against the density part are trapezoid sums on its nodes,
        so ``n`` sets how finely a reweighted posterior is resolved.
        """
        if n < 2:
            raise ParameterDomainError("a density part needs at least two nodes")
        return cls(grid=np.linspace(a, b, n), values=np.full(n, 1.0 / (b - a)))

    @classmethod
    def normalized(cls, atom_times=(), atom_probs=(), grid=None, values=None) -> LengthLaw:
        """Build a law from unnormalized weights, rescaling to total mass one."""
        p = np.asarray(atom_probs, dtype=float)
        mass = float(p.sum())
        if grid is not None:
            mass += float(np.trapezoid(values, grid))
        if not mass > 0:
            raise ParameterDomainError("cannot normalize a law with zero mass")
        p = p / mass
        v = None if values is None else np.asarray(values, dtype=float) / mass
        return cls(atom_times, p, grid, v)

    @classmethod
    def from_dict(cls, data: dict) -> LengthLaw:
        atoms = data.get("atoms") or []
        times = [float(a["r"]) for a in atoms]
        probs = [float(a["p"]) for a in atoms]
        order = np.argsort(times)
        dens = data.get("density")
        grid = values = None
        if dens:
            grid = np.asarray(dens["grid"], dtype=float)
            values = np.asarray(dens["values"], dtype=float)
        return cls(np.asarray(times)[order], np.asarray(probs)[order], grid, values)

    @classmethod
    def from_json(cls, path: str | Path) -> LengthLaw:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out: dict = {"atoms": [{"r": float(r), "p": float(p)} for r, p in zip(self.atom_times, self.atom_probs)]}
        if self.grid is not None:
            out["density"] = {"grid": self.grid.tolist(), "values": self.values.tolist()}
        return out

    # -- basic properties --------------------------------------------------
    @property
    def has_density(self) -> bool:
        return self.grid is not None

    def total_mass(self) -> float:
        mass = float(np.sum(self.atom_probs))
        if self.grid is not None:
            mass += float(np.trapezoid(self.values, self.grid))
        return mass

    def support_nodes(self) -> np.ndarray:
        """All atom locations and density grid nodes, sorted."""
        parts = [self.atom_times]
        if self.grid is not None:
            parts.append(self.grid)
        return np.unique(np.concatenate(parts))

    def support_max(self) -> float:
        return float(self.support_nodes()[-1])

    def density_at(self, r) -> np.ndarray:
        """Piecewise-linear density of the absolutely continuous part."""
        r = np.asarray(r, dtype=float)
        if self.grid is None:
            return np.zeros_like(r)
        return np.interp(r, self.grid, self.values, left=0.0, right=0.0)

    def reweight(self, atom_weights, node_weights) -> LengthLaw:
        """Multiply atoms and density nodes by weights and renormalize."""
        p = self.atom_probs * np.asarray(atom_weights, dtype=float)
        v = None if self.grid is None else self.values * np.asarray(node_weights, dtype=float)
        return LengthLaw.normalized(self.atom_times, p, self.grid, v)

    def restrict(self, a: float, b: float = math.inf) -> tuple[np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
        """Unnormalized pieces of the law on ``(a, b]``.

        Returns ``(atom_times, atom_probs, grid, values)`` where the density
        grid is clipped to ``[a, b]`` with interpolated endpoint values, or
        ``None`` when nothing of the density part remains.
        """
        keep = (self.atom_times > a) & (self.atom_times <= b)
        at, ap = self.atom_times[keep], self.atom_probs[keep]
        if self.grid is None:
            return at, ap, None, None
        lo, hi = max(a, self.grid[0]), min(b, self.grid[-1])
        if not lo < hi:
            return at, ap, None, None
        inner = (self.grid > lo) & (self.grid < hi)
        g = np.concatenate(([lo], self.grid[inner], [hi]))
        v = np.interp(g, self.grid, self.values)
        return at, ap, g, v


def _call_vectorized(g: Callable, r: np.ndarray) -> np.ndarray:
    out = g(r)
    out = np.asarray(out, dtype=float)
    if out.shape != r.shape:
        out = np.broadcast_to(out, r.shape)
    return out


def integrate(law: LengthLaw, g: Callable | None = None, a: float = 0.0, b: float = math.inf) -> float:
    """``int_(a,b] g(r) P_tau(dr)``: exact atom sum plus trapezoid rule on the density grid.

    ``g`` must accept a numpy array of times; ``None`` means ``g = 1``.
    Atoms at ``a`` are excluded and atoms at ``b`` included.
    """
    at, ap, grid, values = law.restrict(a, b)
    total = 0.0
    if at.size:
        w = ap if g is None else ap * _call_vectorized(g, at)
        total += float(np.sum(w))
    if grid is not None:
        f = values if g is None else values * _call_vectorized(g, grid)
        total += float(np.trapezoid(f, grid))
    return total


def cdf(law: LengthLaw, t: float) -> float:
    """``F(t) = P(tau <= t)``."""
    if t <= 0:
        return 0.0
    return min(1.0, integrate(law, None, 0.0, t))


def _cdf_tables(law: LengthLaw):
    """Breakpoints with the CDF just before and at each breakpoint."""
    nodes = law.support_nodes()
    atom_mass = np.zeros(nodes.size)
    if law.atom_times.size:
        atom_mass[np.searchsorted(nodes, law.atom_times)] = law.atom_probs
    dens = law.density_at(nodes)
    seg = np.zeros(nodes.size)
    if nodes.size > 1:
        seg[1:] = 0.5 * (dens[1:] + dens[:-1]) * np.diff(nodes)
    # density is zero outside the grid, so a segment straddling the grid edge
    # must use the one-sided value; interp already returns 0 outside.
    if law.grid is not None and nodes.size > 1:
        inside = (nodes[:-1] >= law.grid[0]) & (nodes[1:] <= law.grid[-1])
        seg[1:] = np.where(inside, seg[1:], 0.0)
    before = np.cumsum(seg) + np.concatenate(([0.0], np.cumsum(atom_mass)[:-1]))
    at = before + atom_mass
    return nodes, dens, before, at


def sample_tau(law: LengthLaw, rng: np.random.Generator, size: int | None = None):
    """Draw from ``P_tau`` by inverting its CDF.

    Within a density segment the CDF is quadratic (the density is linear),
    and it is inverted exactly.
    """
    nodes, dens, before, at = _cdf_tables(law)
    n = 1 if size is None else int(size)
    u = rng.random(n) * at[-1]
    idx = np.searchsorted(at, u, side="left")
    idx = np.minimum(idx, nodes.size - 1)
    out = nodes[idx].copy()
    # u below F(b-) lands in the density segment ending at node idx
    in_seg = (u < before[idx]) & (idx > 0)
    if np.any(in_seg):
        k = idx[in_seg]
        x0, x1 = nodes[k - 1], nodes[k]
        d0, d1 = dens[k - 1], dens[k]
        # start of segment: F(x0) = at[k-1]
        m = u[in_seg] - at[k - 1]
        h = x1 - x0
        slope = (d1 - d0) / h
        # solve d0 s + slope s^2 / 2 = m for s in [0, h]
        disc = np.sqrt(np.maximum(d0 * d0 + 2.0 * slope * m, 0.0))
        denom = d0 + disc
        s = np.divide(2.0 * m, denom, out=np.zeros_like(m), where=denom > 0)
        out[in_seg] = x0 + np.clip(s, 0.0, h)
    if size is None:
        return float(out[0])
    return out

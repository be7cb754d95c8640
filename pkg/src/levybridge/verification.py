"""Numerical self-checks, one report per invariant.

Every check returns a :class:`CheckReport`; a check that raises is reported
as failed with ``observed = inf`` rather than propagating. The set of check
ids is fixed by :data:`COVERAGE_MANIFEST`.
"""
from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from . import bridge_random as br
from .bridge_fixed import BridgeSpec, compose_kernels, kernel_on_lattice, sample_bridge_paths
from .density import (
    TAIL_TOL,
    InversionPlan,
    convolve,
    cutoff_frequency,
    density_grid,
    density_point,
    density_points,
    plan_for,
)
from .models import CharacteristicExponent, LengthLaw, cdf, evaluate, integrate

COVERAGE_MANIFEST: dict[str, tuple[str, str]] = {
    "levy.symmetry_nonpositive": ("levy_models", "psi(u) = psi(-u) exactly and psi(u) <= 0 on u = -10..10"),
    "levy.tail_decay": ("levy_models", "exp(t psi(U)) < 1e-16 at a finite doubling-search cutoff, t in {0.25, 1, 4}"),
    "levy.integrate_additive": ("levy_models", "integrate is additive over disjoint intervals and has total mass 1"),
    "levy.cdf_monotone": ("levy_models", "cdf is nondecreasing and right-continuous at atoms"),
    "density.oracle_agreement": ("density_engine", "Cauchy and Gaussian closed forms within 1e-8 on [-10, 10]"),
    "density.normalization": ("density_engine", "|mass - 1| <= 1e-6 for the four catalog models, t in {0.25, 1, 4}"),
    "density.chapman_kolmogorov": ("density_engine", "convolve(f_s, f_t) vs f_(s+t) within 1e-5"),
    "density.asymptotic_ratio": ("density_engine", "stable(1.5): |f_(r-1)(0)/f_r(0) - 1| <= 0.01 at r=100 and below r=10"),
    "density.small_time": ("density_engine", "stable(1.5): f_t(1) finite and increasing over t in {1e-3, 1e-2, 1e-1}"),
    "bridge.kernel_normalization": ("bridge_fixed", "integral of the bridge kernel within 1e-6 of 1"),
    "bridge.kernel_composition": ("bridge_fixed", "t->s->u kernel composition equals t->u within 1e-4"),
    "bridge.endpoint_concentration": ("bridge_fixed", "Gaussian kernel variance at r - delta within 5% of delta (r - delta) / r"),
    "bridge.sampler_ks": ("bridge_fixed", "KS test of sampled one-step marginals vs the kernel CDF, N = 1e4, level 0.01"),
    "rlb.mixed_normalization": ("bridge_random", "atom + continuous mass of the mixed transition within 1e-5 of 1"),
    "rlb.markov_composition": ("bridge_random", "t->s->u mixed transitions reproduce t->u (1e-4 density, 1e-5 atom)"),
    "rlb.posterior_bruteforce": ("bridge_random", "tau posterior equals brute-force Bayes with Cauchy closed forms, rel. 1e-10"),
    "rlb.stopping_time": ("bridge_random", "{value = z} equals {tau <= t} at every node of every sampled path"),
    "rlb.filter_consistency": ("bridge_random", "mean posterior P(tau = 1) matches the empirical frequency within 3 sigma"),
    "rlb.right_continuity": ("bridge_random", "conditional expectation gaps shrink along a smooth path as delta -> 0"),
    "rlb.weak_continuity": ("bridge_random", "one-time marginal density is Lipschitz in z on [0, 0.1]"),
}

CATALOG = (
    CharacteristicExponent.cauchy(),
    CharacteristicExponent.gaussian(1.0),
    CharacteristicExponent.stable(1.5),
    CharacteristicExponent.tempered_stable(0.5, 1.0, 1.0),
    CharacteristicExponent.modified_tempered_stable(0.75),
    CharacteristicExponent.nig(),
)
FOUR_MODELS = CATALOG[2:]
TWO_ATOMS = LengthLaw.from_atoms([(1.0, 0.5), (2.0, 0.5)])
# (r, z, t, x, u) and an intermediate time s for composition
BRIDGE_MATRIX = ((1.0, 0.0, 0.0, 0.0, 0.5), (2.0, 0.5, 0.5, -1.0, 1.5), (1.0, 1.0, 0.25, 2.0, 0.5))


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check; ``status`` is ``"pass"`` iff ``observed <= threshold``."""

    check_id: str
    status: str
    observed: float
    threshold: float
    runtime: float
    seed: int
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self, timings: bool = True) -> dict:
        d = asdict(self)
        if not timings:
            d.pop("runtime")
        for key in ("observed", "threshold"):
            if not math.isfinite(d[key]):
                d[key] = repr(d[key])
        return d


@dataclass
class VerificationReport:
    seed: int
    checks: list[CheckReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def sorted(self) -> list[CheckReport]:
        return sorted(self.checks, key=lambda c: c.check_id)

    def to_json(self, timings: bool = True) -> str:
        body = {
            "seed": self.seed,
            "passed": self.passed,
            "n_checks": len(self.checks),
            "n_failed": sum(not c.passed for c in self.checks),
            "checks": [c.to_dict(timings) for c in self.sorted()],
        }
        return json.dumps(body, indent=2, sort_keys=True)

    def write(self, path, timings: bool = True) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(timings) + "\n")

    def summary(self) -> str:
        failed = [c.check_id for c in self.sorted() if not c.passed]
        head = f"{len(self.checks) - len(failed)}/{len(self.checks)} checks passed"
        return head if not failed else f"{head}; failed: {', '.join(failed)}"


def _run(check_id: str, seed: int, body: Callable[[], tuple[float, float] | tuple[float, float, str]]) -> CheckReport:
    start = time.perf_counter()
    try:
        out = body()
        observed, threshold = float(out[0]), float(out[1])
        detail = out[2] if len(out) > 2 else ""
        status = "pass" if observed <= threshold else "fail"
    except Exception as exc:  # a crashing check is a failed check
        observed, threshold, status = math.inf, math.nan, "fail"
        detail = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"
    return CheckReport(check_id, status, observed, threshold, time.perf_counter() - start, seed, detail)


def _rng(seed: int, tag: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, tag])


# ---------------------------------------------------------------------------
# closed forms used as oracles
# ---------------------------------------------------------------------------


def cauchy_density(t, x):
    x = np.asarray(x, dtype=float)
    return t / (math.pi * (t * t + x * x))


def gaussian_density(t, x, sigma: float = 1.0):
    x = np.asarray(x, dtype=float)
    v = sigma * sigma * t
    return np.exp(-x * x / (2 * v)) / math.sqrt(2 * math.pi * v)


# ---------------------------------------------------------------------------
# levy_models
# ---------------------------------------------------------------------------


def run_model_checks(models: Iterable[CharacteristicExponent] = CATALOG, seed: int = 0) -> list[CheckReport]:
    models = list(models)
    if not models:
        return []
    laws = (
        TWO_ATOMS,
        LengthLaw.uniform(1.0, 2.0),
        LengthLaw.from_dict(
            {"atoms": [{"r": 0.5, "p": 0.25}, {"r": 1.5, "p": 0.25}], "density": {"grid": [1.0, 2.0, 3.0], "values": [0.0, 0.5, 0.0]}}
        ),
    )

    def symmetry():
        u = np.arange(-10, 11, dtype=float)
        bad = 0
        for m in models:
            v = evaluate(m, u)
            bad += int(np.sum(v != v[::-1])) + int(np.sum(v > 0)) + int(evaluate(m, 0.0) != 0.0)
        return bad, 0, "violations"

    def tail():
        worst = 0.0
        for m in models:
            for t in (0.25, 1.0, 4.0):
                cut = cutoff_frequency(m, t)
                worst = max(worst, math.exp(t * evaluate(m, cut)))
        return worst, TAIL_TOL * (1 - 1e-12)

    def additive():
        worst = 0.0
        for law in laws:
            whole = integrate(law)
            parts = integrate(law, None, 0, 1) + integrate(law, None, 1, 1.5) + integrate(law, None, 1.5, math.inf)
            g = lambda r: np.cos(r)
            gparts = integrate(law, g, 0, 0.75) + integrate(law, g, 0.75, 2) + integrate(law, g, 2, math.inf)
            worst = max(worst, abs(whole - 1), abs(parts - whole), abs(gparts - integrate(law, g)))
        return worst, 1e-12

    def monotone():
        bad = 0
        for law in laws:
            ts = np.linspace(0, 4, 801)
            vals = np.array([cdf(law, t) for t in ts])
            bad += int(np.sum(np.diff(vals) < 0)) + int(abs(cdf(law, 10.0) - 1) > 1e-12)
            for r, p in zip(law.atom_times, law.atom_probs):
                jump = cdf(law, r) - cdf(law, r * (1 - 1e-12))
                bad += int(abs(jump - p) > 1e-9)
        return bad, 0, "violations"

    return [
        _run("levy.symmetry_nonpositive", seed, symmetry),
        _run("levy.tail_decay", seed, tail),
        _run("levy.integrate_additive", seed, additive),
        _run("levy.cdf_monotone", seed, monotone),
    ]


# ---------------------------------------------------------------------------
# density_engine
# ---------------------------------------------------------------------------

TableBuilder = Callable[[CharacteristicExponent, float, InversionPlan], object]


def run_density_checks(
    models: Iterable[CharacteristicExponent] = CATALOG,
    plan: InversionPlan | None = None,
    seed: int = 0,
    builder: TableBuilder = density_grid,
) -> list[CheckReport]:
    """Oracle agreement, normalization, Chapman-Kolmogorov, asymptotics, small times.

    ``plan`` overrides the per-(model, t) plan choice; ``builder`` replaces
    :func:`density_grid` (used to inject faults).
    """
    models = list(models)
    if not models:
        return []
    oracles = {m.model_id: m for m in models if m.model_id in ("cauchy_oracle", "gaussian_oracle")}
    heavy = [m for m in models if m.model_id not in ("cauchy_oracle", "gaussian_oracle")]

    def oracle():
        xs = np.linspace(-10, 10, 2001)
        worst = 0.0
        for m in oracles.values():
            exact = cauchy_density if m.model_id == "cauchy_oracle" else (
                lambda t, x: gaussian_density(t, x, m.param_dict["sigma"])
            )
            for t in (0.5, 1.0, 2.0):
                worst = max(worst, float(np.max(np.abs(density_points(m, t, xs) - exact(t, xs)))))
                tb = builder(m, t, plan or plan_for(m, t, x_max=20.0))
                sel = np.abs(tb.x) <= 10
                worst = max(worst, float(np.max(np.abs(tb.values[sel] - exact(t, tb.x[sel])))))
        return worst, 1e-8

    def normalization():
        worst = 0.0
        for m in heavy:
            for t in (0.25, 1.0, 4.0):
                tb = builder(m, t, plan or plan_for(m, t, mass_tol=1e-7))
                worst = max(worst, abs(tb.mass() - 1.0))
        return worst, 1e-6

    def chapman():
        worst = 0.0
        for m in models:
            for s, t in ((0.5, 0.5), (1.0, 1.0)):
                if plan is None:
                    p0 = plan_for(m, min(s, t))
                    p1 = plan_for(m, s + t, dx=p0.dx)
                    half = max(p0.half_period, p1.half_period)
                    pl = InversionPlan.from_lattice(p0.dx, half, x_max=half / 2)
                else:
                    pl = plan
                a, b, c = builder(m, s, pl), builder(m, t, pl), builder(m, s + t, pl)
                worst = max(worst, float(np.max(np.abs(convolve(a, b).values - c.values))))
        return worst, 1e-5

    def asymptotic():
        m = CharacteristicExponent.stable(1.5)
        gaps = {r: abs(density_point(m, r - 1, 0.0) / density_point(m, r, 0.0) - 1) for r in (10.0, 100.0)}
        target = (99 / 100) ** (-1 / 1.5) - 1
        return gaps[100.0], min(0.01, gaps[10.0] * (1 - 1e-12)), f"gap(10)={gaps[10.0]:.6g}, analytic {target:.6g}"

    def small_time():
        m = CharacteristicExponent.stable(1.5)
        vals = [density_point(m, t, 1.0) for t in (1e-3, 1e-2, 1e-1)]
        bad = sum(not math.isfinite(v) for v in vals) + sum(b <= a for a, b in zip(vals, vals[1:]))
        return bad, 0, f"values {vals}"

    return [
        _run("density.oracle_agreement", seed, oracle),
        _run("density.normalization", seed, normalization),
        _run("density.chapman_kolmogorov", seed, chapman),
        _run("density.asymptotic_ratio", seed, asymptotic),
        _run("density.small_time", seed, small_time),
    ]


# ---------------------------------------------------------------------------
# bridge_fixed
# ---------------------------------------------------------------------------


def run_bridge_checks(
    models: Iterable[CharacteristicExponent] = CATALOG,
    matrix=BRIDGE_MATRIX,
    seed: int = 0,
    n_paths: int = 10_000,
) -> list[CheckReport]:
    models = list(models)
    if not models:
        return []

    def normalization():
        worst = 0.0
        for m in models:
            for r, z, t, x, u in matrix:
                k = kernel_on_lattice(BridgeSpec(m, r, z), t, x, u)
                worst = max(worst, abs(k.mass() - 1))
        return worst, 1e-6

    def composition():
        worst = 0.0
        for m in models:
            for r, z, t, x, u in matrix:
                s = 0.5 * (t + u)
                composed, direct = compose_kernels(BridgeSpec(m, r, z), t, x, s, u)
                worst = max(worst, float(np.max(np.abs(composed.density - direct.density))))
        return worst, 1e-4

    def concentration():
        spec = BridgeSpec(CharacteristicExponent.gaussian(1.0), 1.0, 0.0)
        worst = 0.0
        for delta in (0.1, 0.01):
            k = kernel_on_lattice(spec, 0.0, 0.0, 1.0 - delta)
            target = delta * (1 - delta)
            worst = max(worst, abs(k.variance() / target - 1))
        return worst, 0.05

    def sampler_ks():
        crit = float(stats.kstwo.ppf(0.99, n_paths))
        worst = 0.0
        for tag, (m, r, z, u) in enumerate(
            ((CharacteristicExponent.cauchy(), 2.0, 0.0, 1.0), (CharacteristicExponent.stable(1.5), 1.0, 0.5, 0.5))
        ):
            spec = BridgeSpec(m, r, z)
            batch = sample_bridge_paths(spec, [0.0, u], n_paths, seed=_rng(seed, 100 + tag))
            kern = kernel_on_lattice(spec, 0.0, 0.0, u)
            d = stats.kstest(batch.values[:, 1], kern.cdf).statistic
            worst = max(worst, float(d))
        return worst, crit

    return [
        _run("bridge.kernel_normalization", seed, normalization),
        _run("bridge.kernel_composition", seed, composition),
        _run("bridge.endpoint_concentration", seed, concentration),
        _run("bridge.sampler_ks", seed, sampler_ks),
    ]


# ---------------------------------------------------------------------------
# bridge_random
# ---------------------------------------------------------------------------


def brute_force_posterior(atoms, z: float, times, xs, density=cauchy_density) -> np.ndarray:
    """Posterior atom weights from the bridge fdds and closed-form densities.

    ``xs`` uses ``"z"`` for absorbed observations. The likelihood of
    length ``r`` is ``1{r <= t_1}`` when the first value is absorbed; else
    the fdd of the bridge of length ``r`` at the unabsorbed prefix, times
    ``1{t_k < r <= t_(k+1)}`` (or ``1{r > t_n}`` without absorption).
    """
    rs = np.array([a[0] for a in atoms], dtype=float)
    ps = np.array([a[1] for a in atoms], dtype=float)
    times = [float(t) for t in times]
    k = next((i for i, v in enumerate(xs) if isinstance(v, str)), len(xs))
    like = np.zeros(rs.size)
    for i, r in enumerate(rs):
        if k == 0:
            like[i] = 1.0 if r <= times[0] else 0.0
            continue
        upper = times[k] if k < len(xs) else math.inf
        if not (times[k - 1] < r <= upper):
            continue
        q, t_prev, x_prev = 1.0, 0.0, 0.0
        for t, x in zip(times[:k], xs[:k]):
            q *= float(density(t - t_prev, float(x) - x_prev))
            t_prev, x_prev = t, float(x)
        like[i] = q * float(density(r - t_prev, z - x_prev)) / float(density(r, z))
    w = ps * like
    with np.errstate(invalid="ignore"):
        return w / w.sum()


def _observation_patterns(rng: np.random.Generator, atoms, n_max: int = 3, repeats: int = 4):
    """Random times (kept 0.05 away from each other and from every atom) and every absorption pattern."""
    rs = np.array([a[0] for a in atoms])
    for n in [k for k in range(1, n_max + 1) for _ in range(repeats)]:
        while True:
            times = np.sort(rng.uniform(0.1, 2.9, size=n))
            gaps = np.abs(times[:, None] - rs[None, :])
            if np.all(np.diff(times) >= 0.05) and np.all(gaps >= 0.05):
                break
        values = rng.uniform(-2.0, 2.0, size=n)
        for n_abs in range(n + 1):
            xs: list = [float(v) for v in values[: n - n_abs]] + ["z"] * n_abs
            yield times, xs


def run_random_bridge_checks(seed: int = 0, n_paths: int = 10_000) -> list[CheckReport]:
    cauchy = CharacteristicExponent.cauchy()
    gauss = CharacteristicExponent.gaussian(1.0)

    def normalization():
        worst = 0.0
        laws = (TWO_ATOMS, LengthLaw.uniform(1.0, 2.0))
        for m in (cauchy, gauss):
            for z in (0.0, 0.5):
                for law in laws:
                    rb = br.RandomBridge(m, z, law)
                    for t, x, u in ((0.0, 0.0, 1.5), (0.5, 0.3, 1.5), (0.25, -1.0, 0.75), (1.2, 0.2, 2.5)):
                        worst = max(worst, abs(br.transition(rb, t, x, u).total_mass() - 1))
        return worst, 1e-5

    def composition():
        worst = 0.0
        for m in (cauchy, gauss):
            rb = br.RandomBridge(m, 0.0, TWO_ATOMS)
            for t, x, s, u in ((0.0, 0.0, 0.75, 1.5), (0.25, 0.4, 1.2, 1.8)):
                composed, direct = br.compose_transitions(rb, t, x, s, u)
                gap = float(np.max(np.abs(composed.density - direct.density)))
                worst = max(worst, gap / 1e-4, abs(composed.atom_mass - direct.atom_mass) / 1e-5)
        return worst, 1.0, "max of density gap / 1e-4 and atom gap / 1e-5"

    def posterior():
        rng = np.random.default_rng(_rng(seed, 200))
        atom_sets = (
            [(1.0, 0.5), (2.0, 0.5)],
            [(0.5, 0.1), (1.0, 0.2), (1.5, 0.3), (2.25, 0.25), (3.0, 0.15)],
            [(0.7, 0.3), (1.9, 0.3), (2.6, 0.4)],
        )
        worst = 0.0
        checked = 0
        for atoms in atom_sets:
            for z in (0.0, 0.75):
                rb = br.RandomBridge(cauchy, z, LengthLaw.from_atoms(atoms))
                for times, xs in _observation_patterns(rng, atoms):
                    try:
                        expect = brute_force_posterior(atoms, z, times, xs)
                    except (FloatingPointError, ZeroDivisionError):
                        continue
                    if not np.all(np.isfinite(expect)):
                        # empty bracket: the library must refuse as well
                        try:
                            br.tau_posterior_multi(rb, times, xs)
                        except br.ZeroNormalizerError:
                            continue
                        return math.inf, 1e-10, "accepted an observation with no consistent length"
                    post = br.tau_posterior_multi(rb, times, xs)
                    got = np.zeros(len(atoms))
                    idx = np.searchsorted([a[0] for a in atoms], post.atom_times)
                    got[idx] = post.atom_probs
                    nz = expect > 0
                    rel = np.abs(got[nz] - expect[nz]) / expect[nz]
                    worst = max(worst, float(rel.max()), float(np.abs(got[~nz]).max(initial=0.0)))
                    checked += 1
        return worst, 1e-10, f"{checked} observation patterns"

    def stopping_time():
        z = 0.5
        rb = br.RandomBridge(cauchy, z, TWO_ATOMS)
        grid = np.linspace(0.0, 2.5, 11)
        batch = br.sample_paths(rb, grid, n_paths, seed=_rng(seed, 300))
        at_z = batch.values == z
        after = grid[None, :] >= batch.realized_length[:, None]
        bad = int(np.sum(at_z != after)) + int(np.sum(batch.absorbed != after))
        return bad, 0, "mismatched nodes"

    def filter_consistency():
        rb = br.RandomBridge(cauchy, 0.0, TWO_ATOMS)
        batch = br.sample_paths(rb, [0.0, 0.25, 0.5], n_paths, seed=_rng(seed, 400))
        alive = ~batch.absorbed[:, -1]
        post = br.atom_posteriors(rb, 0.5, batch.values[alive, -1])
        p_hat = float(post[:, 0].mean())
        freq = float(np.mean(batch.realized_length[alive] == 1.0))
        sigma = math.sqrt(p_hat * (1 - p_hat) / int(alive.sum()))
        return abs(freq - p_hat) / sigma, 3.0, f"posterior {p_hat:.5f}, empirical {freq:.5f}"

    def right_continuity():
        rb = br.RandomBridge(gauss, 0.0, TWO_ATOMS)
        path = lambda s: 0.3 * math.sin(2.0 * s) + 0.1 * s
        t, u = 0.5, 0.9
        base = br.conditional_expectation(rb, t, path(t), u, np.tanh)
        gaps = [abs(br.conditional_expectation(rb, t + d, path(t + d), u, np.tanh) - base) for d in (0.1, 0.01, 0.001)]
        ratios = [b / a for a, b in zip(gaps, gaps[1:])]
        return max(ratios), 1.0 - 1e-12, f"gaps {gaps}"

    def weak_continuity():
        ys = np.linspace(-8.0, 8.0, 1601)

        def marginal(z):
            return br.marginal_density(br.RandomBridge(gauss, z, TWO_ATOMS), 0.5, ys)

        def lipschitz(zs):
            dens = [marginal(z) for z in zs]
            return max(float(np.max(np.abs(b - a))) / (zb - za) for a, b, za, zb in zip(dens, dens[1:], zs, zs[1:]))

        c_fit = lipschitz([0.0, 0.05, 0.1])
        fine = lipschitz(list(np.linspace(0.0, 0.1, 11)))
        if not math.isfinite(c_fit):
            return math.inf, 1.5
        return fine / c_fit, 1.5, f"fitted C = {c_fit:.6g}"

    return [
        _run("rlb.mixed_normalization", seed, normalization),
        _run("rlb.markov_composition", seed, composition),
        _run("rlb.posterior_bruteforce", seed, posterior),
        _run("rlb.stopping_time", seed, stopping_time),
        _run("rlb.filter_consistency", seed, filter_consistency),
        _run("rlb.right_continuity", seed, right_continuity),
        _run("rlb.weak_continuity", seed, weak_continuity),
    ]


def run_all(seed: int = 42, n_paths: int = 10_000) -> VerificationReport:
    """Every check in :data:`COVERAGE_MANIFEST` with default configurations."""
    checks = (
        run_model_checks(seed=seed)
        + run_density_checks(seed=seed)
        + run_bridge_checks(seed=seed, n_paths=n_paths)
        + run_random_bridge_checks(seed=seed, n_paths=n_paths)
    )
    return VerificationReport(seed, checks)

"""Acceptance criteria, one test each, with tolerances and runtime limits.

Each test prints a single ``PASS``/``FAIL`` line. Caches are cleared first so
runtimes include table construction.
"""
from __future__ import annotations

import itertools
import json
import math
import time

import numpy as np
import pytest

from levybridge import density
from levybridge.bridge_fixed import BridgeSpec, compose_kernels, kernel_on_lattice, sample_bridge_paths
from levybridge.bridge_random import (
    ABSORBED,
    RandomBridge,
    atom_posteriors,
    compose_transitions,
    sample_paths,
    tau_posterior_multi,
    transition,
)
from levybridge.cli import main
from levybridge.density import (
    InversionPlan,
    convolve,
    density_grid,
    density_point,
    density_points,
    plan_for,
)
from levybridge.errors import ZeroNormalizerError
from levybridge.models import CharacteristicExponent, LengthLaw
from levybridge.verification import BRIDGE_MATRIX, CATALOG, COVERAGE_MANIFEST

CAUCHY = CharacteristicExponent.cauchy()
GAUSS = CharacteristicExponent.gaussian(1.0)
FOUR = (
    CharacteristicExponent.stable(1.5),
    CharacteristicExponent.tempered_stable(0.5, 1.0, 1.0),
    CharacteristicExponent.modified_tempered_stable(0.75),
    CharacteristicExponent.nig(),
)
TWO_ATOMS = LengthLaw.from_atoms([(1.0, 0.5), (2.0, 0.5)])


@pytest.fixture(autouse=True)
def cold_caches():
    density.DEFAULT_CACHE.clear()
    density.common_plan.cache_clear()
    with density._peak_lock:
        density._peak_cache.clear()


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, ok: bool, measure: str, runtime: float, limit: float | None):
        timing = f"{runtime:.1f} s" + (f" < {limit:g} s" if limit is not None else "")
        status = "PASS" if ok and (limit is None or runtime < limit) else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] AC{number:<2d} {title}: {measure}; {timing}")
        assert ok, measure
        if limit is not None:
            assert runtime < limit, f"runtime {runtime:.1f} s exceeds {limit} s"

    return emit


def cauchy_exact(t, x):
    return t / (math.pi * (t * t + np.asarray(x) ** 2))


def gauss_exact(t, x):
    return np.exp(-np.asarray(x) ** 2 / (2 * t)) / math.sqrt(2 * math.pi * t)


def test_ac01_closed_form_oracles(report):
    start = time.perf_counter()
    xs = np.linspace(-10, 10, 2001)
    worst = 0.0
    for model, exact in ((CAUCHY, cauchy_exact), (GAUSS, gauss_exact)):
        for t in (0.5, 1.0, 2.0):
            worst = max(worst, float(np.max(np.abs(density_points(model, t, xs) - exact(t, xs)))))
    runtime = time.perf_counter() - start
    report(1, "closed-form oracle agreement", worst <= 1e-8, f"max abs error {worst:.2e} <= 1e-8", runtime, 5)


def test_ac02_normalization(report):
    start = time.perf_counter()
    worst = 0.0
    for model in FOUR:
        for t in (0.25, 1.0, 4.0):
            table = density_grid(model, t, plan_for(model, t, mass_tol=1e-7))
            worst = max(worst, abs(table.mass() - 1))
    runtime = time.perf_counter() - start
    report(2, "normalization", worst <= 1e-6, f"max |mass - 1| {worst:.2e} <= 1e-6", runtime, 30)


def test_ac03_chapman_kolmogorov(report):
    start = time.perf_counter()
    worst = 0.0
    for model in CATALOG:
        for s, t in ((0.5, 0.5), (1.0, 1.0)):
            p0 = plan_for(model, s)
            p1 = plan_for(model, s + t, dx=p0.dx)
            half = max(p0.half_period, p1.half_period)
            plan = InversionPlan.from_lattice(p0.dx, half, x_max=half / 2)
            a, b, c = density_grid(model, s, plan), density_grid(model, t, plan), density_grid(model, s + t, plan)
            worst = max(worst, float(np.max(np.abs(convolve(a, b).values - c.values))))
    runtime = time.perf_counter() - start
    report(3, "Chapman-Kolmogorov", worst <= 1e-5, f"sup-norm gap {worst:.2e} <= 1e-5", runtime, 60)


def test_ac04_small_time_ratio(report):
    start = time.perf_counter()
    model = CharacteristicExponent.stable(1.5)
    gap = {r: abs(density_point(model, r - 1, 0.0) / density_point(model, r, 0.0) - 1) for r in (10.0, 100.0)}
    analytic = (99 / 100) ** (-2 / 3) - 1
    runtime = time.perf_counter() - start
    ok = gap[100.0] <= 0.01 and gap[100.0] < gap[10.0] and abs(gap[100.0] - analytic) < 1e-9
    measure = f"gap(100) {gap[100.0]:.6f} <= 0.01, gap(10) {gap[10.0]:.6f}, analytic {analytic:.6f}"
    report(4, "density ratio asymptotics", ok, measure, runtime, 10)


def test_ac05_bridge_kernel(report):
    start = time.perf_counter()
    mass_gap = comp_gap = 0.0
    for model in CATALOG:
        for r, z, t, x, u in BRIDGE_MATRIX:
            spec = BridgeSpec(model, r, z)
            mass_gap = max(mass_gap, abs(kernel_on_lattice(spec, t, x, u).mass() - 1))
            composed, direct = compose_kernels(spec, t, x, 0.5 * (t + u), u)
            comp_gap = max(comp_gap, float(np.max(np.abs(composed.density - direct.density))))
    runtime = time.perf_counter() - start
    ok = mass_gap <= 1e-6 and comp_gap <= 1e-4
    report(5, "bridge kernel", ok, f"mass gap {mass_gap:.2e} <= 1e-6, composition {comp_gap:.2e} <= 1e-4", runtime, 60)


def test_ac06_brownian_bridge_variance(report):
    start = time.perf_counter()
    batch = sample_bridge_paths(BridgeSpec(GAUSS, 1.0, 0.0), np.linspace(0, 1, 65), 10_000, seed=42)
    var = float(batch.values[:, 32].var())
    runtime = time.perf_counter() - start
    report(6, "Gaussian bridge sampler", 0.23 <= var <= 0.27, f"midpoint variance {var:.4f} in [0.23, 0.27]", runtime, 30)


def test_ac07_mixed_transition(report):
    start = time.perf_counter()
    mass_gap = dens_gap = atom_gap = 0.0
    for model in (CAUCHY, GAUSS):
        rb = RandomBridge(model, 0.0, TWO_ATOMS)
        for t, x, u in ((0.0, 0.0, 1.5), (0.5, 0.3, 1.5), (0.25, -1.0, 0.75), (1.2, 0.2, 2.5)):
            mass_gap = max(mass_gap, abs(transition(rb, t, x, u).total_mass() - 1))
        for t, x, s, u in ((0.0, 0.0, 0.75, 1.5), (0.25, 0.4, 1.2, 1.8)):
            composed, direct = compose_transitions(rb, t, x, s, u)
            dens_gap = max(dens_gap, float(np.max(np.abs(composed.density - direct.density))))
            atom_gap = max(atom_gap, abs(composed.atom_mass - direct.atom_mass))
    runtime = time.perf_counter() - start
    ok = mass_gap <= 1e-5 and dens_gap <= 1e-4 and atom_gap <= 1e-5
    measure = f"mass gap {mass_gap:.2e} <= 1e-5, composition {dens_gap:.2e} <= 1e-4 / atom {atom_gap:.2e} <= 1e-5"
    report(7, "mixed transition", ok, measure, runtime, 60)


def brute_force(atoms, z, times, xs):
    """Posterior atom weights from the bridge finite-dimensional densities, Cauchy closed forms."""
    k = next((i for i, v in enumerate(xs) if v == ABSORBED), len(xs))
    weights = []
    for r, p in atoms:
        if k == 0:
            weights.append(p if r <= times[0] else 0.0)
            continue
        upper = times[k] if k < len(xs) else math.inf
        if not times[k - 1] < r <= upper:
            weights.append(0.0)
            continue
        like, s, y = 1.0, 0.0, 0.0
        for t, x in zip(times[:k], xs[:k]):
            like *= cauchy_exact(t - s, x - y)
            s, y = t, x
        weights.append(p * like * cauchy_exact(r - s, z - y) / cauchy_exact(r, z))
    w = np.array(weights)
    return w / w.sum() if w.sum() > 0 else None


def test_ac08_posterior_bruteforce(report):
    start = time.perf_counter()
    atom_sets = [
        [(1.0, 1.0)],
        [(1.0, 0.5), (2.0, 0.5)],
        [(0.7, 0.3), (1.9, 0.3), (2.6, 0.4)],
        [(0.6, 0.1), (1.1, 0.4), (1.7, 0.3), (2.4, 0.2)],
        [(0.5, 0.1), (1.0, 0.2), (1.5, 0.3), (2.25, 0.25), (3.0, 0.15)],
    ]
    time_sets = [(0.3,), (1.2,), (0.4, 1.3), (0.8, 2.0), (0.2, 1.25, 2.7)]
    values = (-1.7, 0.0, 0.4)
    worst, patterns, refused = 0.0, 0, 0
    for atoms, z in itertools.product(atom_sets, (0.0, 0.75)):
        rb = RandomBridge(CAUCHY, z, LengthLaw.from_atoms(atoms))
        for times in time_sets:
            n = len(times)
            for k in range(n + 1):  # observations k.. are absorbed
                for head in itertools.product(values, repeat=k):
                    xs = list(head) + [ABSORBED] * (n - k)
                    expect = brute_force(atoms, z, times, xs)
                    if expect is None:
                        with pytest.raises(ZeroNormalizerError):
                            tau_posterior_multi(rb, times, xs)
                        refused += 1
                        continue
                    post = tau_posterior_multi(rb, times, xs)
                    got = np.zeros(len(atoms))
                    got[np.searchsorted([a[0] for a in atoms], post.atom_times)] = post.atom_probs
                    nz = expect > 0
                    rel = np.abs(got[nz] - expect[nz]) / expect[nz]
                    worst = max(worst, float(rel.max()), float(np.abs(got[~nz]).max(initial=0.0)))
                    patterns += 1
    runtime = time.perf_counter() - start
    measure = f"max relative error {worst:.2e} <= 1e-10 over {patterns} patterns ({refused} empty brackets refused)"
    report(8, "posterior vs brute-force Bayes", worst <= 1e-10, measure, runtime, 10)


def test_ac09_stopping_time(report):
    start = time.perf_counter()
    z = 0.5
    rb = RandomBridge(CAUCHY, z, TWO_ATOMS)
    grid = np.linspace(0.0, 2.5, 26)
    batch = sample_paths(rb, grid, 10_000, seed=42)
    after = grid[None, :] >= batch.realized_length[:, None]
    bad = int(np.sum((batch.values == z) != after)) + int(np.sum(batch.absorbed != after))
    runtime = time.perf_counter() - start
    report(9, "stopping-time identity", bad == 0, f"{bad} mismatched nodes of {batch.values.size}", runtime, 30)


def test_ac10_filter_calibration(report):
    start = time.perf_counter()
    rb = RandomBridge(CAUCHY, 0.0, TWO_ATOMS)
    batch = sample_paths(rb, [0.0, 0.5], 10_000, seed=42)
    alive = ~batch.absorbed[:, -1]
    post = atom_posteriors(rb, 0.5, batch.values[alive, -1])
    p_hat = float(post[:, 0].mean())
    freq = float(np.mean(batch.realized_length[alive] == 1.0))
    sigma = math.sqrt(p_hat * (1 - p_hat) / int(alive.sum()))
    runtime = time.perf_counter() - start
    z_score = abs(freq - p_hat) / sigma
    measure = f"mean posterior {p_hat:.4f}, empirical {freq:.4f}, |gap| = {z_score:.2f} sigma <= 3"
    report(10, "filter calibration", z_score <= 3, measure, runtime, 60)


def test_ac11_verify_command(report, tmp_path):
    start = time.perf_counter()
    out = tmp_path / "verify.json"
    code = main(["verify", "--seed", "42", "--out", str(out)])
    data = json.loads(out.read_text())
    listed = {c["check_id"] for c in data["checks"]}
    runtime = time.perf_counter() - start
    ok = code == 0 and listed == set(COVERAGE_MANIFEST) and data["passed"]
    failed = [c["check_id"] for c in data["checks"] if c["status"] != "pass"]
    measure = f"exit code {code}, {len(listed)}/{len(COVERAGE_MANIFEST)} manifest ids listed, failed: {failed or 'none'}"
    report(11, "verify --seed 42", ok, measure, runtime, None)

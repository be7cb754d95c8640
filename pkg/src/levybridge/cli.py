"""Command-line front end: ``levybridge <subcommand> ...``.

Every subcommand writes one file and prints a one-line summary. Output goes
to ``--out``; without it, to ``$LEVYBRIDGE_OUTPUT_DIR`` (default: the
current directory) under a per-subcommand file name.

Exit codes: 0 success, 1 failed verification, 2 usage error, 3 numeric error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import bridge_random as br
from . import verification
from .bridge_fixed import BridgeSpec, sample_bridge_paths
from .density import InversionPlan, density_grid, plan_for
from .errors import LevyBridgeError
from .models import LengthLaw, parse_model

OUTPUT_DIR_ENV = "LEVYBRIDGE_OUTPUT_DIR"

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# test functions selectable by name for expectations
G_FUNCTIONS = {
    "one": lambda y: np.ones_like(y),
    "identity": lambda y: y,
    "square": lambda y: y * y,
    "tanh": np.tanh,
    "cos": np.cos,
}
G2_FUNCTIONS = {
    "one": lambda r, y: np.ones_like(y),
    "tau": lambda r, y: r + 0.0 * y,
    "tau_times_y": lambda r, y: r * y,
    "identity": lambda r, y: y + 0.0 * r,
}


class UsageError(Exception):
    """Bad flags or inputs; maps to exit code 2."""


@dataclass(frozen=True)
class CliConfig:
    """Parsed invocation; ``from_dict(to_dict())`` reproduces it."""

    subcommand: str
    model: str | None = None
    z: float | None = None
    tau: str | None = None
    t_max: float | None = None
    steps: int | None = None
    seed: int | None = None
    out: str | None = None
    fmt: str = "csv"
    options: tuple[tuple[str, object], ...] = field(default=())

    def option(self, name: str, default=None):
        return dict(self.options).get(name, default)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["options"] = {k: v for k, v in self.options}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> CliConfig:
        data = dict(data)
        opts = data.pop("options", {}) or {}
        return cls(**data, options=tuple(sorted((k, _freeze(v)) for k, v in opts.items())))

    @classmethod
    def from_json(cls, text: str) -> CliConfig:
        return cls.from_dict(json.loads(text))


def _freeze(v):
    return tuple(v) if isinstance(v, list) else v


_COMMON = ("subcommand", "model", "z", "tau", "t_max", "steps", "seed", "out", "fmt")


def config_from_namespace(ns: argparse.Namespace) -> CliConfig:
    raw = {k: v for k, v in vars(ns).items() if k != "func"}
    common = {k: raw.pop(k, None) for k in _COMMON}
    if common["fmt"] is None:
        common["fmt"] = "csv"
    return CliConfig(**common, options=tuple(sorted((k, _freeze(v)) for k, v in raw.items())))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _output_path(cfg: CliConfig, default_name: str) -> Path:
    if cfg.out:
        return Path(cfg.out)
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    base.mkdir(parents=True, exist_ok=True)
    return base / default_name


def _model(cfg: CliConfig):
    if not cfg.model:
        raise UsageError("--model is required")
    try:
        return parse_model(cfg.model)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc


def _law(cfg: CliConfig) -> LengthLaw:
    if not cfg.tau:
        raise UsageError("--tau is required")
    try:
        return LengthLaw.from_json(cfg.tau)
    except OSError as exc:
        raise UsageError(f"cannot read {cfg.tau}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid length law in {cfg.tau}: {exc}") from exc


def _grid(cfg: CliConfig, t_max_default: float | None = None) -> np.ndarray:
    t_max = cfg.t_max if cfg.t_max is not None else t_max_default
    if t_max is None or not t_max > 0:
        raise UsageError("--t-max must be positive")
    if cfg.steps is None or cfg.steps < 1:
        raise UsageError("--steps must be a positive integer")
    return np.linspace(0.0, t_max, cfg.steps + 1)


def parse_observations(text: str) -> tuple[list[float], list]:
    """``"t1:x1,t2:x2"`` with the literal ``z`` marking an absorbed value."""
    times, xs = [], []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise UsageError(f"observation {item!r} is not of the form t:x")
        t_text, x_text = item.split(":", 1)
        try:
            times.append(float(t_text))
            xs.append(br.ABSORBED if br.is_absorbed_token(x_text) else float(x_text))
        except ValueError as exc:
            raise UsageError(f"cannot parse observation {item!r}") from exc
    if not times:
        raise UsageError("no observations given")
    return times, xs


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_density(cfg: CliConfig) -> tuple[int, str]:
    model = _model(cfg)
    t = cfg.option("t")
    x_max = cfg.option("x_max")
    if t is None or not t > 0 or x_max is None or not x_max > 0:
        raise UsageError("--t and --x-max must be positive")
    plan = plan_for(model, t, x_max=x_max)
    cutoff = cfg.option("cutoff") or plan.cutoff
    points = cfg.option("grid_points")
    du = 2.0 * cutoff / points if points else plan.du * cutoff / plan.cutoff
    plan = InversionPlan(cutoff, du, x_max)
    table = density_grid(model, t, plan)
    keep = np.abs(table.x) <= x_max * (1 + 1e-12)
    path = _output_path(cfg, f"density.{cfg.fmt}")
    if cfg.fmt == "json":
        body = {"model": model.spec_string(), "t": t, "dx": table.dx, "x": table.x[keep].tolist(), "f": table.values[keep].tolist()}
        path.write_text(json.dumps(body) + "\n")
    else:
        with open(path, "w") as fh:
            fh.write("x,f\n")
            for x, f in zip(table.x[keep], table.values[keep]):
                fh.write(f"{_fmt(x)},{_fmt(f)}\n")
    return EXIT_OK, f"density {model.spec_string()} t={t}: {int(keep.sum())} rows -> {path}"


def _write_paths(batch, path: Path, fmt: str) -> None:
    if fmt == "json":
        batch.write_jsonl(path)
    else:
        batch.write_csv(path)


def cmd_bridge_sample(cfg: CliConfig) -> tuple[int, str]:
    model = _model(cfg)
    r = cfg.option("r")
    if r is None or not r > 0:
        raise UsageError("--r must be positive")
    spec = BridgeSpec(model, r, cfg.z or 0.0)
    grid = _grid(cfg, r)
    batch = sample_bridge_paths(spec, grid, cfg.option("n_paths", 1), seed=cfg.seed, workers=cfg.option("workers", 1))
    path = _output_path(cfg, "bridge_paths." + ("jsonl" if cfg.fmt == "json" else "csv"))
    _write_paths(batch, path, cfg.fmt)
    return EXIT_OK, f"bridge-sample: {len(batch)} paths x {grid.size} times -> {path}"


def _random_bridge(cfg: CliConfig) -> br.RandomBridge:
    return br.RandomBridge(_model(cfg), cfg.z or 0.0, _law(cfg))


def cmd_rlb_sample(cfg: CliConfig) -> tuple[int, str]:
    rb = _random_bridge(cfg)
    grid = _grid(cfg)
    batch = br.sample_paths(rb, grid, cfg.option("n_paths", 1), seed=cfg.seed)
    path = _output_path(cfg, "rlb_paths." + ("jsonl" if cfg.fmt == "json" else "csv"))
    _write_paths(batch, path, cfg.fmt)
    absorbed = float(batch.absorbed[:, -1].mean()) if len(batch) else 0.0
    return EXIT_OK, f"rlb-sample: {len(batch)} paths, absorbed by t={grid[-1]}: {absorbed:.4f} -> {path}"


def cmd_posterior(cfg: CliConfig) -> tuple[int, str]:
    rb = _random_bridge(cfg)
    times, xs = parse_observations(cfg.option("obs") or "")
    if len(times) == 1 and not br.is_absorbed_token(xs[0]):
        post = br.tau_posterior_single(rb, times[0], xs[0])
    else:
        post = br.tau_posterior_multi(rb, times, xs)
    path = _output_path(cfg, f"posterior.{cfg.fmt}")
    if cfg.fmt == "json":
        body = {"lower": post.lower, "upper": repr(post.upper) if math.isinf(post.upper) else post.upper}
        body.update(post.law.to_dict())
        path.write_text(json.dumps(body) + "\n")
    else:
        post.write_csv(path)
    weights = ", ".join(f"{r:g}:{p:.6g}" for r, p in zip(post.atom_times, post.atom_probs))
    return EXIT_OK, f"posterior on ({post.lower:g}, {post.upper:g}]: atoms {{{weights}}} -> {path}"


def _kernel_args(cfg: CliConfig):
    t, x, u = cfg.option("t"), cfg.option("x"), cfg.option("u")
    if t is None or u is None or (x is None and not cfg.option("absorbed")):
        raise UsageError("--t, --x and --u are required (or --absorbed instead of --x)")
    return t, (x if x is not None else 0.0), u, bool(cfg.option("absorbed"))


def cmd_kernel(cfg: CliConfig) -> tuple[int, str]:
    rb = _random_bridge(cfg)
    t, x, u, absorbed = _kernel_args(cfg)
    tr = br.transition(rb, t, x, u, absorbed=absorbed)
    path = _output_path(cfg, f"kernel.{cfg.fmt}")
    if cfg.fmt == "json":
        path.write_text(tr.to_json() + "\n")
    else:
        c = tr.cropped()
        with open(path, "w") as fh:
            fh.write("kind,y,value\n")
            fh.write(f"atom,{_fmt(c.z)},{_fmt(c.atom_mass)}\n")
            for y, d in zip(c.grid, c.density):
                fh.write(f"density,{_fmt(y)},{_fmt(d)}\n")
    return EXIT_OK, f"kernel ({t:g}, {x:g}) -> {u:g}: atom {tr.atom_mass:.6g}, total {tr.total_mass():.8f} -> {path}"


def cmd_expect(cfg: CliConfig) -> tuple[int, str]:
    rb = _random_bridge(cfg)
    t, x, u, absorbed = _kernel_args(cfg)
    name = cfg.option("g", "identity")
    if cfg.option("joint"):
        if absorbed:
            raise UsageError("--joint needs an unabsorbed observation")
        if name not in G2_FUNCTIONS:
            raise UsageError(f"--g for --joint must be one of {sorted(G2_FUNCTIONS)}")
        value = br.joint_conditional(rb, t, x, u, G2_FUNCTIONS[name])
        what = f"E[{name}(tau, zeta_u) | zeta_t]"
    else:
        if name not in G_FUNCTIONS:
            raise UsageError(f"--g must be one of {sorted(G_FUNCTIONS)}")
        value = br.conditional_expectation(rb, t, x, u, G_FUNCTIONS[name], absorbed=absorbed)
        what = f"E[{name}(zeta_u) | zeta_t]"
    path = _output_path(cfg, f"expect.{cfg.fmt}")
    if cfg.fmt == "json":
        path.write_text(json.dumps({"quantity": what, "t": t, "x": x, "u": u, "value": value}) + "\n")
    else:
        path.write_text(f"quantity,t,x,u,value\n{what},{_fmt(t)},{_fmt(x)},{_fmt(u)},{_fmt(value)}\n")
    return EXIT_OK, f"{what} = {value!r} -> {path}"


def cmd_phi(cfg: CliConfig) -> tuple[int, str]:
    rb = _random_bridge(cfg)
    t, x = cfg.option("t"), cfg.option("x")
    rs = cfg.option("r") or tuple(rb.length_law.support_nodes())
    if t is None or x is None:
        raise UsageError("--t and --x are required")
    vals = [br.phi(rb, r, t, x) for r in rs]
    path = _output_path(cfg, f"phi.{cfg.fmt}")
    if cfg.fmt == "json":
        path.write_text(json.dumps({"t": t, "x": x, "r": list(rs), "phi": vals}) + "\n")
    else:
        path.write_text("r,phi\n" + "".join(f"{_fmt(r)},{_fmt(v)}\n" for r, v in zip(rs, vals)))
    return EXIT_OK, f"phi at t={t:g}, x={x:g} for {len(rs)} lengths -> {path}"


def cmd_verify(cfg: CliConfig) -> tuple[int, str]:
    seed = 42 if cfg.seed is None else cfg.seed
    report = verification.run_all(seed=seed, n_paths=cfg.option("n_paths") or 10_000)
    path = _output_path(cfg, "verify_report.json")
    report.write(path, timings=bool(cfg.option("timings")))
    return (EXIT_OK if report.passed else EXIT_FAILED), f"verify seed={seed}: {report.summary()} -> {path}"


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_output(p: argparse.ArgumentParser, formats=("csv", "json")) -> None:
    p.add_argument("--out", help=f"output file (default: ${OUTPUT_DIR_ENV} or the current directory)")
    p.add_argument("--format", dest="fmt", choices=formats, default=formats[0])


def _add_rb(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help='e.g. "cauchy", "stable:alpha=1.5", "nig"')
    p.add_argument("--z", type=float, default=0.0, help="bridge endpoint")
    p.add_argument("--tau", required=True, help="length law JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levybridge", description="Lévy bridges of deterministic and random length.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("density", help="tabulate f_t on [-x_max, x_max]")
    p.add_argument("--model", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x-max", type=float, required=True)
    p.add_argument("--cutoff", type=float, help="frequency cutoff U (default: tail search)")
    p.add_argument("--grid-points", type=int, help="FFT length over one period")
    _add_output(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("bridge-sample", help="paths of the bridge of fixed length r")
    p.add_argument("--model", required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--t-max", type=float, help="grid end (default: r)")
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--n-paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _add_output(p)
    p.set_defaults(func=cmd_bridge_sample)

    p = sub.add_parser("rlb-sample", help="paths of the bridge of random length")
    _add_rb(p)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--n-paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_rlb_sample)

    p = sub.add_parser("posterior", help="law of tau given observations")
    _add_rb(p)
    p.add_argument("--obs", required=True, help='"t1:x1,t2:x2,..." with the token z for absorbed values')
    _add_output(p)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("kernel", help="mixed transition law of zeta_u given zeta_t = x")
    _add_rb(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--absorbed", action="store_true", help="the state at t is the absorbed value z")
    _add_output(p, ("json", "csv"))
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("expect", help="conditional expectation of g(zeta_u), or of g(tau, zeta_u) with --joint")
    _add_rb(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--absorbed", action="store_true")
    p.add_argument("--g", default="identity", help=f"one of {sorted(set(G_FUNCTIONS) | set(G2_FUNCTIONS))}")
    p.add_argument("--joint", action="store_true")
    _add_output(p)
    p.set_defaults(func=cmd_expect)

    p = sub.add_parser("phi", help="likelihood ratio phi(r, t, x)")
    _add_rb(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--r", type=float, nargs="+", help="lengths (default: support of the length law)")
    _add_output(p)
    p.set_defaults(func=cmd_phi)

    p = sub.add_parser("verify", help="run every numeric self-check")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-paths", type=int, default=10_000)
    p.add_argument("--timings", action="store_true", help="include per-check runtimes in the report")
    p.add_argument("--out", help="report file (default: verify_report.json)")
    p.set_defaults(func=cmd_verify, fmt="json")
    return parser


DISPATCH = {
    "density": cmd_density,
    "bridge-sample": cmd_bridge_sample,
    "rlb-sample": cmd_rlb_sample,
    "posterior": cmd_posterior,
    "kernel": cmd_kernel,
    "expect": cmd_expect,
    "phi": cmd_phi,
    "verify": cmd_verify,
}


def run(cfg: CliConfig) -> int:
    """Execute a parsed configuration; returns the exit code."""
    try:
        code, line = DISPATCH[cfg.subcommand](cfg)
    except (UsageError, ValueError) as exc:
        # parameter-domain, time-order and observation errors are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LevyBridgeError as exc:
        print(f"numeric error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(line)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return run(config_from_namespace(ns))


if __name__ == "__main__":
    sys.exit(main())

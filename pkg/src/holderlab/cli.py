"""Command-line harness: ``holderlab <command> [--config FILE | --preset NAME] [options]``.

Outputs
-------
CSV files start with ``#`` comment lines (seed, config hash, and any
summary values), then a mandatory header row:

- ``profile``: k, r_k, osc, stderr, points_used
- ``perron``: k, A_k, partial_sum, partial_product
- ``check-geometry``: condition, k, r_k, estimate, stderr, pass, detail

Floats are written with ``repr`` and lines end in LF. JSON output uses sorted keys and two-space
indentation. ``solve`` writes one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from holderlab import _streams, geometry, kernels, perron, regularity, solvers
from holderlab.config import COMMANDS, ConfigError, ExperimentConfig, load_config, load_preset, preset_names


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _domain(cfg: ExperimentConfig) -> geometry.DomainOracle:
    spec = cfg.section("domain")
    if "kind" not in spec:
        raise ConfigError("missing required key [domain] kind", source=cfg.source)
    kind = spec.pop("kind")
    dim = spec.pop("dim", 2)
    return geometry.builtin_domain(kind, dim, **spec)


def _prefixed(section: dict, prefix: str) -> dict:
    return {k[len(prefix) + 1 :]: v for k, v in section.items() if k.startswith(prefix + ".")}


def _data(cfg: ExperimentConfig) -> tuple[solvers.BoundaryData, solvers.SourceTerm]:
    sec = cfg.section("data")
    g = solvers.builtin_data(sec.get("g", "zero"), **_prefixed(sec, "g"))
    f = solvers.builtin_source(sec.get("f", "zero"), **_prefixed(sec, "f"))
    return g, f


def _sequence(cfg: ExperimentConfig) -> geometry.QuasiGeometricSequence:
    sec = cfg.section("sequence")
    if "radii" in sec:
        if "tau" in sec or "count" in sec:
            raise ConfigError("[sequence] takes either radii or tau/count", source=cfg.source)
        return geometry.QuasiGeometricSequence.from_radii(sec["radii"])
    if "tau" not in sec:
        raise ConfigError("missing [sequence] tau (or radii)", source=cfg.source)
    return geometry.make_geometric_sequence(sec["tau"], sec.get("count", 8))


def _solver(cfg: ExperimentConfig) -> regularity.SolverConfig:
    sec = cfg.section("solver")
    return regularity.SolverConfig(
        method=sec.get("method", "wos"),
        shell_epsilon=sec.get("epsilon", 1e-6),
        max_steps=sec.get("max_steps", 20_000),
        s=sec.get("s"),
    )


def _budget(cfg: ExperimentConfig) -> kernels.ExponentBudget:
    sec = cfg.section("constants")
    for key in ("nu", "tau1", "tau2", "n"):
        if key not in sec:
            raise ConfigError(f"missing required key [constants] {key}", source=cfg.source)
    return kernels.exponent_budget(
        sec["nu"], sec["tau1"], sec["tau2"], sec["n"],
        p=sec.get("p", math.inf), s=sec.get("s"), alpha_data=sec.get("alpha_data", math.inf),
        C_aux=sec.get("c_aux", 0.0), M=sec.get("m", 1.0),
        condition=sec.get("condition", "h2"), cap_angle=sec.get("cap_angle"),
    )


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _csv_text(comments: dict, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for k, v in comments.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _meta(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.seed, "config_hash": cfg.hash()}


# ---------------------------------------------------------------------------
# commands; each returns (text, exit_status)
# ---------------------------------------------------------------------------


def cmd_constants(cfg: ExperimentConfig) -> tuple[str, int]:
    budget = _budget(cfg)
    return _dump_json({**_meta(cfg), "budget": budget.to_dict()}), 0


def cmd_solve(cfg: ExperimentConfig) -> tuple[str, int]:
    domain = _domain(cfg)
    g, f = _data(cfg)
    solver = _solver(cfg)
    paths = cfg.require("solver", "paths")
    points = cfg.require("points", "x")
    lines = []
    for i, x in enumerate(points):
        if solver.method == "wos":
            res = solvers.wos_estimate(
                domain, g, f, x, solver.shell_epsilon, paths, cfg.seed, max_steps=solver.max_steps, stream=(i,)
            )
        else:
            if not f.is_zero:
                raise ConfigError("the fractional solver takes no source term", source=cfg.source)
            res = solvers.wob_fractional_estimate(
                domain, g, x, solver.s, paths, cfg.seed, max_steps=solver.max_steps, stream=(i,)
            )
        row = {**_meta(cfg), "index": i, "x": list(x), "method": solver.method, **res.to_dict()}
        lines.append(json.dumps(_jsonable(row), sort_keys=True))
    return "\n".join(lines) + "\n", 0


def _profile(cfg: ExperimentConfig) -> regularity.OscillationProfile:
    domain = _domain(cfg)
    g, f = _data(cfg)
    return regularity.oscillation_profile(
        _solver(cfg), domain, g, f, _sequence(cfg),
        cfg.require("solver", "points"), cfg.require("solver", "paths"), cfg.seed,
        x0=cfg.get("solver", "x0"),
    )


def cmd_profile(cfg: ExperimentConfig) -> tuple[str, int]:
    prof = _profile(cfg)
    comments = {**_meta(cfg), "x0": " ".join(repr(c) for c in prof.x0)}
    try:
        fit = regularity.fit_holder(prof)
        comments.update(fitted_alpha=repr(fit.alpha), fitted_C=repr(fit.C), r_squared=repr(fit.r_squared))
    except ValueError as exc:
        comments["fit"] = str(exc)
    if prof.skipped:
        comments["skipped_scales"] = " ".join(map(str, prof.skipped))
    rows = [[e.k, e.r_k, e.osc, e.stderr, e.points_used] for e in prof.entries]
    return _csv_text(comments, ["k", "r_k", "osc", "stderr", "points_used"], rows), 0


def cmd_certify(cfg: ExperimentConfig) -> tuple[str, int]:
    budget = _budget(cfg)
    prof = _profile(cfg)
    sec = cfg.section("certify")
    cert = regularity.certify_decay(
        prof, budget, sec.get("slack_sigmas", 3.0), checks=sec.get("checks", ("holder", "geometric"))
    )
    return _dump_json({**_meta(cfg), "certificate": cert.to_dict()}), 0 if cert.verdict else 1


def cmd_check_geometry(cfg: ExperimentConfig) -> tuple[str, int]:
    """One CSV row per (condition, scale).

    h1, h3: ``estimate`` in the condition's units, ``pass`` when positive.
    h2: ``estimate`` is nu when a witness cap was found (0 otherwise) and
    ``detail`` holds the witness direction. h4: running sums and their
    propagated errors, ``pass`` when the k-th term is positive.
    """
    domain = _domain(cfg)
    seq = _sequence(cfg)
    sec = cfg.section("geometry")
    samples = sec.get("samples", 100_000)
    conditions = sec.get("conditions", ("h1", "h2", "h3", "h4"))
    unknown = set(conditions) - {"h1", "h2", "h3", "h4"}
    if unknown:
        raise ConfigError(f"unknown conditions {sorted(unknown)}", source=cfg.source)
    rows: list[list] = []
    if "h1" in conditions:
        for k, r in enumerate(seq.radii):
            est = geometry.h1_fraction(domain, r, samples, cfg.seed, stream=(k,))
            rows.append(["h1", k, r, est.estimate, est.stderr, int(est.estimate > 0), ""])
    if "h2" in conditions:
        nu = sec.get("nu")
        if nu is None:
            raise ConfigError("h2 needs [geometry] nu", source=cfg.source)
        found = geometry.check_h2(
            domain, seq, nu, sec.get("angular_grid", 360), cfg.seed, cap_samples=sec.get("cap_samples", 128)
        )
        for w in found:
            ok = isinstance(w, geometry.H2Witness)
            detail = " ".join(repr(c) for c in w.center) if ok else f"{w.directions_tested} directions tested"
            rows.append(["h2", w.scale_index, w.radius, nu if ok else 0.0, 0.0, int(ok), detail])
    if "h3" in conditions:
        for k, (r0, r1) in enumerate(zip(seq.radii, seq.radii[1:])):
            est = geometry.h3_fraction(domain, r0, r1, samples, cfg.seed, stream=(k,))
            rows.append(["h3", k, r0, est.estimate, est.stderr, int(est.estimate > 0), ""])
    if "h4" in conditions:
        for row in geometry.h4_partial_sums(domain, seq, samples, cfg.seed):
            rows.append(["h4", row.k, row.r_k, row.partial_sum, row.partial_stderr, int(row.term > 0), ""])
    comments = {**_meta(cfg), "domain": " ".join(f"{k}={v}" for k, v in domain.describe().items())}
    header = ["condition", "k", "r_k", "estimate", "stderr", "pass", "detail"]
    return _csv_text(comments, header, rows), 0


def _read_perron_csv(path: str) -> tuple[list[float], list[float]]:
    a, omega = [], []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or [c.strip() for c in rows[0]] != ["k", "a_k", "omega_k"]:
        raise ConfigError(f"{path}: expected header k,a_k,omega_k", 1, path)
    for i, row in enumerate(rows[1:]):
        try:
            k, ak, wk = int(row[0]), float(row[1]), float(row[2])
        except (ValueError, IndexError):
            raise ConfigError(f"bad row {row}", None, path) from None
        if k != i:
            raise ConfigError(f"rows must be k = 0, 1, 2, ...; got k={k} at position {i}", None, path)
        a.append(ak)
        omega.append(wk)
    return a, omega


def cmd_perron(cfg: ExperimentConfig) -> tuple[str, int]:
    sec = cfg.section("perron")
    K = sec.get("k", 200)
    source = sec.get("source", "family")
    comments = dict(_meta(cfg))
    if source == "family":
        a, omega = perron.family(
            sec.get("family", "harmonic"), K, exponent=sec.get("exponent", 0.5), ratio=sec.get("ratio", 0.5)
        )
    elif source == "csv":
        if "input" not in sec:
            raise ConfigError("[perron] source = csv needs input", source=cfg.source)
        a, omega = _read_perron_csv(sec["input"])
    elif source == "h4":
        rows = geometry.h4_partial_sums(_domain(cfg), _sequence(cfg), sec.get("samples", 100_000), cfg.seed)
        a = [r.term for r in rows]
        omega = [r.r_k ** sec.get("exponent", 0.5) for r in rows]
    else:
        raise ConfigError(f"unknown [perron] source {source!r}", source=cfg.source)
    K = min(K, len(a) - 1, len(omega) - 1)
    if "c0" in sec:
        c0 = sec["c0"]
    elif "tau2" in cfg.section("constants"):
        c0 = perron.default_c0(cfg.require("constants", "tau2"), cfg.get("constants", "n", 2))
    else:
        raise ConfigError("[perron] needs c0 (or [constants] tau2 for the default)", source=cfg.source)
    inp = perron.ModulusInput(tuple(a), tuple(omega), c0, sec.get("a0", 1.0))
    res = perron.modulus_recursion(inp, K)
    sums, prods = perron.sum_product_check(a, c0, K)
    comments.update(c0=repr(c0), clamped=" ".join(map(str, res.clamped)) or "none")
    rows = [[k, float(res.A[k]), float(sums[k]), float(prods[k])] for k in range(K + 1)]
    return _csv_text(comments, ["k", "A_k", "partial_sum", "partial_product"], rows), 0


HANDLERS = {
    "check-geometry": cmd_check_geometry,
    "constants": cmd_constants,
    "solve": cmd_solve,
    "profile": cmd_profile,
    "certify": cmd_certify,
    "perron": cmd_perron,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holderlab", description="Boundary regularity experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "run"):
        p = sub.add_parser(name, help="run the command named in the config" if name == "run" else None)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="path to an INI config file")
        src.add_argument("--preset", help="name of a bundled preset")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--paths", type=int, help="shorthand for --set solver.paths=N")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--strict", action="store_true", help="exit nonzero when a certificate fails")
    sub.add_parser("presets", help="list bundled presets")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be section.key=value", source="--set")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    if args.seed is not None:
        cfg.set("run.seed", str(args.seed))
    if args.threads is not None:
        cfg.set("run.threads", str(args.threads))
    if args.paths is not None:
        cfg.set("solver.paths", str(args.paths))
    if args.out is not None:
        cfg.set("output.path", args.out)
    command = args.command
    if command == "run":
        command = cfg.command
        if command is None:
            raise ConfigError("config has no [run] command", source=cfg.source)
    elif cfg.command is not None and cfg.command != command:
        raise ConfigError(f"config is for {cfg.command!r}, not {command!r}", source=cfg.source)
    cfg.values.setdefault("run", {})["command"] = command
    return cfg


def run(cfg: ExperimentConfig) -> tuple[str, int]:
    """Execute a validated config; returns the output text and the exit status."""
    threads = cfg.get("run", "threads", 1)
    if threads < 1:
        raise ConfigError("threads must be >= 1", source=cfg.source)
    previous = _streams.get_default_workers()
    _streams.set_default_workers(threads)
    try:
        return HANDLERS[cfg.command](cfg)
    finally:
        _streams.set_default_workers(previous)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in preset_names():
            print(name)
        return 0
    try:
        cfg = resolve_config(args)
        text, status = run(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"holderlab: error: {exc}", file=sys.stderr)
        return 2
    out = cfg.get("output", "path")
    if out:
        Path(out).write_bytes(text.encode())
    else:
        sys.stdout.write(text)
    if args.strict and args.command in ("certify", "run") and cfg.command == "certify":
        return status
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

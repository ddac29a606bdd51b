"""Command line front end.

Every run resolves a :class:`RunConfig` from defaults, an optional JSON
config file and command line flags (flags win), executes one computation and
writes ``manifest.json`` next to its result files.  ``momentflow rerun
MANIFEST`` repeats a run from its manifest.

Exit status: 0 on success, 1 on usage errors, 2 when a certificate or
verification check fails.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, birkhoff, boundary, finite_flow, jsonio, strata, verify
from .errors import MomentFlowError, NoConvergenceError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK = 2

SUBCOMMANDS = ("flow-finite", "flow-boundary", "strata", "birkhoff", "verify")
FORMATS = ("json", "jsonl", "csv")

DEFAULTS = {
    "flow-finite": {
        "radii": [2.0, 1.0],
        "tol": 1e-10,
        "eps_grad": 1e-8,
        "t_max": 1e4,
        "method": "rk45",
        "trajectories": 1,
    },
    "flow-boundary": {
        "length": 1.0,
        "modes": 32,
        "xi": 0.0,
        "time": 40.0,
        "samples": 401,
        "support": None,
        "init_file": None,
    },
    "strata": {"g": 2, "lambda_max": None, "trunc": None},
    "birkhoff": {
        "loop_file": None,
        "n": 2,
        "degree": 2,
        "tol": 1e-10,
        "residual_tol": birkhoff.RESIDUAL_TOL,
    },
    "verify": {},
}

TOP_KEYS = {"subcommand", "seed", "format", "workers", "output_dir", "params"}

# flag name -> (parameter key, owning subcommands, parser)
MODULE_FLAGS = {
    "--g": ("g", ("strata",), int),
    "--lambda-max": ("lambda_max", ("strata",), int),
    "--trunc": ("trunc", ("strata",), int),
    "--radii": ("radii", ("flow-finite",), lambda s: [float(x) for x in s.split(",")]),
    "--tol": ("tol", ("flow-finite", "birkhoff"), float),
    "--eps-grad": ("eps_grad", ("flow-finite",), float),
    "--t-max": ("t_max", ("flow-finite",), float),
    "--method": ("method", ("flow-finite",), str),
    "--trajectories": ("trajectories", ("flow-finite",), int),
    "--length": ("length", ("flow-boundary",), float),
    "--modes": ("modes", ("flow-boundary",), int),
    "--xi": ("xi", ("flow-boundary",), float),
    "--time": ("time", ("flow-boundary",), float),
    "--samples": ("samples", ("flow-boundary",), int),
    "--support": ("support", ("flow-boundary",), int),
    "--init-file": ("init_file", ("flow-boundary",), str),
    "--loop-file": ("loop_file", ("birkhoff",), str),
    "--n": ("n", ("birkhoff",), int),
    "--degree": ("degree", ("birkhoff",), int),
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    format: str = "json"
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        unknown = set(self.params) - set(DEFAULTS[self.subcommand])
        if unknown:
            raise UsageError(f"unknown {self.subcommand} parameter(s): {', '.join(sorted(unknown))}")
        merged = copy.deepcopy(DEFAULTS[self.subcommand])
        merged.update(self.params)
        self.params = merged
        if not (0 <= int(self.seed) < 2**64):
            raise UsageError("--seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)
        if self.format not in FORMATS:
            raise UsageError(f"--format must be one of {', '.join(FORMATS)}")
        if int(self.workers) < 1:
            raise UsageError("--workers must be positive")
        self.workers = int(self.workers)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - TOP_KEYS
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "subcommand" not in d:
            raise UsageError("config is missing 'subcommand'")
        kw = {k: v for k, v in d.items() if k in TOP_KEYS}
        return cls(**kw)

    def manifest(self):
        # the output directory is where the manifest lives, not part of the run
        return {
            "tool": "momentflow",
            "version": __version__,
            "seed": self.seed,
            "config": {
                "subcommand": self.subcommand,
                "seed": self.seed,
                "format": self.format,
                "workers": self.workers,
                "params": self.params,
            },
        }


def derive_seed(master, index):
    """Per-point seed from a master seed by counter-mode mixing."""
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# Runners.  Each returns (exit status, summary dict) and writes its files.


def _write_series(cfg, out, stem, header, rows, dict_rows):
    if cfg.format == "csv":
        jsonio.write_csv(out / f"{stem}.csv", header, rows)
    elif cfg.format == "jsonl":
        jsonio.write_jsonl(out / f"{stem}.jsonl", dict_rows)
    else:
        jsonio.write_json(out / f"{stem}.json", list(dict_rows))


def run_flow_finite(cfg, out):
    p = cfg.params
    fconf = finite_flow.OrbitProductConfig(
        tuple(p["radii"]), p["tol"], p["eps_grad"], p["t_max"], method=p["method"]
    )
    summaries = []
    status = EXIT_OK
    for j in range(int(p["trajectories"])):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(j,)))
        init = finite_flow.OrbitProductState.random(fconf.radii, rng)
        try:
            rec = finite_flow.integrate_flow(fconf, init)
        except NoConvergenceError as exc:
            rec = exc.record
            status = EXIT_CHECK
        for fn in (finite_flow.classify_rate, finite_flow.estimate_lojasiewicz):
            try:
                fn(rec)
            except MomentFlowError:
                pass
        summ = rec.summary()
        summ["energy_identity_ok"] = summ["energy_defect"] <= 10 * fconf.tol
        if not summ["energy_identity_ok"] or not rec.converged:
            status = EXIT_CHECK
        summaries.append(summ)
        rows = [(float(t), float(f), float(g)) for t, f, g in zip(rec.t, rec.f, rec.grad_norm)]
        _write_series(cfg, out, f"trajectory_{j:03d}", ("t", "f", "grad_norm"), rows, list(rec.samples()))
    summary = {"trajectories": summaries}
    if summaries:
        summary["f_limit"] = summaries[0]["f_limit"]
    return status, summary


def run_flow_boundary(cfg, out):
    p = cfg.params
    model = boundary.CylinderModel(p["length"], p["modes"], p["xi"])
    op = boundary.p_operators(model)
    if p["init_file"]:
        try:
            B0 = boundary.BoundaryField.from_nonzero(model, jsonio.read_json(p["init_file"]))
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"--init-file: {exc}") from exc
    else:
        B0 = boundary.BoundaryField.random(model, np.random.default_rng(cfg.seed), support=p["support"])
    traj = boundary.flow_linear(model, B0, T=p["time"], n_samples=p["samples"], operator=op)
    limit = boundary.critical_limit(model, B0)
    energy = traj.energy
    summary = {
        "twist": model.twist,
        "kernel_dim": op.kernel_dim(),
        "expected_kernel_dim": boundary.expected_kernel_dim(model),
        "symmetry_defect": op.symmetry_defect(),
        "min_eigenvalue": float(op.eigenvalues().min()),
        "smallest_nonzero_eigenvalue": op.smallest_nonzero(),
        "energy_initial": float(energy[0]),
        "energy_final": float(energy[-1]),
        "monotone": bool(np.all(np.diff(energy) <= 0)),
        "distance_to_limit": float(np.abs(traj.B_minus[-1] - limit.coeffs).max()),
        "limit": limit.nonzero(),
    }
    failures = []
    if summary["symmetry_defect"] > 1e-12:
        failures.append("P_+ + P_- not symmetric")
    if summary["min_eigenvalue"] < -1e-10:
        failures.append("P_+ + P_- has a negative eigenvalue")
    if summary["kernel_dim"] != summary["expected_kernel_dim"]:
        failures.append("kernel dimension differs from the twist rule")
    if not summary["monotone"]:
        failures.append("energy increased")
    summary["failures"] = failures
    jsonio.write_json(out / "operator.json", boundary.operator_dump(model))
    rows = [(float(t), float(e)) for t, e in zip(traj.t, energy)]
    _write_series(cfg, out, "trajectory", ("t", "energy"), rows, list(traj.samples()))
    return (EXIT_CHECK if failures else EXIT_OK), summary


def run_strata(cfg, out):
    p = cfg.params
    res = strata.poincare_reduced(p["g"], p["lambda_max"], p["trunc"])
    summary = res.as_dict()
    summary["lambda_max"] = res.lambda_max
    summary["trunc"] = res.order
    summary["series"] = list(res.series.coeffs)
    summary["failures"] = [
        {"check": c, "degree": d, "detail": msg} for c, d, msg in res.certificate.failures
    ]
    if cfg.format == "csv":
        jsonio.write_csv(out / "betti.csv", ("degree", "betti"), list(enumerate(res.betti)))
    else:
        jsonio.write_json(out / "betti.json", res.as_dict())
    return (EXIT_OK if res.certificate.ok else EXIT_CHECK), summary


def run_birkhoff(cfg, out):
    p = cfg.params
    if p["loop_file"]:
        try:
            loop = birkhoff.LaurentLoop.from_json(jsonio.read_json(p["loop_file"]))
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"--loop-file: {exc}") from exc
    else:
        loop = birkhoff.LaurentLoop.random(p["n"], p["degree"], np.random.default_rng(cfg.seed))
    fact = birkhoff.factorize(loop, tol=p["tol"])
    w = birkhoff.winding_det(loop)
    pos, neg = fact.support_defects()
    summary = {
        "indices": list(fact.indices),
        "winding": w,
        "residual": fact.residual,
        "support_defect_minus": pos,
        "support_defect_plus": neg,
        "normalization_defect": fact.normalization_defect(),
        "label": {
            "trace": str(birkhoff.double_coset_label(fact.indices).trace),
            "sl_part": [str(x) for x in birkhoff.double_coset_label(fact.indices).sl_part],
        },
    }
    failures = []
    if not fact.residual <= p["residual_tol"]:
        failures.append("reconstruction residual above tolerance")
    if sum(fact.indices) != w:
        failures.append("index sum differs from winding of det")
    if max(pos, neg) > 1e-10:
        failures.append("factor support")
    summary["failures"] = failures
    jsonio.write_json(out / "loop.json", loop.to_json())
    jsonio.write_json(out / "factorization.json", fact.to_json())
    return (EXIT_CHECK if failures else EXIT_OK), summary


def run_verify(cfg, out):
    checks = verify.run_all()
    summary = {"checks": [c.as_dict() for c in checks]}
    jsonio.write_json(out / "verify.json", summary)
    return (EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK), summary


RUNNERS = {
    "flow-finite": run_flow_finite,
    "flow-boundary": run_flow_boundary,
    "strata": run_strata,
    "birkhoff": run_birkhoff,
    "verify": run_verify,
}


def run(cfg, *, echo=True):
    """Execute ``cfg``; returns ``(exit status, summary)``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonio.write_json(out / "manifest.json", cfg.manifest())
    try:
        status, summary = RUNNERS[cfg.subcommand](cfg, out)
    except UsageError:
        raise
    except MomentFlowError as exc:
        status, summary = EXIT_CHECK, {"error": type(exc).__name__, "message": str(exc)}
    jsonio.write_json(out / "summary.json", summary)
    if echo:
        _echo(cfg, status, summary)
    return status, summary


def _echo(cfg, status, summary):
    print(f"{cfg.subcommand}: {'ok' if status == EXIT_OK else 'FAILED'}")
    for key in ("betti", "f_limit", "indices", "winding", "residual", "kernel_dim", "distance_to_limit"):
        if key in summary:
            print(f"  {key}: {summary[key]}")
    for c in summary.get("checks", []):
        print(f"  {'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (limit {c['limit']:.1e})")
    for f in summary.get("failures", []):
        if isinstance(f, dict):
            where = "" if f["degree"] is None else f" at degree {f['degree']}"
            f = f"certificate check {f['check']}{where}: {f['detail']}"
        print(f"  failed: {f}")
    if "error" in summary:
        print(f"  {summary['error']}: {summary['message']}")


# Sweeps


def _sweep_point(args):
    cfg_dict, out = args
    cfg = RunConfig.from_dict(cfg_dict)
    cfg.output_dir = out
    try:
        status, _ = run(cfg, echo=False)
    except Exception as exc:  # report, do not take the sweep down
        return EXIT_CHECK, repr(exc)
    return status, ""


def sweep(base, grid, *, output_dir, workers=1):
    """Run ``base`` at every point of the Cartesian ``grid`` of parameter values."""
    if not grid:
        return EXIT_OK, []
    unknown = set(grid) - set(DEFAULTS[base.subcommand])
    if unknown:
        raise UsageError(f"unknown grid parameter(s): {', '.join(sorted(unknown))}")
    keys = sorted(grid)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    points = []
    for i, values in enumerate(itertools.product(*(grid[k] for k in keys))):
        params = dict(base.params)
        params.update(zip(keys, values))
        cfg = RunConfig(base.subcommand, params, derive_seed(base.seed, i), base.format, 1)
        d = cfg.manifest()["config"]
        jobs.append((d, str(out / f"point_{i:04d}")))
        points.append({"index": i, "params": dict(zip(keys, values)), "seed": cfg.seed})
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    index_path = out / "sweep_index.jsonl"
    index_path.write_text("")
    failed = []
    with open(index_path, "a", encoding="utf-8") as fh:
        for pt, (status, err) in zip(points, results):
            pt = dict(pt, status=status, directory=f"point_{pt['index']:04d}")
            if err:
                pt["error"] = err
            if status != EXIT_OK:
                failed.append(pt)
            fh.write(jsonio.dumps(pt) + "\n")
    return (EXIT_CHECK if failed else EXIT_OK), failed


# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--workers", type=int)


def build_parser():
    parser = _Parser(prog="momentflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        _add_common(p)
        for flag, (key, owners, typ) in MODULE_FLAGS.items():
            if name in owners:
                p.add_argument(flag, dest=key, type=typ)
    sp = sub.add_parser("sweep", help="run a config over a parameter grid")
    _add_common(sp)
    sp.add_argument("--grid", required=True, help="JSON object mapping parameter to list of values")
    rp = sub.add_parser("rerun", help="repeat a run from its manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", required=True)
    return parser


def _load_config(path):
    try:
        data = jsonio.read_json(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"--config: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("--config: expected a JSON object")
    if "config" in data and "tool" in data:  # a manifest
        data = data["config"]
    return data


def resolve(ns, subcommand):
    data = _load_config(ns.config) if ns.config else {}
    if data.get("subcommand", subcommand) != subcommand:
        raise UsageError(f"config is for {data['subcommand']!r}, not {subcommand!r}")
    data["subcommand"] = subcommand
    if not isinstance(data.get("params", {}), dict):
        raise UsageError("config 'params' must be an object")
    params = dict(data.get("params", {}))
    for flag, (key, owners, _) in MODULE_FLAGS.items():
        if subcommand in owners and getattr(ns, key, None) is not None:
            params[key] = getattr(ns, key)
    data["params"] = params
    for key in ("seed", "format", "workers"):
        if getattr(ns, key, None) is not None:
            data[key] = getattr(ns, key)
    if ns.out is not None:
        data["output_dir"] = ns.out
    return RunConfig.from_dict(data)


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a subcommand is required")
        if ns.command == "rerun":
            data = _load_config(ns.manifest)
            cfg = RunConfig.from_dict(dict(data, output_dir=ns.out))
            status, _ = run(cfg)
            return status
        if ns.command == "sweep":
            if not ns.config:
                raise UsageError("sweep needs --config naming the base run")
            base_data = _load_config(ns.config)
            base = resolve(ns, base_data.get("subcommand", ""))
            try:
                grid = jsonio.read_json(ns.grid)
            except (OSError, ValueError) as exc:
                raise UsageError(f"--grid: {exc}") from exc
            if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
                raise UsageError("--grid must map parameter names to lists")
            status, failed = sweep(base, grid, output_dir=base.output_dir, workers=base.workers)
            n = math.prod(len(v) for v in grid.values()) if grid else 0
            print(f"sweep: {n} point(s), {len(failed)} failed")
            for f in failed:
                print(f"  failed point {f['index']}: {f['params']}")
            return status
        cfg = resolve(ns, ns.command)
        status, _ = run(cfg)
        return status
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

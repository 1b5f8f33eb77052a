"""Command-line front end.

Exit status: 0 on success, 1 when a solver or a verification check fails
(outputs of the tasks that completed are kept), 2 on usage or configuration
errors.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import appropriation as ap
from . import backbone as bb
from . import export, oracle, quadrature
from .config import RunConfig, load_config, load_model, load_shapes, parse_config
from .continuation import ContinuationConfig, ContinuationError
from .model import ConfigurationError

log = logging.getLogger("nnm_approp")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# oracle thresholds applied by ``verify``
PERIODICITY_TOL = 1e-5
ENERGY_TOL = 1e-6


@dataclass
class TaskResult:
    """Output of one task: tables to write, plots to draw and a status."""

    name: str
    tables: list = field(default_factory=list)  # (filename, columns, rows, sidecar dict)
    plots: list = field(default_factory=list)  # (filename, callable(path))
    ok: bool = True
    error: str = ""
    summary: dict = field(default_factory=dict)


def _slug(*parts) -> str:
    return "_".join(str(p).replace(" ", "-").replace("/", "-") for p in parts if p != "")


def _sidecar(cfg: RunConfig, kind: str, **extra) -> dict:
    return {"kind": kind, "model": cfg.model.to_dict(), "shapes": cfg.shapes.to_dict(),
            "harmonics": cfg.harmonics, **extra}


def _backbone(cfg: RunConfig, nnm: int, method: str = "harmonic_balance"):
    p = bb.phase_flag(nnm)
    if method == "analytic":
        return bb.solve_analytic_backbone(cfg.model, p, cfg.omega_range, config=cfg.continuation)
    return bb.solve_numeric_backbone(cfg.model, p, cfg.continuation, H=cfg.harmonics,
                                     Omega_range=cfg.omega_range)


def _curve(label, branch):
    t = bb.backbone_table(branch)
    return (label, t[:, 0] / (2 * np.pi), t[:, 1], t[:, 2])


def _locus_curve(label, branch):
    cols, rows = quadrature.locus_table(branch, [])
    i1 = cols.index("U1")
    return (label, rows[:, 0], rows[:, i1], rows[:, i1 + 1])


def task_backbone(cfg: RunConfig, opts: dict) -> TaskResult:
    nnm = opts["nnm"]
    method = opts.get("method", "harmonic_balance")
    branch = _backbone(cfg, nnm, method)
    name = opts.get("name") or _slug("backbone", f"nnm{nnm}", "analytic" if method == "analytic" else "")
    cols, rows = export.branch_table(branch)
    res = TaskResult(name)
    res.tables.append((f"{name}.csv", cols, rows,
                       _sidecar(cfg, "backbone", nnm=nnm, method=method, termination=branch.termination)))
    res.plots.append((f"{name}.svg", lambda path: _plots().frequency_amplitude(
        [_curve(f"NNM{nnm}", branch)], path, f"NNM{nnm} backbone")))
    res.summary = {"points": len(branch), "termination": branch.termination,
                   "first_frequency_hz": float(rows[0, 0])}
    return res


def task_frf(cfg: RunConfig, opts: dict) -> TaskResult:
    locs = opts["force_locations"]
    amps = opts["force_amplitudes"]
    if len(locs) != len(amps):
        raise ConfigurationError("frf: one amplitude per force location required")
    branch = quadrature.forced_response(cfg.model, cfg.shapes, locs, amps, cfg.omega_range,
                                        H=cfg.harmonics, config=cfg.continuation)
    name = opts.get("name") or _slug("frf", *[cfg.shapes.locations[cfg.shapes.index(j)] for j in locs])
    cols, rows = export.branch_table(branch)
    res = TaskResult(name)
    res.tables.append((f"{name}.csv", cols, rows,
                       _sidecar(cfg, "forced_response", locations=list(map(str, locs)),
                                amplitudes=list(amps), termination=branch.termination)))
    res.plots.append((f"{name}.svg", lambda path: _plots().frequency_amplitude(
        [_locus_curve("FRF", branch)], path, "frequency response")))
    res.summary = {"points": len(branch), "termination": branch.termination}
    return res


def _plots():
    from . import plots

    return plots


def task_quadrature(cfg: RunConfig, opts: dict) -> TaskResult:
    locs = opts["force_locations"]
    nnm = opts.get("nnm", 1)
    phase = opts.get("target_phase", 1)
    seed_kind = opts.get("seed", "linear")
    if seed_kind == "backbone":
        if len(locs) != 1:
            raise ConfigurationError("quadrature: backbone seeding takes a single force location")
        if "seed_frequency_hz" not in opts:
            raise ConfigurationError("quadrature: backbone seeding needs seed_frequency_hz")
        nbb = _backbone(cfg, nnm)
        sols = bb.numeric_solutions(nbb)
        target = 2 * np.pi * opts["seed_frequency_hz"]
        k = int(np.argmin([abs(s.Omega - target) for s in sols]))
        prob, u, _ = quadrature.seed_isolated_quadrature(
            cfg.model, cfg.shapes, locs[0], sols[k], H=cfg.harmonics, Omega_range=cfg.omega_range)
        branch = quadrature.trace_from_seed(prob, u, cfg.continuation)
    else:
        branch = quadrature.quadrature_locus(cfg.model, cfg.shapes, locs, mode=nnm, H=cfg.harmonics,
                                             Omega_range=cfg.omega_range, config=cfg.continuation,
                                             target_phase=phase)
        nbb = None
    names = [cfg.shapes.locations[cfg.shapes.index(j)] for j in locs]
    name = opts.get("name") or _slug("quadrature", f"nnm{nnm}", *names)
    cols, rows = export.branch_table(branch)
    res = TaskResult(name)
    res.tables.append((f"{name}.csv", cols, rows, _sidecar(
        cfg, "quadrature_locus", locations=names, nnm=nnm, seed=seed_kind,
        target_phase=phase, phase_convention="response phase of +pi/2 lags a cosine force",
        termination=branch.termination)))

    def draw(path):
        ref = nbb if nbb is not None else _backbone(cfg, nnm)
        return _plots().frequency_amplitude(
            [_curve(f"NNM{nnm}", ref), _locus_curve("quadrature locus", branch)], path,
            f"quadrature locus, forces at {', '.join(names)}")

    res.plots.append((f"{name}.svg", draw))
    res.summary = {"points": len(branch), "termination": branch.termination}
    return res


def task_appropriate(cfg: RunConfig, opts: dict) -> TaskResult:
    locs = opts["force_locations"]
    nnm = opts["nnm"]
    p = bb.phase_flag(nnm)
    branch = bb.solve_analytic_backbone(cfg.model, p, cfg.omega_range, n_points=opts.get("points", 40))
    targets = bb.analytic_targets(branch)
    names = [cfg.shapes.locations[cfg.shapes.index(j)] for j in locs]
    rows = []
    if len(locs) == 2:
        cols = ["Omega_Hz", "U1", "U2", f"F_{names[0]}", f"F_{names[1]}", "P1", "P2"]
        for t in targets:
            r = ap.two_force_appropriation(cfg.model, cfg.shapes, locs[0], locs[1], t)
            rows.append([t[0] / (2 * np.pi), r.target.U1, r.target.U2, *r.forces, *r.modal_forces])
    else:
        cols = ["Omega_Hz", "U1", "U2", "F1", "phi_d", "flag"]
        for t in targets:
            bp = ap.BackbonePoint.coerce(t).normalised()
            try:
                F1 = ap.single_force_amplitude(cfg.model, cfg.shapes, locs[0], bp)
                d, flag = ap.phase_error(cfg.model, cfg.shapes, locs[0], bp, F1)
            except ap.SingularAppropriation:
                F1, d, flag = None, None, ap.SINGULAR
            rows.append([t[0] / (2 * np.pi), bp.U1, bp.U2, F1, d, flag])
    name = opts.get("name") or _slug("appropriate", f"nnm{nnm}", *names)
    res = TaskResult(name)
    res.tables.append((f"{name}.csv", cols, rows, _sidecar(cfg, "appropriation", nnm=nnm, locations=names)))
    res.summary = {"points": len(rows)}
    return res


def backbone_point_at(model, nnm: int, frequency_hz: float, Omega_range=None):
    """First point of the analytic backbone (in amplitude order) at a given frequency."""
    p = bb.phase_flag(nnm)
    branch = bb.solve_analytic_backbone(model, p, Omega_range)
    pts = bb.analytic_points(branch)
    W = 2 * np.pi * frequency_hz
    idx = np.where((pts[:-1, 0] - W) * (pts[1:, 0] - W) <= 0)[0]
    if idx.size == 0:
        raise ConfigurationError(f"NNM{nnm} does not reach {frequency_hz} Hz in the frequency window")
    k = idx[0]
    s = (W - pts[k, 0]) / (pts[k + 1, 0] - pts[k, 0])
    guess = pts[k, 1:] + s * (pts[k + 1, 1:] - pts[k, 1:])
    U = bb.solve_analytic_at(model, p, W, guess)
    return ap.BackbonePoint(W, U[0], U[1], p)


def task_phase_map(cfg: RunConfig, opts: dict) -> TaskResult:
    nnm = opts["nnm"]
    target = backbone_point_at(cfg.model, nnm, opts["frequency_hz"], cfg.omega_range)
    entries = ap.phase_error_map(cfg.model, cfg.shapes, target)
    cols = ["location", "F1", "phi_d", "flag", "saturated", "P1_unit", "P2_unit"]
    rows = [[e.location, e.F1, e.phase_error, e.flag, e.saturated, *e.modal_direction] for e in entries]
    name = opts.get("name") or _slug("phase-map", f"nnm{nnm}", f"{opts['frequency_hz']:g}Hz")
    res = TaskResult(name)
    res.tables.append((f"{name}.csv", cols, rows, _sidecar(
        cfg, "phase_map", nnm=nnm, target=[target.Omega, target.U1, target.U2, target.p],
        saturation=ap.SATURATION)))
    res.plots.append((f"{name}.svg", lambda path: _plots().phase_map(
        entries, path, ap.SATURATION, f"NNM{nnm} at {opts['frequency_hz']:g} Hz")))
    res.summary = {"locations": len(rows), "saturated": int(sum(e.saturated for e in entries))}
    return res


def _read_sidecar(csv_path: Path):
    import json

    side = csv_path.with_suffix(".json")
    if side.exists():
        return json.loads(side.read_text())
    return None


def task_verify(cfg: RunConfig, opts: dict) -> TaskResult:
    path = Path(opts["branch"])
    if not path.exists():
        raise ConfigurationError(f"verify: branch file not found: {path}")
    header, rows = export.read_table(path)
    pairs = export.solutions_from_table(header, rows)
    side = _read_sidecar(path)
    model = load_model(side["model"]) if side else cfg.model
    forced = "P1" in header
    if not forced:
        model = model.conservative()
    checks = oracle.verify_points(model, [s for s, _ in pairs], [P for _, P in pairs])
    per, bal = checks["periodicity"], checks["energy_balance"]
    passed = (per < PERIODICITY_TOL) & (bal < ENERGY_TOL)
    iW = header.index("Omega_Hz")
    out_rows = [[k, rows[k, iW], per[k], bal[k], bool(passed[k])] for k in range(len(rows))]
    name = opts.get("name") or _slug("verify", path.stem)
    res = TaskResult(name)
    res.tables.append((f"{name}.csv", ["index", "Omega_Hz", "periodicity", "energy_balance", "pass"],
                       out_rows, None))
    res.summary = {"points": len(rows), "failed": int((~passed).sum()),
                   "max_periodicity": float(per.max()), "max_energy_balance": float(bal.max())}
    if not passed.all():
        res.ok = False
        res.error = f"{int((~passed).sum())} of {len(rows)} points failed verification"
    return res


TASK_RUNNERS = {
    "backbone": task_backbone,
    "frf": task_frf,
    "quadrature": task_quadrature,
    "appropriate": task_appropriate,
    "phase-map": task_phase_map,
    "verify": task_verify,
}


def _run_task(cfg, name, opts) -> TaskResult:
    try:
        return TASK_RUNNERS[name](cfg, opts)
    except (ContinuationError, ap.AppropriationError, FloatingPointError,
            np.linalg.LinAlgError, oracle.DivergenceError) as exc:
        return TaskResult(opts.get("name") or name, ok=False, error=f"{type(exc).__name__}: {exc}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: RunConfig, workers: int | None = None) -> int:
    """Execute every task of ``cfg`` and write outputs plus ``manifest.json``.

    Tasks run concurrently (capped by ``NNM_APPROP_THREADS``); files are
    written afterwards in task order so outputs do not depend on scheduling.
    """
    if not cfg.tasks:
        raise ConfigurationError(f"{cfg.source}: no tasks to run")
    n = workers or ap.thread_count()
    if n > 1 and len(cfg.tasks) > 1:
        with ThreadPoolExecutor(max_workers=min(n, len(cfg.tasks))) as pool:
            results = list(pool.map(lambda t: _run_task(cfg, *t), cfg.tasks))
    else:
        results = [_run_task(cfg, *t) for t in cfg.tasks]
    chash = cfg.config_hash()
    out = cfg.out_dir
    artifacts, failures, summaries = [], [], []
    for (task, _), res in zip(cfg.tasks, results):
        for fname, cols, rows, side in res.tables:
            path = export.write_table(out / fname, cols, rows)
            entry = {"task": task, "path": fname, "sha256": _sha256(path), "config_hash": chash,
                     "rows": len(rows)}
            artifacts.append(entry)
            if side is not None:
                spath = export.write_json(path.with_suffix(".json"), {**side, "config_hash": chash})
                artifacts.append({"task": task, "path": spath.name, "sha256": _sha256(spath),
                                  "config_hash": chash})
        if cfg.svg:
            for fname, draw in res.plots:
                path = draw(out / fname)
                artifacts.append({"task": task, "path": fname, "sha256": _sha256(path),
                                  "config_hash": chash})
        summaries.append({"task": task, "name": res.name, "ok": res.ok, **res.summary})
        if not res.ok:
            failures.append({"task": task, "name": res.name, "error": res.error})
            log.error("%s: %s", res.name, res.error)
    manifest = {
        "tool": "nnm-approp",
        "version": __version__,
        "config_hash": chash,
        "config": cfg.raw,
        "model": cfg.model.to_dict(),
        "model_hash": cfg.model.fingerprint(),
        "shapes": cfg.shapes.to_dict(),
        "harmonics": cfg.harmonics,
        "omega_range_hz": list(cfg.omega_range_hz),
        "continuation": vars(cfg.continuation),
        "tasks": summaries,
        "artifacts": artifacts,
        "failures": failures,
    }
    export.write_json(out / "manifest.json", manifest)
    return EXIT_FAILURE if failures else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="crossbeam-table1",
                        help="built-in model name or YAML file with omega_n, zeta, alpha, gamma")
    common.add_argument("--shapes", default="synthetic",
                        help="'synthetic' or a CSV file with rows location,phi1,phi2")
    common.add_argument("--harmonics", type=int, default=None, help="number of harmonics H")
    common.add_argument("--omega-range", nargs=2, type=float, metavar=("LO_HZ", "HI_HZ"),
                        default=None, help="frequency window in Hz (default 16.1 20)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--svg", action="store_true", help="also write SVG plots")
    common.add_argument("-v", "--verbose", action="store_true")

    ap_ = argparse.ArgumentParser(prog="nnm-approp", description=__doc__.splitlines()[0])
    ap_.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap_.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run the tasks of a YAML configuration")
    s.add_argument("config")
    s.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("backbone", parents=[common], help="backbone curve of an NNM")
    s.add_argument("--nnm", type=int, choices=(1, 2), required=True)
    s.add_argument("--method", choices=("harmonic_balance", "analytic"), default="harmonic_balance")

    s = sub.add_parser("frf", parents=[common], help="fixed-force frequency response")
    s.add_argument("--force-locations", "--force-location", nargs="+", required=True)
    s.add_argument("--force-amplitude", "--force-amplitudes", nargs="+", type=float, required=True)

    s = sub.add_parser("quadrature", parents=[common], help="phase-quadrature locus")
    s.add_argument("--force-locations", "--force-location", nargs="+", required=True)
    s.add_argument("--nnm", type=int, choices=(1, 2), default=1)
    s.add_argument("--target-phase", type=int, choices=(-1, 1), default=1)
    s.add_argument("--seed-frequency", type=float, default=None,
                   help="seed from the NNM at this frequency (Hz) instead of the linear limit")

    s = sub.add_parser("appropriate", parents=[common], help="energy-balance force predictions")
    s.add_argument("--force-locations", "--force-location", nargs="+", required=True)
    s.add_argument("--nnm", type=int, choices=(1, 2), required=True)
    s.add_argument("--points", type=int, default=40)

    s = sub.add_parser("phase-map", parents=[common], help="single-force phase error at every location")
    s.add_argument("--nnm", type=int, choices=(1, 2), required=True)
    s.add_argument("--frequency", type=float, required=True, help="backbone frequency (Hz)")

    s = sub.add_parser("verify", parents=[common], help="oracle re-check of an exported branch CSV")
    s.add_argument("branch")
    return ap_


def _config_from_args(args) -> RunConfig:
    if args.command == "run":
        return load_config(args.config)
    task: dict = {}
    if args.command == "backbone":
        task = {"nnm": args.nnm, "method": args.method}
    elif args.command == "frf":
        task = {"force_locations": args.force_locations, "force_amplitudes": args.force_amplitude}
    elif args.command == "quadrature":
        task = {"force_locations": args.force_locations, "nnm": args.nnm,
                "target_phase": args.target_phase}
        if args.seed_frequency is not None:
            task.update(seed="backbone", seed_frequency_hz=args.seed_frequency)
    elif args.command == "appropriate":
        task = {"force_locations": args.force_locations, "nnm": args.nnm, "points": args.points}
    elif args.command == "phase-map":
        task = {"nnm": args.nnm, "frequency_hz": args.frequency}
    elif args.command == "verify":
        task = {"branch": args.branch}
    doc = {"model": args.model, "shapes": args.shapes, "output": {"dir": args.out, "svg": args.svg},
           "tasks": [{args.command: task}]}
    if args.harmonics is not None:
        doc["harmonics"] = args.harmonics
    if args.omega_range is not None:
        doc["omega_range_hz"] = list(args.omega_range)
    import json

    # JSON is valid YAML, so flags go through the same validation as files
    return parse_config(json.dumps(doc), "<command line>", Path.cwd())


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        return run(cfg)
    except ConfigurationError as exc:
        print(f"nnm-approp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

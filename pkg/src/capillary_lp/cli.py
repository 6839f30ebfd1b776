"""Command-line front end.

Commands::

    capillary-lp solve       --config run.cfg [--out DIR] [--run-id NAME]
    capillary-lp verify      --run-id NAME [--out DIR] [--config run.cfg]
    capillary-lp reconstruct --run-id NAME [--out DIR]
    capillary-lp oracle      --config run.cfg [--out DIR] [--run-id NAME]
    capillary-lp sweep       --config sweep.cfg [--out DIR] [--run-id NAME] [--jobs N]

Every command writes ``<run-id>.summary`` in the output directory, also on
failure, with the failing stage named.  The exit code is 0 iff every stage
succeeded, 1 if a stage failed and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cap_geometry import read_field_csv, write_field_csv
from .config import ConfigError, RunConfig, load_config
from .embedding import (
    boundary_heights,
    convexity_violations,
    evenness_defect,
    export_mesh,
    inverse_gauss_map,
    normal_consistency,
    surface_curvature_check,
)
from .exceptions import CapillaryError, ParameterMismatch
from .oracle import compare_field, solve_radial, write_profile_csv
from .solver import ProblemSpec, solve
from .verifier import EstimateReport, EstimateSpec, estimate_report

__all__ = ["main", "RunSummary", "SWEEP_FIELDS", "build_parser"]

log = logging.getLogger(__name__)

STAGES = ("config", "solve", "verify", "reconstruct", "oracle", "sweep")
# Stages whose results depend on the solved field.
_DOWNSTREAM = {"solve": ("verify", "reconstruct", "oracle")}

SWEEP_FIELDS = (
    ("status", "phi", "gamma_fraction")
    + EstimateReport.CSV_FIELDS
    + ("iterations", "interior_residual_max", "robin_residual_max", "min_tau_eigenvalue", "error")
)


class MissingRun(CapillaryError):
    """The requested run id has no solved field in the output directory."""


class _StageFailed(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


class RunSummary:
    """``key: value`` record of a run, merged across commands.

    Keys are prefixed by the stage that produced them.  ``status`` and
    ``failed_stage`` are recomputed from the per-stage statuses on write.
    """

    def __init__(self, path: Path, run_id: str):
        self.path = Path(path)
        self.run_id = run_id
        self.entries: dict[str, str] = {}
        if self.path.is_file():
            for line in self.path.read_text().splitlines():
                key, sep, value = line.partition(": ")
                if sep and key not in ("run_id", "status", "failed_stage"):
                    self.entries[key] = value

    def clear(self, *stages: str) -> None:
        for stage in stages:
            for key in [k for k in self.entries if k.split(".", 1)[0].split("[", 1)[0] == stage]:
                del self.entries[key]

    def put(self, key: str, value) -> None:
        self.entries[key] = _fmt(value)

    def get(self, key: str, default=None):
        return self.entries.get(key, default)

    @property
    def failed_stage(self) -> str | None:
        failed = {k.split(".", 1)[0] for k, v in self.entries.items() if k.endswith(".status") and v == "failed"}
        return next((s for s in STAGES if s in failed), None)

    def write(self) -> Path:
        failed = self.failed_stage
        order = {s: i for i, s in enumerate(STAGES)}

        def rank(item):
            stage = item[0].split(".", 1)[0].split("[", 1)[0]
            return order.get(stage, len(STAGES))

        lines = [f"run_id: {self.run_id}", f"status: {'failed' if failed else 'ok'}", f"failed_stage: {failed or 'none'}"]
        lines += [f"{k}: {v}" for k, v in sorted(self.entries.items(), key=rank)]
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("\n".join(lines) + "\n")
        return self.path


class _Run:
    """One command invocation: configuration, summary and stage bookkeeping."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        self.summary = RunSummary(cfg.path("summary"), cfg.run_id)
        self.summary.clear(command, *_DOWNSTREAM.get(command, ()))
        self._n_warnings = 0

    def stage(self, name: str, fn):
        """Run ``fn()`` as stage ``name``; record timing and failure."""
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                result = fn()
        except Exception as exc:
            self.summary.put(f"{name}.status", "failed")
            self.summary.put(f"{name}.error", f"{type(exc).__name__}: {exc}")
            self.summary.put(f"{name}.seconds", round(time.perf_counter() - t0, 3))
            print(f"error [{name}]: {type(exc).__name__}: {exc}", file=sys.stderr)
            raise _StageFailed(name) from exc
        for w in caught:
            print(f"warning [{name}]: {w.message}", file=sys.stderr)
            self.summary.put(f"{name}.warning[{self._n_warnings}]", str(w.message).replace("\n", " "))
            self._n_warnings += 1
        self.summary.put(f"{name}.status", "ok")
        elapsed = float(self.summary.get(f"{name}.seconds", 0.0))
        self.summary.put(f"{name}.seconds", round(elapsed + time.perf_counter() - t0, 3))
        return result

    def echo_config(self) -> None:
        self.summary.clear("config")
        for line in self.cfg.to_text().splitlines():
            key, _, value = line.partition("=")
            self.summary.put(f"config.{key.strip()}", value.strip())
        self.summary.put("config.status", "ok")


def _config_failure(args, command: str, exc: Exception) -> int:
    out = Path(args.out or ".")
    run_id = args.run_id or "run"
    # A missing run is a failure of the requesting command, not of parsing.
    stage = command if isinstance(exc, MissingRun) else "config"
    print(f"error [{stage}]: {exc}", file=sys.stderr)
    try:
        summary = RunSummary(out / f"{run_id}.summary", run_id)
        summary.clear(stage)
        summary.put(f"{stage}.status", "failed")
        summary.put(f"{stage}.error", f"{type(exc).__name__}: {exc}")
        summary.put(f"{stage}.command", command)
        summary.write()
    except OSError as err:
        print(f"error: cannot write summary in {out}: {err}", file=sys.stderr)
    return 2


def _stored_config(out: Path, run_id: str) -> RunConfig:
    path = out / f"{run_id}.config"
    if not path.is_file():
        raise MissingRun(f"no solved run '{run_id}' in {out} (missing {path.name})")
    return load_config(path)


def _open(args, command: str, need_config: bool = True) -> tuple[_Run | None, int]:
    try:
        if args.config is not None:
            cfg = load_config(args.config)
        elif need_config:
            raise ConfigError("--config is required for this command")
        else:
            if args.run_id is None:
                raise ConfigError("--run-id or --config is required for this command")
            cfg = _stored_config(Path(args.out or "."), args.run_id)
        cfg = cfg.with_overrides(out=args.out, run_id=args.run_id)
        run = _Run(cfg, command)
    except (ConfigError, MissingRun, OSError) as exc:
        code = _config_failure(args, command, exc)
        return None, 1 if isinstance(exc, MissingRun) else code
    run.echo_config()
    return run, 0


def _finish(run: _Run, ok: bool) -> int:
    path = run.summary.write()
    print(f"summary: {path}")
    return 0 if ok else 1


def _problem(cfg: RunConfig, domain=None):
    dom = domain or cfg.domain()
    curv = cfg.curvature_spec
    return ProblemSpec(dom, curv, cfg.p, cfg.phi.build(dom, curv, cfg.p, cfg.scale))


def _quiet_problem(cfg: RunConfig, domain=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _problem(cfg, domain)


def _load_field(cfg: RunConfig):
    path = cfg.path("field.csv")
    if not path.is_file():
        raise MissingRun(f"no solved run '{cfg.run_id}' in {cfg.output_dir} (missing {path.name})")
    return read_field_csv(path, cfg.domain(), positive=True)


def _check_stored(cfg: RunConfig) -> None:
    stored_path = cfg.path("config")
    if stored_path.is_file():
        stored = load_config(stored_path)
        if stored.problem_key() != cfg.problem_key():
            raise ParameterMismatch(f"parameter mismatch: config differs from the solved run stored in {stored_path}")


# --- commands ---------------------------------------------------------------


def cmd_solve(args) -> int:
    run, code = _open(args, "solve")
    if run is None:
        return code
    cfg = run.cfg
    try:
        spec = run.stage("solve", lambda: _problem(cfg))
        bundle = run.stage("solve", lambda: solve(spec, cfg.solve_config()))
        for key, value in bundle.digest().items():
            run.summary.put(f"solve.{key}", value)
        run.summary.put("solve.residual_history", " ".join(f"{r:.3e}" for r in bundle.residual_history))

        def write():
            cfg.path("config").write_text(cfg.to_text())
            return write_field_csv(cfg.path("field.csv"), bundle.s)

        path = run.stage("solve", write)
        run.summary.put("solve.field", path)
        print(
            f"solve: {bundle.iterations} Newton iterations, residual {bundle.interior_residual_max:.3e}, "
            f"min tau eigenvalue {bundle.admissibility.min_eigenvalue:.4g} -> {path}"
        )
        ok = True
    except _StageFailed:
        ok = False
    return _finish(run, ok)


def cmd_verify(args) -> int:
    run, code = _open(args, "verify", need_config=False)
    if run is None:
        return code
    cfg = run.cfg

    def work():
        _check_stored(cfg)
        if not cfg.gammas:
            raise ValueError(f"no admissible gamma: 2(p-1)/k = {cfg.gamma_upper:.6g} <= 0")
        s = _load_field(cfg)
        surface = inverse_gauss_map(s)
        reports = [estimate_report(s, surface, EstimateSpec(g, cfg.p, cfg.k)) for g in cfg.gammas]
        path = cfg.path("estimates.csv")
        path.write_text("".join(r.to_csv(header=i == 0) for i, r in enumerate(reports)))
        return reports, path

    try:
        reports, path = run.stage("verify", work)
        for rep in reports:
            tag = f"verify[gamma={rep.gamma:.6g}]"
            notes = 0
            for line in rep.to_text().splitlines():
                key, _, value = line.partition(": ")
                if key == "note":
                    key, notes = f"note[{notes}]", notes + 1
                run.summary.put(f"{tag}.{key}", value)
            print(
                f"verify: gamma {rep.gamma:.4g}: gradient ratio {rep.gradient_ratio:.6g}, "
                f"boundary identity residual {rep.boundary_identity_residual:.3e}, chain {'ok' if rep.chain_ok else 'FAILED'}"
            )
        run.summary.put("verify.estimates", path)
        ok = True
    except _StageFailed:
        ok = False
    return _finish(run, ok)


def cmd_reconstruct(args) -> int:
    run, code = _open(args, "reconstruct", need_config=False)
    if run is None:
        return code
    cfg = run.cfg

    def work():
        _check_stored(cfg)
        s = _load_field(cfg)
        surface = inverse_gauss_map(s)
        path = export_mesh(surface, cfg.path("mesh"))
        h = s.domain.h
        heights = boundary_heights(surface)
        info = {
            "mesh": path,
            "vertices": surface.n_vertices,
            "faces": len(surface.faces),
            "boundary_height_max": float(np.abs(heights).max()),
            "boundary_height_bound": 10.0 * h * s.max(),
            "evenness_defect": evenness_defect(surface),
            "convexity_violations": convexity_violations(surface),
            "normal_angle_max": normal_consistency(surface),
        }
        if cfg.k == 1:
            multiplier = float(run.summary.get("solve.multiplier", 1.0))
            chk = surface_curvature_check(surface, _quiet_problem(cfg, s.domain), multiplier)
            info["curvature_defect_max"] = chk.max_defect
        return info

    try:
        info = run.stage("reconstruct", work)
        for key, value in info.items():
            run.summary.put(f"reconstruct.{key}", value)
        print(
            f"reconstruct: {info['vertices']} vertices -> {info['mesh']}; boundary height "
            f"{info['boundary_height_max']:.3e} (bound {info['boundary_height_bound']:.3e})"
        )
        ok = True
    except _StageFailed:
        ok = False
    return _finish(run, ok)


def cmd_oracle(args) -> int:
    run, code = _open(args, "oracle")
    if run is None:
        return code
    cfg = run.cfg

    def work():
        curv = cfg.curvature_spec
        profile = solve_radial(
            cfg.theta,
            cfg.n,
            cfg.k,
            cfg.p,
            cfg.phi.profile(cfg.theta, curv, cfg.p, cfg.scale),
            tol=cfg.newton_tol,
            kind=cfg.curvature,
            n_nodes=cfg.oracle_nodes,
            scale=cfg.scale,
            max_iters=cfg.max_newton_iters,
        )
        info = {
            "profile": write_profile_csv(cfg.path("profile.csv"), profile),
            "nodes": profile.rho_nodes.size,
            "iterations": profile.iterations,
            "residual_max": profile.residual_max,
            "multiplier": profile.multiplier,
            "robin_defect": profile.robin_defect(),
            "s_pole": float(profile.s_values[0]),
            "s_boundary": float(profile.s_values[-1]),
        }
        if cfg.path("field.csv").is_file():
            _check_stored(cfg)
            s = _load_field(cfg)
            info["deviation_2d"] = compare_field(profile, s, _quiet_problem(cfg, s.domain))
        return info

    try:
        info = run.stage("oracle", work)
        for key, value in info.items():
            run.summary.put(f"oracle.{key}", value)
        extra = f", 2-D deviation {info['deviation_2d']:.3e}" if "deviation_2d" in info else ""
        print(f"oracle: {info['nodes']} nodes, residual {info['residual_max']:.3e}{extra} -> {info['profile']}")
        ok = True
    except _StageFailed:
        ok = False
    return _finish(run, ok)


# --- sweep ------------------------------------------------------------------


def sweep_tasks(cfg: RunConfig) -> list[RunConfig]:
    """One configuration per ``(theta, p, phi, grid)`` combination, in a fixed order."""
    thetas = cfg.sweep_theta if cfg.sweep_theta is not None else (cfg.theta,)
    ps = cfg.sweep_p if cfg.sweep_p is not None else (cfg.p,)
    phis = cfg.sweep_phi if cfg.sweep_phi is not None else (cfg.phi,)
    grids = cfg.sweep_grid if cfg.sweep_grid is not None else ((cfg.n_rho, cfg.n_phi),)
    fractions = cfg.sweep_gamma_fraction
    if fractions is None:
        fractions = cfg.gamma_fraction or (0.5,)
    base = replace(
        cfg, sweep_theta=None, sweep_p=None, sweep_phi=None, sweep_grid=None, sweep_gamma_fraction=None, gamma=()
    )
    return [
        replace(base, theta=t, p=p, phi=phi, n_rho=g[0], n_phi=g[1], gamma_fraction=tuple(fractions))
        for t, p, phi, g in itertools.product(thetas, ps, phis, grids)
    ]


def _row_base(task: RunConfig, fraction: float) -> dict[str, str]:
    gamma = fraction * task.gamma_upper
    try:
        h = task.domain().h
    except ValueError:
        h = math.nan
    vals = {
        "phi": str(task.phi), "gamma_fraction": fraction, "theta": task.theta, "k": task.k, "p": task.p,
        "gamma": gamma, "n_rho": task.n_rho, "n_phi": task.n_phi, "h": h,
    }  # fmt: skip
    row = {k: "" for k in SWEEP_FIELDS}
    row.update({k: _fmt(v) for k, v in vals.items()})
    return row


def _failure_rows(task: RunConfig, exc: BaseException, extra: dict | None = None) -> list[dict[str, str]]:
    rows = []
    for f in task.gamma_fraction:
        row = _row_base(task, f)
        row.update(extra or {})
        row["status"] = type(exc).__name__
        row["error"] = str(exc).replace("\n", " ")
        rows.append(row)
    return rows


def run_sweep_task(task: RunConfig) -> list[dict[str, str]]:
    """Solve one combination and verify it for every gamma; never raises."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec = _problem(task)
            bundle = solve(spec, task.solve_config())
    except Exception as exc:
        return _failure_rows(task, exc)
    digest = bundle.digest()
    extra = {k: _fmt(digest[k]) for k in ("iterations", "interior_residual_max", "robin_residual_max")}
    extra["min_tau_eigenvalue"] = _fmt(digest["min_tau_eigenvalue"])
    try:
        surface = inverse_gauss_map(bundle.s)
    except Exception as exc:
        return _failure_rows(task, exc, extra)
    rows = []
    for f in task.gamma_fraction:
        try:
            rep = estimate_report(bundle.s, surface, EstimateSpec.from_fraction(f, task.p, task.k))
        except Exception as exc:
            rows += _failure_rows(replace(task, gamma_fraction=(f,)), exc, extra)
            continue
        row = _row_base(task, f)
        row.update(rep.row())
        row.update(extra)
        row["status"] = "ok"
        rows.append(row)
    return rows


def run_sweep(cfg: RunConfig, jobs: int = 1) -> list[dict[str, str]]:
    """Rows for every combination, in the order of :func:`sweep_tasks`."""
    tasks = sweep_tasks(cfg)
    if jobs <= 1 or len(tasks) <= 1:
        return [row for t in tasks for row in run_sweep_task(t)]
    rows = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_sweep_task, t) for t in tasks]
        for task, fut in zip(tasks, futures):
            try:
                rows += fut.result()
            except Exception as exc:
                rows += _failure_rows(task, exc)
    return rows


def sweep_csv(rows: list[dict[str, str]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    run, code = _open(args, "sweep")
    if run is None:
        return code
    cfg = run.cfg
    jobs = args.jobs or 1

    def work():
        rows = run_sweep(cfg, jobs)
        path = cfg.path("sweep.csv")
        path.write_text(sweep_csv(rows))
        return rows, path

    try:
        rows, path = run.stage("sweep", work)
    except _StageFailed:
        return _finish(run, False)
    failed = [r for r in rows if r["status"] != "ok"]
    run.summary.put("sweep.rows", len(rows))
    run.summary.put("sweep.failed_rows", len(failed))
    run.summary.put("sweep.jobs", jobs)
    run.summary.put("sweep.csv", path)
    if failed:
        # The sweep completed, but not every requested combination did.
        run.summary.put("sweep.status", "failed")
        run.summary.put("sweep.error", f"{len(failed)} of {len(rows)} rows failed")
    print(f"sweep: {len(rows)} rows, {len(failed)} failed -> {path}")
    return _finish(run, not failed)


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file (key = value lines)")
    common.add_argument("--out", help="output directory (default: the config's 'out', else '.')")
    common.add_argument("--run-id", dest="run_id", help="run name used for every output file")
    common.add_argument("--jobs", type=int, default=None, help="parallel workers for sweeps")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    parser = argparse.ArgumentParser(prog="capillary-lp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "solve the problem and write the support function"),
        ("verify", "check the a priori estimates on a solved run"),
        ("reconstruct", "rebuild the hypersurface and export a mesh"),
        ("oracle", "solve the rotationally symmetric problem in 1-D"),
        ("sweep", "solve and verify over a grid of parameters"),
    ):
        sub.add_parser(name, parents=[common], help=helptext)
    return parser


_COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "reconstruct": cmd_reconstruct,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

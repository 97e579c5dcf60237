"""Command-line driver.

    escortlab COMMAND [--config PATH] [--out DIR] [--seed N] [--horizon N]
                      [--tolerance X] [--format {csv,jsonl}] [--set KEY=VALUE ...]
    escortlab run --config PATH [...]
    escortlab plot INPUT --style {disk,half-plane,xy} --out FILE.svg [--closed]
    escortlab rerun RECORD.json [--out DIR]

Exit status: 0 success, 2 a check failed, 3 numerical failure, 4 bad configuration.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import boundary as B
from . import ergodic as E
from . import flows as F
from . import models as M
from . import rotation as R
from . import suite as S
from .errors import (CheckFailure, ConfigError, DomainError, DomainExitError, EscortLabError, FitError,
                     LiftError, NumericError, VisibilityError)
from .escort import read_csv, write_csv
from .plot import STYLES, emit_plot
from .records import (COMMANDS, ExperimentConfig, RunRecord, atomic_write, config_from_mapping, file_sha256,
                      load_config, write_rows)

EXIT_OK, EXIT_CHECK, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# parameter helpers

def _model(cfg: ExperimentConfig, default) -> M.ModelId:
    try:
        return M.ModelId.parse(cfg.model) if cfg.model else default
    except DomainError as exc:
        raise ConfigError(str(exc))


def _point(cfg, key, model, default) -> M.ModelPoint:
    c = cfg.get_floats(key, default)
    if len(c) != model.dim:
        raise ConfigError(f"{key} needs {model.dim} coordinates")
    try:
        return M.ModelPoint(model, tuple(c))
    except DomainError as exc:
        raise ConfigError(f"{key}: {exc}")


def _matrix(cfg, default=(4.0, 0.0, 0.0, 1.0)) -> np.ndarray:
    c = cfg.get_floats("matrix", default)
    if len(c) != 4:
        raise ConfigError("matrix needs four entries a b c d")
    m = np.array(c, dtype=float).reshape(2, 2)
    if not np.linalg.det(m) > 0:
        raise ConfigError("matrix must have positive determinant")
    return m / math.sqrt(np.linalg.det(m))


def _horizon(cfg, default):
    return cfg.horizon if cfg.horizon is not None else default


def _tol(cfg, default):
    return cfg.tolerance if cfg.tolerance is not None else default


def _system(cfg):
    """Covered map and default start for rotation-map / past-future."""
    kind = cfg.get_str("system", "torus")
    if kind == "torus":
        model = M.TORUS2
        sys_ = R.torus_translation(cfg.get_float("a", 0.3), cfg.get_float("b", 0.1))
        start = (0.0, 0.0)
    elif kind == "perturbed-torus":
        model = M.TORUS2
        sys_ = R.perturbed_torus(cfg.get_float("a", 0.3), cfg.get_float("b", 0.1), cfg.get_float("eps", 0.05))
        start = (0.0, 0.0)
    elif kind == "moebius":
        model = _model(cfg, M.HALF_PLANE)
        if not model.hyperbolic:
            raise ConfigError("moebius systems need a hyperbolic chart")
        sys_ = R.moebius_system(_matrix(cfg), model)
        start = tuple(B.from_half_plane(model, np.array([1j]))[0][0]) if model != M.HALF_PLANE else (0.0, 1.0)
    elif kind == "warped-xshift":
        model = M.WARPED
        sys_ = R.warped_xshift(cfg.get_float("shift", 1.0))
        start = (0.0, 0.0)
    else:
        raise ConfigError(f"unknown system {kind!r}; use torus, perturbed-torus, moebius or warped-xshift")
    return sys_, _point(cfg, "start", model, start)


# ---------------------------------------------------------------------------
# commands; each returns (list of (stem, rows), message) and raises on failed checks

def cmd_rotation_map(cfg, out):
    if "orbit" in cfg.inputs:
        try:
            seq = read_csv(cfg.inputs["orbit"], cfg.model or None)
        except (DomainError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read orbit: {exc}")
        est = R.rotation_vector_sequence(seq)
        rec = {"system": "recorded orbit", **est.record()}
    else:
        sys_, x = _system(cfg)
        n = int(_horizon(cfg, 2000))
        est = R.rotation_vector_map(sys_, x, n)
        rec = {"system": sys_.base_step, **est.record()}
    return [("results", [rec])], f"norm {est.norm:.6g}"


def cmd_rotation_flow(cfg, out):
    kind = cfg.get_str("system", "geodesic")
    T = float(_horizon(cfg, 200.0))
    dt = cfg.get_float("dt", 0.01)
    if kind == "geodesic":
        model = _model(cfg, M.HALF_PLANE)
        flow = R.geodesic_flow(model)
        p = _point(cfg, "start", model, (0.0, 1.0) if model == M.HALF_PLANE else (0.0,) * model.dim)
        d = cfg.get_floats("direction", (0.0, 1.0))
        x = M.vector(p, *d).unit()
    elif kind == "suspension":
        flow = R.suspension_flow(cfg.get_float("a", 0.3), cfg.get_float("b", 0.1),
                                 cfg.get_float("return_time", 1.0))
        x = _point(cfg, "start", M.TORUS2, (0.0, 0.0))
    else:
        raise ConfigError(f"unknown flow system {kind!r}; use geodesic or suspension")
    est = R.rotation_vector_flow(flow, x, T, dt)
    return [("results", [{"system": flow.base_step, **est.record()}])], f"norm {est.norm:.6g}"


def _root(m: np.ndarray, p: int) -> np.ndarray:
    """Real p-th root of an SL2 matrix with positive real eigenvalues, by diagonalization."""
    m = m / math.sqrt(np.linalg.det(m))
    w, V = np.linalg.eig(m)
    if np.any(np.abs(w.imag) > 1e-12) or np.any(w.real <= 0):
        raise ConfigError("periodic-norm needs a matrix with positive real eigenvalues")
    r = V @ np.diag(w.real ** (1.0 / p)) @ np.linalg.inv(V)
    return np.real(r)


def cmd_periodic_norm(cfg, out):
    m = _matrix(cfg)
    periods = [int(p) for p in cfg.get_floats("periods", (1, 2, 3))]
    # orbits of a hyperbolic map grow like exp(n R); 400 steps of z -> 4z stay representable
    n = int(_horizon(cfg, 400))
    tol = _tol(cfg, 1e-6)
    search = {"radius": cfg.get_float("radius", 20.0), "grid": cfg.get_int("grid", 41)}
    rho = M.DeckTransformation.moebius(m, M.HALF_PLANE)
    x = M.point(M.HALF_PLANE, 0.0, 1.0)
    rows = []
    for p in periods:
        if p < 1:
            raise ConfigError("periods must be positive")
        f = _root(m, p)
        sys_ = R.moebius_system(f, M.HALF_PLANE, [rho])
        spec = R.PeriodicOrbitSpec(x, p, rho, sys_)
        pn = R.periodic_norm(spec, **search)
        est = R.rotation_vector_map(sys_, x, n)
        rows.append({"period": p, "periodic_norm": pn, "map_norm": est.norm,
                     "relative_gap": abs(est.norm - pn) / pn if pn > 0 else math.nan})
    r1 = R.translation_length(rho, **search)
    r2 = R.translation_length(rho.compose(rho), **search)
    rows.append({"period": 0, "R1": r1, "R2": r2, "doubling_gap": abs(r2 - 2 * r1)})
    if abs(r2 - 2 * r1) > tol:
        raise _Partial([("results", rows)], f"R2 - 2 R1 = {r2 - 2 * r1:.3g}")
    return [("results", rows)], f"R1 {r1:.9g}"


def cmd_past_future(cfg, out):
    sys_, x = _system(cfg)
    n = int(_horizon(cfg, 2000))
    tol = _tol(cfg, 0.02)
    pf = R.past_future_compare(sys_, x, n)
    rec = {"system": sys_.base_step, "norm_forward": pf.norm_fwd, "norm_backward": pf.norm_bwd,
           "angle_to_reversed": pf.angle, "vector_forward": list(pf.fwd.vector.components),
           "vector_backward": list(pf.bwd.vector.components),
           "defined": bool(pf.fwd.defined and pf.bwd.defined)}
    scale = max(pf.norm_fwd, pf.norm_bwd)
    if scale > 0 and abs(pf.norm_fwd - pf.norm_bwd) > tol * scale:
        raise _Partial([("results", [rec])],
                       f"forward and backward norms differ: {pf.norm_fwd:.6g} vs {pf.norm_bwd:.6g}")
    return [("results", [rec])], f"norms {pf.norm_fwd:.6g} / {pf.norm_bwd:.6g}"


def cmd_alignment_ensemble(cfg, out):
    kind = cfg.get_str("generator", "random-product")
    n = int(_horizon(cfg, 2000))
    seeds = cfg.get_int("seeds", 64)
    delta = cfg.get_float("delta", 0.1)
    need = cfg.get_float("min_fraction", 0.9)
    if kind == "random-product":
        gen = E.random_product_generator(n_seeds=seeds, rng_seed=cfg.rng_seed, n_max=n + 8)
    elif kind == "moebius":
        # a short translation keeps n = 2000 steps inside floating range
        gen = E.moebius_generator(_matrix(cfg, (1.21, 0.0, 0.0, 1.0)), n_seeds=seeds, rng_seed=cfg.rng_seed)
    else:
        raise ConfigError(f"unknown generator {kind!r}; use random-product or moebius")
    res = E.alignment_ensemble_check(gen, n, delta)
    rows = [{"seed": i, "R_hat": r.R_hat, "L_hat": r.L_hat, "escaping": i in res.escaping,
             "aligned": i in res.escaping and r.L_hat >= (1 - delta) * r.R_hat,
             "achieved_eps": r.achieved_eps, "achieved_K": r.achieved_K}
            for i, r in enumerate(res.reports)]
    summary = [{"fraction": res.fraction, "escaping": len(res.escaping), "seeds": seeds,
                "delta": delta, "n": n,
                "seed_diameter": res.seed_diameter}]
    files = [("results", rows), ("summary", summary)]
    if res.fraction < need:
        raise _Partial(files, f"aligned fraction {res.fraction:.3f} below {need}")
    return files, f"aligned fraction {res.fraction:.3f}"


def cmd_magnetic(cfg, out):
    model = _model(cfg, M.HALF_PLANE)
    v = cfg.get_float("speed", 2.0)
    T = float(_horizon(cfg, 200.0))
    dt = cfg.get_float("dt", 0.01 / max(1.0, v))
    zs = cfg.get_floats("start", (0.0, 1.0))
    if len(zs) != 2 or zs[1] <= 0:
        raise ConfigError("start is a half-plane point x y with y > 0")
    z0 = complex(zs[0], zs[1])
    start = F.magnetic_start(v, model, z0, cfg.get_float("angle", 0.5 * math.pi))
    tr = F.magnetic_trajectory(start, T, dt)
    cls = tr.classification
    rec = {"regime": cls.regime, "speed": v, "T": T, "radius_or_distance": cls.radius_or_distance,
           "escape_rate": cls.escape_rate, "period": cls.period}
    tol = _tol(cfg, 1e-3)
    fz = tr.frame_z
    fail = ""
    if cls.regime == "subcritical":
        per = tr.first_return()
        z = B.to_half_plane(model, tr.positions)[0]
        rerr = float(np.max(np.abs(M.hp_dist(z, tr.center()) - cls.radius_or_distance)))
        rec.update(measured_period=per, radius_error=rerr, center=[tr.center().real, tr.center().imag])
        if rerr > tol or abs(per - cls.period) > tol:
            fail = f"circle radius error {rerr:.3g}, period error {abs(per - cls.period):.3g}"
    elif cls.regime == "horocyclic":
        z = B.to_half_plane(model, tr.positions)[0]
        h = B.h_value(z, tr.center())
        rec.update(boundary_center=tr.center(), busemann_spread=float(np.ptp(h)))
        if np.ptp(h) > tol:
            fail = f"horocycle Busemann spread {np.ptp(h):.3g}"
    else:
        xm, xp = tr.axis_endpoints()
        # the canonical frame is an isometric copy in which the axis is the imaginary axis
        dist = np.arcsinh(np.abs(fz.real / fz.imag))
        derr = float(np.max(np.abs(dist - cls.radius_or_distance)))
        rate = float(M.hp_dist(fz[0], fz[-1]) / T)
        rec.update(axis=[xm, xp], distance_error=derr, measured_escape_rate=rate,
                   projection_residual=tr.projection_residual)
        if derr > tol or abs(rate - cls.escape_rate) > 0.01 * cls.escape_rate:
            fail = f"distance error {derr:.3g}, escape rate {rate:.6g}"
    from .escort import PointSequence
    path = os.path.join(out, "trajectory.csv")
    write_csv(PointSequence(model, tr.positions, tr.times), path)
    files = [("classification", [rec]), ("@trajectory.csv", None), ("@trajectory.csv.cfg", None)]
    if fail:
        raise _Partial(files, fail)
    return files, cls.regime


def cmd_warped_demo(cfg, out):
    sizes = [int(s) for s in cfg.get_floats("sizes", (100, 1000, 10000))]
    tol = _tol(cfg, 1e-2)
    rows = []
    bad = []
    o = M.point(M.WARPED, 0.0, 0.0)
    for n in sizes:
        d = M.distance(M.WARPED, o, M.point(M.WARPED, float(n), 0.0))
        hi = n + 2 * math.log(n) + 1
        ok = n <= d <= hi
        rows.append({"n": n, "distance": d, "lower": float(n), "upper": hi, "inside": ok})
        if not ok:
            bad.append(f"d at n={n} outside [n, n + 2 ln n + 1]")
    n = int(_horizon(cfg, max(sizes)))
    pf = R.past_future_compare(R.warped_xshift(1.0), o, n)
    vf, vb = pf.fwd.vector.components, pf.bwd.vector.components
    mirror = max(abs(vf[0] + vb[0]), abs(vf[1] - vb[1]))
    opposite = bool(np.allclose(vf, -np.asarray(vb), atol=tol))
    esc = {"n": n, "rate": pf.norm_fwd, "forward": list(vf), "backward": list(vb),
           "mirror_gap": mirror, "opposite": opposite}
    if abs(pf.norm_fwd - 1) > 0.02:
        bad.append(f"rate {pf.norm_fwd:.6g} not within 2% of 1")
    if mirror > tol or opposite or np.allclose(vf, vb, atol=tol):
        bad.append("forward/backward directions are not mirror images")
    files = [("distances", rows), ("escort", [esc])]
    if bad:
        raise _Partial(files, "; ".join(bad))
    return files, f"rate {pf.norm_fwd:.6g}"


def cmd_semiconj(cfg, out):
    kind = cfg.get_str("flow", "magnetic")
    T = float(_horizon(cfg, 200.0))
    tol = _tol(cfg, 0.03)
    if kind == "magnetic":
        v = cfg.get_float("speed", 2.0)
        rate = F.classify_magnetic(v).escape_rate
        if rate <= 0:
            raise ConfigError("semiconj needs a supercritical speed v > 1")
        orbit = F.magnetic_bundle_orbit(v, T / rate * (1 + 1e-9), cfg.get_float("dt", 0.01 / max(1.0, v)))
    elif kind == "warped-xshift":
        orbit = F.xshift_bundle_orbit(T, cfg.get_float("dt", 1.0))
    else:
        raise ConfigError(f"unknown flow {kind!r}; use magnetic or warped-xshift")
    data = F.build_semiconjugacy(orbit, T, slope_tol=tol)
    gap = F.cocycle_gap(data, orbit, rng_seed=cfg.rng_seed)
    rec = {"flow": kind, "T": T, "slope": data.slope, "lipschitz": data.lipschitz,
           "time_scale": data.time_scale, "cocycle_gap": gap,
           "phi1_base": list(data.phi1.base.coords), "phi1_vector": list(data.phi1.components)}
    files = [("cocycle", data.rows()), ("summary", [rec])]
    if gap > 1e-6:
        raise _Partial(files, f"cocycle additivity gap {gap:.3g}")
    return files, f"slope {data.slope:.6f}"


def cmd_geometry_suite(cfg, out):
    n = cfg.get_int("instances", 10_000)
    nc = cfg.get_int("cone_instances", 1000)
    nb = cfg.get_int("busemann_instances", 1000)
    res = S.geometry_suite(n, nc, cfg.rng_seed) + S.busemann_suite(nb, cfg.rng_seed)
    if cfg.tolerance is not None:
        for r in res:
            r.tol = cfg.tolerance
    rows = [r.row() for r in res]
    failed = [f"{r.name}/{r.model}" for r in res if not r.passed]
    if failed:
        raise _Partial([("results", rows)], "failed: " + ", ".join(failed))
    return [("results", rows)], f"{len(res)} properties pass"


HANDLERS = {
    "rotation-map": cmd_rotation_map, "rotation-flow": cmd_rotation_flow,
    "periodic-norm": cmd_periodic_norm, "past-future": cmd_past_future,
    "alignment-ensemble": cmd_alignment_ensemble, "magnetic": cmd_magnetic,
    "warped-demo": cmd_warped_demo, "semiconj": cmd_semiconj, "geometry-suite": cmd_geometry_suite,
}


class _Partial(CheckFailure):
    """A check failed after results were computed; the results are still written."""

    def __init__(self, files, message):
        super().__init__(message)
        self.files = files


# ---------------------------------------------------------------------------
# driver

def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (CheckFailure, VisibilityError)):
        return EXIT_CHECK
    if isinstance(exc, (NumericError, DomainExitError, FitError, LiftError)):
        return EXIT_NUMERIC
    if isinstance(exc, DomainError):
        return EXIT_CONFIG
    return EXIT_NUMERIC


def run(cfg: ExperimentConfig, out: str) -> tuple:
    """Execute one command; writes results and ``record.json`` into ``out``.

    Returns (exit status, RunRecord).
    """
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    status, message, files = EXIT_OK, "", []
    try:
        files, message = HANDLERS[cfg.command](cfg, out)
    except _Partial as exc:
        files, message, status = exc.files, str(exc), EXIT_CHECK
    except EscortLabError as exc:
        message, status = f"{type(exc).__name__}: {exc}", _exit_code(exc)
    outputs = []
    for stem, rows in files:
        if stem.startswith("@"):
            path = os.path.join(out, stem[1:])
        else:
            path = write_rows(os.path.join(out, stem), rows, cfg.format)
        outputs.append({"path": os.path.basename(path), "sha256": file_sha256(path),
                        "bytes": os.path.getsize(path)})
    rec = RunRecord(cfg.digest(), __version__, round(time.perf_counter() - t0, 6),
                    outputs, cfg.sections(), status, message)
    atomic_write(os.path.join(out, "record.json"), rec.to_json())
    return status, rec


def _merge(args, command: str | None) -> ExperimentConfig:
    data = {"run": {}, "params": {}, "inputs": {}}
    if args.config:
        base = load_config(args.config)
        data = base.sections()
        data.setdefault("params", {})
        data.setdefault("inputs", {})
    run_ = data["run"]
    if command:
        if run_.get("command", command) != command:
            raise ConfigError(f"config is for {run_['command']!r}, not {command!r}")
        run_["command"] = command
    if args.seed is not None:
        run_["rng_seed"] = str(args.seed)
    if args.horizon is not None:
        run_["horizon"] = str(args.horizon)
    if args.tolerance is not None:
        run_["tolerance"] = str(args.tolerance)
    if args.format is not None:
        run_["format"] = args.format
    if args.model is not None:
        run_["model"] = args.model
    for kv in args.set or []:
        if "=" not in kv:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        data["params"][k.strip()] = v.strip()
    if not data["params"]:
        del data["params"]
    if not data["inputs"]:
        del data["inputs"]
    return config_from_mapping(data)


def _common(p):
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--out", default="escortlab-out", help="output directory")
    p.add_argument("--seed", type=int, help="rng seed")
    p.add_argument("--horizon", type=float, help="orbit length n or time T")
    p.add_argument("--tolerance", type=float, help="check tolerance")
    p.add_argument("--format", choices=("csv", "jsonl"), help="results format")
    p.add_argument("--model", help="model chart tag")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="command parameter")


HELP = {
    "rotation-map": "rotation vector of a covered map (torus, perturbed torus, Moebius, warped shift) or a recorded orbit",
    "rotation-flow": "rotation vector of a covered flow (geodesic or suspension)",
    "periodic-norm": "periodic-orbit norms of p-th roots of a Moebius map (default z -> 4z)",
    "past-future": "forward against backward rotation vectors of a covered map",
    "alignment-ensemble": "aligned fraction over a random-product or single-isometry ensemble",
    "magnetic": "integrate and classify a magnetic trajectory",
    "warped-demo": "distance growth and mirror-image escorts in the warped plane",
    "semiconj": "semi-conjugacy to the geodesic flow for a magnetic orbit",
    "geometry-suite": "randomized geometry and Busemann property suites",
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="escortlab", description="Rotation vectors via geodesic escorts.")
    p.add_argument("--version", action="version", version=f"escortlab {__version__}")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    for c in COMMANDS:
        _common(sub.add_parser(c, help=HELP[c]))
    _common(sub.add_parser("run", help="run the command named in --config"))
    pp = sub.add_parser("plot", help="render a trajectory CSV to SVG")
    pp.add_argument("input")
    pp.add_argument("--style", choices=STYLES, default="xy")
    pp.add_argument("--out", required=True)
    pp.add_argument("--closed", action="store_true", help="draw a closed outline")
    pp.add_argument("--model", help="model chart tag when the input has no sidecar")
    pr = sub.add_parser("rerun", help="repeat a run from its record and compare outputs")
    pr.add_argument("record")
    pr.add_argument("--out", help="output directory (default: <record dir>/rerun)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.cmd is None:
            raise ConfigError("a command is required; see escortlab --help")
        if args.cmd == "plot":
            emit_plot(args.input, args.style, args.out, closed=args.closed, model=args.model)
            return EXIT_OK
        if args.cmd == "rerun":
            return _rerun(args)
        cfg = _merge(args, None if args.cmd == "run" else args.cmd)
        status, rec = run(cfg, args.out)
    except ConfigError as exc:
        print(f"escortlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EscortLabError as exc:
        print(f"escortlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    print(f"{cfg.command}: {rec.message or 'ok'} (exit {status})")
    return status


def _rerun(args) -> int:
    try:
        with open(args.record, encoding="utf-8") as fh:
            rec = RunRecord.from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read record: {exc}")
    cfg = rec.experiment()
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.record)), "rerun")
    status, new = run(cfg, out)
    old = {o["path"]: o["sha256"] for o in rec.outputs}
    now = {o["path"]: o["sha256"] for o in new.outputs}
    if old != now:
        print("rerun: outputs differ from the record", file=sys.stderr)
        return EXIT_CHECK
    print(f"rerun: {len(now)} outputs identical (exit {status})")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line front end.

Subcommands take flat key=value parameters (plus an optional config file with
one section per subcommand) and write CSV artifacts plus a manifest into the
output directory.  Parsing is strict: unknown keys fail with exit code 2.
Numerical aborts exit 3 after flushing whatever diagnostics exist; I/O errors
exit 4.  Data files carry no wall-clock information, so identical configs
produce byte-identical CSVs.
"""

import argparse
import configparser
import hashlib
import os
import sys
import time

import numpy as np

from . import __version__
from . import diffgeo as dg
from . import filament as fl
from . import membrane as mb
from . import sphereprod as sp
from . import validate as val
from .errors import (
    CollapseError,
    DegenerateImmersionError,
    EvolutionAbort,
    FrameDegeneracyError,
)

NUMERICAL_ERRORS = (
    EvolutionAbort,
    DegenerateImmersionError,
    FrameDegeneracyError,
    CollapseError,
    FloatingPointError,
)


class ConfigError(ValueError):
    """Bad or unknown configuration keys/values (exit code 2)."""


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _as_int(s):
    v = float(s)
    if v != int(v):
        raise ConfigError(f"expected an integer, got {s!r}")
    return int(v)


def _as_bool(s):
    if str(s).lower() in ("1", "true", "yes", "on"):
        return True
    if str(s).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


# key -> (parser, default); REQUIRED marks keys without defaults
REQUIRED = object()

SCHEMAS = {
    "sphere-run": {
        "m": (_as_int, REQUIRED), "l": (_as_int, REQUIRED),
        "a": (float, REQUIRED), "b": (float, REQUIRED),
        "dt": (float, 1e-4), "T": (float, None), "mode": (str, "fixed"),
        "a_stop": (float, sp.A_STOP_DEFAULT), "stride": (_as_int, 1),
    },
    "filament-run": {
        "shape": (str, REQUIRED), "R": (float, 1.0), "eps": (float, 0.05),
        "k": (_as_int, 3), "N": (_as_int, 128), "dt": (float, 1e-3),
        "T": (float, 1.0), "stride": (_as_int, 0), "reparam_every": (_as_int, 10),
        "scheme": (str, "fd4"), "curve_file": (str, None),
    },
    "darios-run": {
        "shape": (str, REQUIRED), "R": (float, 1.0), "eps": (float, 0.05),
        "k": (_as_int, 3), "N": (_as_int, 256), "dt": (float, 1e-4),
        "T": (float, 0.2), "stride": (_as_int, 0), "curve_file": (str, None),
    },
    "nls-run": {
        "source": (str, "plane"), "A": (float, 1.0), "M": (_as_int, 256),
        "L": (float, 2.0 * np.pi), "shape": (str, "perturbed_circle"),
        "R": (float, 1.0), "eps": (float, 0.05), "k": (_as_int, 3),
        "N": (_as_int, 256), "dt": (float, 1e-3), "T": (float, 1.0),
        "stride": (_as_int, 0), "curve_file": (str, None),
    },
    "fluid-run": {
        "shape": (str, REQUIRED), "R": (float, 1.0), "eps": (float, 0.05),
        "k": (_as_int, 3), "N": (_as_int, 256), "dt": (float, 1e-4),
        "T": (float, 0.2), "stride": (_as_int, 0), "curve_file": (str, None),
    },
    "membrane-run": {
        "surface": (str, REQUIRED), "a": (float, REQUIRED), "b": (float, REQUIRED),
        "eps": (float, 0.0), "k1": (_as_int, 2), "k2": (_as_int, 3),
        "n1": (_as_int, 64), "n2": (_as_int, 64), "dt": (float, 1e-3),
        "T": (float, 0.2), "stride": (_as_int, 10), "order": (_as_int, 2),
        "snapshots": (_as_bool, True), "surface_file": (str, None),
    },
    "crosscheck": {
        "mode": (str, REQUIRED), "R": (float, 1.0), "eps": (float, 0.05),
        "k": (_as_int, 3), "N": (_as_int, 256), "a": (float, 1.0),
        "b": (float, 2.0), "n1": (_as_int, 64), "n2": (_as_int, 64),
        "dt": (float, 1e-4), "T": (float, 0.2), "order": (_as_int, 4),
        "tol": (float, 5e-3), "tol_radii": (float, 1e-2),
    },
    "validate": {
        "suite": (str, "all"),
    },
}

_FLAG_KEYS = {"dt": "dt", "T": "T", "stride": "stride"}


def parse_params(subcommand, pairs, config_path=None, flag_overrides=None):
    """Merge config-file section, key=value pairs, and common flags; strict."""
    schema = SCHEMAS[subcommand]
    raw = {}
    if config_path:
        parser = configparser.ConfigParser(delimiters=(":", "="))
        parser.optionxform = str
        with open(config_path) as fh:
            parser.read_file(fh)
        if parser.has_section(subcommand):
            raw.update(dict(parser.items(subcommand)))
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"parameters must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        raw[key.strip()] = value.strip()
    for key, value in (flag_overrides or {}).items():
        if value is not None:
            raw[key] = value
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {subcommand}: {', '.join(unknown)}")
    params = {}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                params[key] = parse(raw[key])
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})")
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r} for {subcommand}")
        else:
            params[key] = default
    return params


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.17g}"


def atomic_write(path, text):
    tmp = f"{path}.part"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(outdir, subcommand, params, wall_time):
    items = " ".join(f"{k}={params[k]}" for k in sorted(params))
    digest = hashlib.sha256(f"{subcommand} {items}".encode()).hexdigest()
    text = (
        f"tool skewflow {__version__}\n"
        f"subcommand {subcommand}\n"
        f"config {items}\n"
        f"config_sha256 {digest}\n"
        f"wall_time_s {wall_time:.3f}\n"
    )
    atomic_write(os.path.join(outdir, "manifest.txt"), text)


def _curve_from_params(p):
    if p.get("curve_file"):
        return fl.curve_from_immersion(dg.load_immersion(p["curve_file"]))
    return fl.build_curve(p["shape"], p["N"], R=p["R"], eps=p["eps"], k=p["k"])


# ---------------------------------------------------------------------------
# subcommand runners: return (exit_code, files) with files written by caller
# ---------------------------------------------------------------------------

def run_sphere(p, outdir):
    state = sp.SphereProductState(p["m"], p["l"], p["a"], p["b"])
    if p["mode"] == "to-collapse":
        traj = sp.run_to_collapse(state, p["dt"], a_stop=p["a_stop"], record_every=p["stride"])
    elif p["mode"] == "fixed":
        if p["T"] is None:
            raise ConfigError("fixed mode needs T")
        traj = sp.evolve_numeric(state, p["dt"], p["T"], record_every=p["stride"])
    else:
        raise ConfigError(f"unknown mode {p['mode']!r}")
    table = sp.trajectory_table(traj)
    cols = ["t", "a", "b", "hamiltonian", "volume", "willmore", "dW_dt"]
    rows = zip(*(table[c] for c in cols))
    write_csv(os.path.join(outdir, "sphere.csv"), cols, rows)
    return 0


def _write_curve_outputs(outdir, traj):
    rows = []
    diag = []
    for t, curve in zip(traj.times, traj.curves):
        for idx, (x, y, z) in enumerate(curve.points):
            rows.append((t, idx, x, y, z))
        diag.append((t, fl.curve_length(curve), fl.willmore_1d(curve)))
    write_csv(os.path.join(outdir, "trajectory.csv"), ["t", "index", "x", "y", "z"], rows)
    write_csv(os.path.join(outdir, "diagnostics.csv"), ["t", "length", "willmore"], diag)


def run_filament(p, outdir):
    curve = _curve_from_params(p)
    nsteps = int(round(p["T"] / p["dt"]))
    stride = p["stride"] or max(1, nsteps // 10)
    try:
        traj = fl.evolve_filament(
            curve, p["dt"], p["T"], stride=stride,
            reparam_every=p["reparam_every"], scheme=p["scheme"],
        )
    except EvolutionAbort as exc:
        sys.stderr.write(f"filament run aborted: {exc}\n")
        return 3
    _write_curve_outputs(outdir, traj)
    return 0


def run_darios(p, outdir):
    fr = fl.frenet_data(fl.arclength_resample(_curve_from_params(p)))
    nsteps = int(round(p["T"] / p["dt"]))
    stride = p["stride"] or max(1, nsteps // 10)
    kappa, tau = fr.kappa, fr.tau
    rows, diag = [], []

    def record(t, kappa, tau):
        for idx in range(kappa.size):
            rows.append((t, idx, fr.s[idx], kappa[idx], tau[idx]))
        diag.append((t, float(np.sum(kappa ** 2) * fr.ds)))

    record(0.0, kappa, tau)
    code = 0
    for chunk in range(nsteps // stride):
        try:
            kappa, tau = fl.darios_evolve(kappa, tau, fr.length, p["dt"], stride * p["dt"])
        except EvolutionAbort as exc:
            sys.stderr.write(f"curvature/torsion run aborted: {exc}\n")
            code = 3
            break
        record((chunk + 1) * stride * p["dt"], kappa, tau)
    write_csv(os.path.join(outdir, "fields.csv"), ["t", "index", "s", "kappa", "tau"], rows)
    write_csv(os.path.join(outdir, "diagnostics.csv"), ["t", "willmore"], diag)
    return code


def run_nls(p, outdir):
    if p["source"] == "plane":
        wave = fl.WaveField(np.full(p["M"], p["A"], dtype=complex), p["L"])
    elif p["source"] == "curve":
        fr = fl.frenet_data(fl.arclength_resample(_curve_from_params(p)))
        wave, holonomy = fl.hasimoto(fr)
        if fl.holonomy_defect(holonomy) > 1e-8:
            sys.stderr.write(
                f"warning: holonomy angle {holonomy:.6g} is not a multiple of 2*pi; "
                "wave samples are the quasi-periodic representative\n"
            )
    else:
        raise ConfigError(f"unknown source {p['source']!r}")
    nsteps = int(round(p["T"] / p["dt"]))
    stride = p["stride"] or max(1, nsteps // 10)
    rows, diag = [], []

    def record(t, w):
        for idx, z in enumerate(w.psi):
            rows.append((t, idx, z.real, z.imag, abs(z)))
        diag.append((t, w.mass()))

    record(0.0, wave)
    code = 0
    for chunk in range(nsteps // stride):
        try:
            wave = fl.nls_evolve(wave, p["dt"], stride * p["dt"])
        except EvolutionAbort as exc:
            sys.stderr.write(f"wave run aborted: {exc}\n")
            code = 3
            break
        record((chunk + 1) * stride * p["dt"], wave)
    write_csv(os.path.join(outdir, "psi.csv"), ["t", "index", "re", "im", "abs"], rows)
    write_csv(os.path.join(outdir, "diagnostics.csv"), ["t", "mass"], diag)
    return code


def run_fluid(p, outdir):
    fr = fl.frenet_data(fl.arclength_resample(_curve_from_params(p)))
    state = fl.to_fluid(fr)
    nsteps = int(round(p["T"] / p["dt"]))
    stride = p["stride"] or max(1, nsteps // 10)
    rows, diag = [], []

    def record(t, st):
        for idx in range(st.rho.size):
            rows.append((t, idx, st.rho[idx], st.v[idx]))
        diag.append((t, st.mass()))

    record(0.0, state)
    code = 0
    for chunk in range(nsteps // stride):
        try:
            state = fl.fluid_evolve(state, p["dt"], stride * p["dt"])
        except EvolutionAbort as exc:
            sys.stderr.write(f"fluid run aborted: {exc}\n")
            code = 3
            break
        record((chunk + 1) * stride * p["dt"], state)
    write_csv(os.path.join(outdir, "fluid.csv"), ["t", "index", "rho", "v"], rows)
    write_csv(os.path.join(outdir, "diagnostics.csv"), ["t", "mass"], diag)
    return code


def run_membrane(p, outdir):
    if p.get("surface_file"):
        imm = dg.load_immersion(p["surface_file"])
    elif p["surface"] == "torus_product":
        imm = dg.torus_immersion(p["a"], p["b"], (p["n1"], p["n2"]))
    elif p["surface"] == "perturbed_torus":
        imm = dg.perturbed_torus_immersion(
            p["a"], p["b"], p["eps"], p["k1"], p["k2"], (p["n1"], p["n2"])
        )
    else:
        raise ConfigError(f"unknown surface {p['surface']!r}")
    code = 0
    try:
        traj = mb.evolve_membrane(imm, p["dt"], p["T"], stride=p["stride"], order=p["order"])
    except EvolutionAbort as exc:
        sys.stderr.write(f"membrane run aborted: {exc}\n")
        if exc.state is None:
            raise
        traj = mb.MembraneTrajectory(np.array([0.0]), [exc.state], order=p["order"])
        code = 3
    if p["snapshots"]:
        for i, (t, snap) in enumerate(zip(traj.times, traj.snapshots)):
            dg.save_immersion(snap, os.path.join(outdir, f"snapshot_{i:04d}.txt"))
    if len(traj.snapshots) >= 3:
        cols = mb.diagnostics(traj)
    else:
        cols = {"t": traj.times, "willmore": [np.nan] * len(traj.snapshots)}
    names = list(cols)
    write_csv(os.path.join(outdir, "diagnostics.csv"), names, zip(*(cols[k] for k in names)))
    return code


def run_crosscheck(p, outdir, tol_scale=1.0):
    rows = []
    failed = False
    p = dict(p, tol=p["tol"] * tol_scale, tol_radii=p["tol_radii"] * tol_scale)
    if p["mode"] == "filament-square":
        c0 = fl.arclength_resample(fl.build_curve("perturbed_circle", p["N"], R=p["R"], eps=p["eps"], k=p["k"]))
        fr0 = fl.frenet_data(c0)
        profiles, status = {}, {}
        traj = fl.evolve_filament(c0, p["dt"], p["T"], reparam_every=10)
        profiles["filament"] = fl.frenet_data(traj.final).kappa
        status["filament"] = "ok"
        try:
            kappa, tau = fl.darios_evolve(fr0.kappa, fr0.tau, fr0.length, p["dt"], p["T"])
            profiles["darios"] = kappa
            status["darios"] = "ok"
        except EvolutionAbort as exc:
            status["darios"] = f"singular ({type(exc).__name__})"
        wave0, holonomy = fl.hasimoto(fr0)
        if fl.holonomy_defect(holonomy) > 1e-8:
            status["nls"] = "skipped (holonomy obstruction)"
        else:
            profiles["nls"] = np.abs(fl.nls_evolve(wave0, p["dt"], p["T"]).psi)
            status["nls"] = "ok"
        try:
            profiles["fluid"] = np.sqrt(fl.fluid_evolve(fl.to_fluid(fr0), p["dt"], p["T"]).rho)
            status["fluid"] = "ok"
        except (EvolutionAbort, ValueError) as exc:
            status["fluid"] = f"singular ({type(exc).__name__})"
        names = ["filament", "darios", "nls", "fluid"]
        for i, u in enumerate(names):
            for v in names[i + 1:]:
                if u in profiles and v in profiles:
                    gap = float(np.max(np.abs(profiles[u] - profiles[v])))
                    ok = gap <= p["tol"]
                    failed = failed or not ok
                    rows.append((f"{u}/{v}", _fmt(gap), _fmt(p["tol"]), "pass" if ok else "fail"))
                else:
                    rows.append((f"{u}/{v}", "nan", _fmt(p["tol"]),
                                 f"skipped: {status[u]}; {status[v]}"))
    elif p["mode"] == "sphere-membrane":
        imm = dg.torus_immersion(p["a"], p["b"], (p["n1"], p["n2"]))
        traj = mb.evolve_membrane(imm, p["dt"], p["T"], stride=max(1, int(round(p["T"] / p["dt"]))), order=p["order"])
        a_num, b_num = mb.extract_radii(traj.snapshots[-1])
        ex = sp.closed_form(sp.SphereProductState(1, 1, p["a"], p["b"]), p["T"])
        for name, got, want in [("a", a_num, ex.a), ("b", b_num, ex.b)]:
            gap = abs(got / want - 1.0)
            ok = gap <= p["tol_radii"]
            failed = failed or not ok
            rows.append((f"radius_{name}", _fmt(gap), _fmt(p["tol_radii"]), "pass" if ok else "fail"))
    else:
        raise ConfigError(f"unknown crosscheck mode {p['mode']!r}")
    write_csv(os.path.join(outdir, "crosscheck.csv"), ["pair", "linf_gap", "tol", "status"], rows)
    for row in rows:
        print("  ".join(str(x) for x in row))
    return 1 if failed else 0


def run_validate(p, outdir, tol_scale):
    only = None if p["suite"] == "all" else [s.strip() for s in p["suite"].split(",")]
    results = val.run_all(tol_scale=tol_scale, only=only)
    for r in results:
        print(f"{r.line()}   [{r.seconds:.1f}s]")
    if outdir:
        rows = [(r.check_id, r.name, "pass" if r.passed else "fail", r.details) for r in results]
        write_csv(os.path.join(outdir, "validate.csv"), ["check", "name", "status", "details"], rows)
    return 0 if results and all(r.passed for r in results) else 1


RUNNERS = {
    "sphere-run": run_sphere,
    "filament-run": run_filament,
    "darios-run": run_darios,
    "nls-run": run_nls,
    "fluid-run": run_fluid,
    "membrane-run": run_membrane,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="skewflow",
        description="binormal / skew-mean-curvature flow toolkit",
    )
    parser.add_argument("--version", action="version", version=f"skewflow {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SCHEMAS:
        s = sub.add_parser(name, help=f"{name} (keys: {', '.join(SCHEMAS[name])})")
        s.add_argument("params", nargs="*", help="key=value parameters")
        s.add_argument("--out", default=None, help="output directory (default runs/<subcommand>)")
        s.add_argument("--config", default=None, help="config file with [subcommand] sections")
        s.add_argument("--dt", default=None)
        s.add_argument("--T", default=None)
        s.add_argument("--stride", default=None)
        s.add_argument("--tol-profile", choices=("strict", "default"), default="default")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    name = args.subcommand
    flag_overrides = {key: getattr(args, attr) for key, attr in _FLAG_KEYS.items()}
    if name == "validate":
        flag_overrides = {}
    try:
        params = parse_params(name, args.params, args.config, flag_overrides)
    except (ConfigError, OSError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2

    outdir = args.out or os.path.join("runs", name)
    started = time.perf_counter()
    try:
        os.makedirs(outdir, exist_ok=True)
        tol_scale = 0.5 if args.tol_profile == "strict" else 1.0
        if name == "validate":
            code = run_validate(params, outdir, tol_scale)
        elif name == "crosscheck":
            code = run_crosscheck(params, outdir, tol_scale)
        else:
            code = RUNNERS[name](params, outdir)
        write_manifest(outdir, name, params, time.perf_counter() - started)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except ValueError as exc:
        # domain errors from builders/preconditions are configuration mistakes
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"numerical abort: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 4
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

    pclfmpc {build-sets,certify,table1,figures,sres,all} --config PATH
            [--out DIR] [--seed N] [--jobs N] [--no-cache]

``--config`` also accepts the bundled names ``example1`` and ``example2``.
Errors print one line ``pclfmpc-error <Kind>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import geometry as geo
from .errors import ConfigError, PclfMpcError
from .geometry import HPolytope
from .mpc import CONTROLLERS, MpcDesign, build_design
from .pclf import LinearSystem, Pclf, PclfCertificate
from .terminal import controllable_set_N, tilde_grid

ERROR_PREFIX = "pclfmpc-error"
BUNDLED = ("example1", "example2")

# ---------------------------------------------------------------------------
# configuration

_TOP_KEYS = {
    "name", "system", "constraints", "weights", "horizon", "eps", "c", "levels",
    "riccati_inputs", "xf_points", "controllers", "runs", "steps", "seed", "grid",
    "sres", "output",
}
_REQUIRED = {"system", "constraints", "weights", "horizon", "eps"}
_SRES_KEYS = {"deltas", "runs", "steps", "scale"}


@dataclass
class ExperimentConfig:
    name: str
    A: np.ndarray
    B: np.ndarray
    X: HPolytope
    U: HPolytope
    Q: np.ndarray
    R: np.ndarray
    horizon: int
    eps: float
    c: float | None = 1.0
    levels: int = 20
    riccati_inputs: list | None = None
    xf_points: int = 1000
    controllers: tuple = CONTROLLERS
    runs: int = 20
    steps: int = 100
    seed: int = 0
    grid: int = 200
    sres: dict = field(default_factory=lambda: {
        "deltas": [1e-1, 1e-2, 1e-3, 1e-4], "runs": 50, "steps": 100, "scale": 0.8})
    output: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def system(self) -> LinearSystem:
        return LinearSystem(self.A, self.B)

    def set_key(self) -> str:
        """Content hash of everything the set construction depends on."""
        keys = ("system", "constraints", "weights", "horizon", "eps", "c", "levels",
                "riccati_inputs", "xf_points")
        blob = json.dumps({k: self.raw.get(k) for k in keys}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _matrix(value, where, shape=None):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a numeric matrix") from None
    if M.ndim != 2:
        raise ConfigError(f"{where}: expected a list of rows")
    if shape is not None and M.shape != shape:
        raise ConfigError(f"{where}: expected shape {shape}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{where}: entries must be finite")
    return M


def _polytope(value, where, d):
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a mapping with lo/hi or H/h")
    keys = set(value)
    try:
        if keys == {"lo", "hi"}:
            lo = np.array(value["lo"], float)
            hi = np.array(value["hi"], float)
            if lo.shape != (d,) or hi.shape != (d,):
                raise ConfigError(f"{where}: lo and hi need {d} entries")
            return HPolytope.box(lo, hi)
        if keys == {"H", "h"}:
            H = _matrix(value["H"], f"{where}.H")
            h = np.array(value["h"], float)
            if H.shape[1] != d or h.shape != (H.shape[0],):
                raise ConfigError(f"{where}: H must have {d} columns and match h")
            return HPolytope(H, h)
    except PclfMpcError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {type(exc).__name__}: {exc}") from None
    raise ConfigError(f"{where}: unknown keys {sorted(keys)}; use lo/hi or H/h")


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    missing = _REQUIRED - set(data)
    if missing:
        raise ConfigError(f"{source}: missing keys {sorted(missing)}")

    sysd = data["system"]
    if not isinstance(sysd, dict) or set(sysd) != {"A", "B"}:
        raise ConfigError(f"{source}: system needs exactly A and B")
    A = _matrix(sysd["A"], "system.A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConfigError("system.A: must be square")
    B = _matrix(sysd["B"], "system.B")
    if B.shape[0] != n:
        raise ConfigError("system.B: row count must match A")
    m = B.shape[1]

    cons = data["constraints"]
    if not isinstance(cons, dict) or set(cons) != {"X", "U"}:
        raise ConfigError(f"{source}: constraints needs exactly X and U")
    X = _polytope(cons["X"], "constraints.X", n)
    U = _polytope(cons["U"], "constraints.U", m)

    w = data["weights"]
    if not isinstance(w, dict) or set(w) != {"Q", "R"}:
        raise ConfigError(f"{source}: weights needs exactly Q and R")
    Q = _matrix(w["Q"], "weights.Q", (n, n))
    R = _matrix(w["R"], "weights.R", (m, m))
    if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() < -1e-10:
        raise ConfigError("weights.Q: must be positive semidefinite")
    if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
        raise ConfigError("weights.R: must be positive definite")

    def integer(key, default, lo=1):
        v = data.get(key, default)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            raise ConfigError(f"{key}: expected an integer >= {lo}")
        return v

    eps = data["eps"]
    if not isinstance(eps, (int, float)) or not 0 < eps < 1:
        raise ConfigError("eps: expected a number in (0, 1)")
    c = data.get("c", 1.0)
    if c is not None and (not isinstance(c, (int, float)) or c <= 0):
        raise ConfigError("c: expected a positive number or null")
    ri = data.get("riccati_inputs")
    if ri is not None:
        if not isinstance(ri, list) or not all(isinstance(i, int) and 0 <= i < m for i in ri) or not ri:
            raise ConfigError(f"riccati_inputs: expected a list of column indices in 0..{m - 1}")
    ctrls = data.get("controllers", list(CONTROLLERS))
    if not isinstance(ctrls, list) or not ctrls or any(cn not in CONTROLLERS for cn in ctrls):
        raise ConfigError(f"controllers: expected a list drawn from {list(CONTROLLERS)}")
    sres = dict(ExperimentConfig.__dataclass_fields__["sres"].default_factory())
    if "sres" in data:
        s = data["sres"]
        if not isinstance(s, dict) or set(s) - _SRES_KEYS:
            raise ConfigError(f"sres: allowed keys are {sorted(_SRES_KEYS)}")
        sres.update(s)
        if not isinstance(sres["deltas"], list) or any(
                not isinstance(v, (int, float)) or v < 0 for v in sres["deltas"]):
            raise ConfigError("sres.deltas: expected a list of nonnegative numbers")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    name = data.get("name", Path(source).stem)

    return ExperimentConfig(
        name=str(name), A=A, B=B, X=X, U=U, Q=Q, R=R,
        horizon=integer("horizon", None), eps=float(eps),
        c=None if c is None else float(c), levels=integer("levels", 20, 2),
        riccati_inputs=ri, xf_points=integer("xf_points", 1000, 3),
        controllers=tuple(ctrls), runs=integer("runs", 20), steps=integer("steps", 100),
        seed=seed, grid=integer("grid", 200, 2), sres=sres,
        output=str(data.get("output", f"out/{name}")), raw=data,
    )


def load_config(path: str) -> ExperimentConfig:
    if path in BUNDLED:
        text = resources.files("pclfmpc").joinpath("configs").joinpath(f"{path}.yaml").read_text()
        source = f"{path}.yaml"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        source = path
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(yaml.compose(text))
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"{source}:{mark.line + 1}:{mark.column + 1}: {exc.problem}") from None
    if isinstance(data, dict):
        unknown = [k for k in data if k not in _TOP_KEYS]
        if unknown:
            raise ConfigError(f"{source}:{lines.get(str(unknown[0]), 0)}: unknown key {unknown[0]!r}")
    try:
        return parse_config(data, source)
    except ConfigError as exc:
        field_name = str(exc).split(":", 1)[0]
        line = lines.get(field_name) or lines.get(field_name.split(".")[0])
        if line is None or field_name == source:
            raise
        raise ConfigError(f"{source}:{line}: {exc}") from None


def _key_lines(node, prefix="", out=None) -> dict:
    """Dotted key path -> 1-based line of the key, for mapping nodes."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}{k.value}"
            out[path] = k.start_mark.line + 1
            _key_lines(v, path + ".", out)
    return out


def bundled_examples() -> dict:
    return {name: load_config(name) for name in BUNDLED}


# ---------------------------------------------------------------------------
# assets and cache


@dataclass
class Assets:
    design: MpcDesign
    XN: HPolytope
    cached: bool = False


def _poly_dict(P: HPolytope) -> dict:
    return P.to_dict(with_vertices=True)


def build_assets(cfg: ExperimentConfig, cache_dir: Path | None) -> Assets:
    sysm = cfg.system
    path = cache_dir / f"sets-{cfg.set_key()}.json" if cache_dir is not None else None
    if path is not None and path.exists():
        blob = json.loads(path.read_text())
        pclf = Pclf.from_dict(blob["pclf"])
        cert = PclfCertificate.from_dict(blob["certificate"])
        design = build_design(sysm, cfg.X, cfg.U, cfg.Q, cfg.R, cfg.horizon, cfg.eps, cfg.c,
                              cfg.riccati_inputs, cfg.xf_points, cfg.levels, pclf, cert)
        XN = HPolytope.from_dict(blob["XN"], validate=False)
        return Assets(design, XN, cached=True)
    design = build_design(sysm, cfg.X, cfg.U, cfg.Q, cfg.R, cfg.horizon, cfg.eps, cfg.c,
                          cfg.riccati_inputs, cfg.xf_points, cfg.levels)
    XN = controllable_set_N(sysm, cfg.X, cfg.U, design.xf_poly, cfg.horizon)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_sets_blob(design, XN), sort_keys=True))
    return Assets(design, XN)


def _sets_blob(design: MpcDesign, XN: HPolytope) -> dict:
    return {
        "pclf": design.pclf.to_dict(),
        "certificate": design.cert.to_dict(),
        "XN": _poly_dict(XN),
        "X_inf": _poly_dict(design.pclf.set),
        "Xf": {"P": design.xf.P.tolist(), "alpha": design.xf.alpha, "K": design.xf.K.tolist(),
               "polytope": _poly_dict(design.xf_poly)},
    }


# ---------------------------------------------------------------------------
# outputs


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _f(v) -> str:
    return repr(float(v))


def cmd_build_sets(cfg, assets: Assets, out: Path, args) -> None:
    (out / "sets.json").write_text(json.dumps(_sets_blob(assets.design, assets.XN),
                                              sort_keys=True, indent=1))
    d = assets.design
    print(f"X_inf: {d.pclf.r} facets, {d.pclf.vertices().shape[1]} vertices, "
          f"{d.pclf.iterations} iterations, converged={d.pclf.converged}")
    print(f"X_N (N={cfg.horizon}): {assets.XN.q} facets; X_f alpha = {d.xf.alpha:.6g}"
          + (" [cache]" if assets.cached else ""))


def cmd_certify(cfg, assets: Assets, out: Path, args) -> None:
    cert = assets.design.cert
    (out / "certificate.json").write_text(json.dumps(cert.to_dict(), sort_keys=True, indent=1))
    _write_csv(out / "level_table.csv", ["level", "lambda_star", "beta_star"],
               [[_f(s), _f(lam), _f(b)] for s, lam, b in cert.level_table])
    print(f"lambda = {cert.lam:.6g} (verified {cert.lam_verified:.6g})")
    print(f"alpha1 = {cert.alpha1:.6g}, alpha2 = {cert.alpha2:.6g}, alpha3 = {cert.alpha3:.6g}")
    print(f"c = {cert.c:.6g}, beta* = {cert.beta_star:.6g}, "
          f"beta*(smallest level) = {cert.level_table[0][2]:.6g}")


def cmd_table1(cfg, assets: Assets, out: Path, args) -> None:
    from .simulate import table1_experiment

    res = table1_experiment(assets.design, cfg.steps, cfg.runs, seed=args.seed,
                            controllers=cfg.controllers, jobs=args.jobs)
    n = cfg.A.shape[0]
    header = ["run"] + [f"x0_{i + 1}" for i in range(n)] + ["reference"]
    header += [f"cost_{c}" for c in res.controllers] + [f"ratio_{c}" for c in res.controllers]
    rows = []
    for k, r in enumerate(res.runs):
        rows.append([k] + [_f(v) for v in r.x0] + [_f(r.reference)]
                    + [_f(r.costs[c]) for c in res.controllers]
                    + [_f(r.ratios[c]) for c in res.controllers])
    _write_csv(out / "table1_runs.csv", header, rows)
    means = res.mean_ratios()
    _write_csv(out / "table1.csv", [f"ratio_{c}" for c in res.controllers],
               [[f"{means[c]:.6f}" for c in res.controllers]])
    print("mean ratios: " + ", ".join(f"{c} {means[c]:.4f}" for c in res.controllers))


def cmd_sres(cfg, assets: Assets, out: Path, args) -> None:
    from .simulate import sres_sweep

    d = assets.design
    s = cfg.sres
    x0s = geo.sample(geo.scale(d.pclf.set, s["scale"]), "interior", s["runs"], seed=args.seed)
    report = sres_sweep(d, x0s, s["deltas"], s["steps"], s["runs"], seed=args.seed)
    diam = _diameter(d.pclf.vertices())
    _write_csv(out / "sres.csv", ["delta", "feasibility_rate", "tail_radius", "runs", "diameter"],
               [[_f(r.delta), _f(r.feasibility_rate), _f(r.tail_radius), r.runs, _f(diam)]
                for r in report])
    for r in report:
        print(f"delta {r.delta:.0e}: feasible {100 * r.feasibility_rate:.0f}%, "
              f"tail radius {r.tail_radius:.3g}")


def _diameter(V) -> float:
    diff = V[:, :, None] - V[:, None, :]
    return float(np.sqrt((diff ** 2).sum(axis=0)).max())


def cmd_figures(cfg, assets: Assets, out: Path, args) -> None:
    from .svg import sets_figure

    d = assets.design
    lo, hi = geo.bounding_box(d.pclf.set)
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    xs, ys, mask = tilde_grid(d, lo, hi, cfg.grid)
    rows = []
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            rows.append([_f(x), _f(y), int(mask[i, j])])
    _write_csv(out / "tilde_grid.csv", ["x1", "x2", "member"], rows)
    svg = sets_figure(
        lo, hi,
        x_inf=d.pclf.vertices().T,
        x_n=assets.XN.vertices().T,
        xf=d.xf_poly.vertices().T,
        tilde=(xs, ys, mask),
        title=cfg.name,
    )
    (out / "sets.svg").write_text(svg)
    print(f"wrote sets.svg ({int(mask.sum())} of {mask.size} grid points in the tilde region)")


COMMANDS = {
    "build-sets": [cmd_build_sets],
    "certify": [cmd_certify],
    "table1": [cmd_table1],
    "figures": [cmd_figures],
    "sres": [cmd_sres],
    "all": [cmd_build_sets, cmd_certify, cmd_figures, cmd_table1, cmd_sres],
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pclfmpc", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True,
                   help="YAML config path, or a bundled name (example1, example2)")
    p.add_argument("--out", help="output directory (default: the config's 'output')")
    p.add_argument("--seed", type=int, help="master seed (default: the config's 'seed')")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for table1")
    p.add_argument("--no-cache", action="store_true", help="rebuild sets even if cached")
    return p


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def run(argv=None) -> int:
    parser = build_parser()
    parser.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out = Path(args.out or cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        assets = build_assets(cfg, None if args.no_cache else out / "cache")
        for fn in COMMANDS[args.command]:
            fn(cfg, assets, out, args)
        print(f"done in {time.time() - t0:.1f} s; outputs in {out}")
        return 0
    except _ArgError as exc:
        print(f"{ERROR_PREFIX} UsageError: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{ERROR_PREFIX} ConfigError: {exc}", file=sys.stderr)
        return 2
    except PclfMpcError as exc:
        print(f"{ERROR_PREFIX} {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{ERROR_PREFIX} OSError: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

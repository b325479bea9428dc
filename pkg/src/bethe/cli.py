"""Command-line driver.

Subcommands ``verify``, ``dos``, ``lyapunov``, ``remainder`` and ``green``
each write ``PREFIX.csv`` (data) and ``PREFIX.json`` (summary plus the fully
resolved configuration). Options may also come from a JSON file given with
``--config``; explicit flags win. Exit codes: 0 success, 1 usage error,
2 numerical or size guard, 3 verification failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import random
import sys
import time
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .ergodic import KINDS, DisorderRealization, DisorderSpec
from .errors import BetheError, NumericalError, SizeGuardError, ValidationError
from .green import green_direct, green_rw, green_saw, m_free_closed, m_recursive
from .lattice import BetheLattice, format_vertex, parse_vertex
from .operator import Region, assemble
from .spectral import (
    DEFAULT_ETA,
    KestenMcKay,
    default_energy_grid,
    dos_eigen,
    dos_resolvent,
    thouless_integral,
)
from .thouless import (
    free_lyapunov,
    free_remainder_diff,
    lyapunov_mc,
    lyapunov_path,
    remainder_finite_parts,
    remainder_from_parts,
)

EXIT_OK, EXIT_USAGE, EXIT_GUARD, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- option handling -----------------------------------------------------------

# name -> (type, default, help); None defaults mean "required or derived"
_COMMON = {
    "kappa": (int, 2, "connectivity"),
    "threads": (int, 1, "worker threads (results do not depend on it)"),
    "out": (str, None, "output prefix; default is the subcommand name"),
}
_DISORDER = {
    "disorder": (str, "zero", f"distribution, one of {', '.join(KINDS)}"),
    "C": (float, 1.0, "uniform half-width"),
    "c": (float, 0.0, "constant value"),
    "p": (float, 0.5, "bernoulli probability of +w"),
    "w": (float, 1.0, "bernoulli amplitude"),
    "values": (str, None, "discrete values, comma separated"),
    "weights": (str, None, "discrete weights, comma separated"),
    "seed": (int, 0, "master seed"),
}
_OPTIONS: dict[str, dict[str, tuple]] = {
    "verify": {"quick": (bool, False, "smaller exhaustive ranges")},
    "dos": {
        "L": (int, 6, "radius (ball 2L is used)"),
        "eta": (float, DEFAULT_ETA, "smoothing width"),
        "samples": (int, 1, "disorder realizations"),
        "method": (str, "resolvent", "resolvent or eigen"),
        "points": (int, 1024, "grid points or histogram bins"),
        "emin": (float, None, "grid start"),
        "emax": (float, None, "grid end"),
        **_DISORDER,
    },
    "lyapunov": {
        "z": (str, "0", "energies or complex z, comma separated"),
        "eta": (float, DEFAULT_ETA, "imaginary part added to real entries"),
        "method": (str, "path", "path, mc or free"),
        "L": (int, 40, "path length"),
        "depth": (int, 200, "m-function recursion depth"),
        "samples": (int, 1, "disorder realizations"),
        "j": (int, 0, "child (0,j) for the mc method"),
        "a1": (int, 0, "first digit of the spine path"),
        **_DISORDER,
    },
    "remainder": {
        "z": (str, "0,1", "energies or complex z, comma separated"),
        "eta": (float, DEFAULT_ETA, "imaginary part added to real entries"),
        "analytic_dos": (bool, False, "free-Laplacian inputs (Kesten-McKay and (1/2) log kappa)"),
        "L": (int, 6, "radius for the estimated inputs and the finite-volume remainder"),
        "samples": (int, 1, "disorder realizations"),
        "finite": (bool, False, "also report the finite-volume remainder of realization 0"),
        **_DISORDER,
    },
    "green": {
        "L": (int, 3, "ball radius"),
        "x": (str, "0", "first vertex, e.g. 0,1,0"),
        "y": (str, "0,0", "second vertex"),
        "z": (str, "0.5+0.5j", "complex spectral parameter"),
        "engine": (str, "all", "direct, rw, saw, m or all"),
        "n_terms": (int, 40, "walk-series terms"),
        **_DISORDER,
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bethe", description="Bethe-lattice spectral workbench")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in _OPTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON file with option values")
        p.add_argument("--timestamp", action="store_true", help="record the wall-clock time in the JSON")
        if name == "dos":
            p.add_argument("--zero-disorder", dest="zero_disorder", action="store_true", default=None)
        for key, (typ, default, text) in {**_COMMON, **opts}.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=key, action="store_true", default=None, help=text)
            else:
                p.add_argument(flag, dest=key, type=typ, default=None, help=f"{text} (default {default})")
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, the config file and explicit flags (in that order)."""
    spec = {**_COMMON, **_OPTIONS[args.command]}
    file_cfg: dict[str, Any] = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        if isinstance(file_cfg.get("config"), dict):
            # a JSON sidecar written by a previous run
            file_cfg = dict(file_cfg["config"])
        file_cfg.pop("command", None)
        if "disorder" in file_cfg and isinstance(file_cfg["disorder"], dict):
            file_cfg.update(_flatten_disorder(file_cfg.pop("disorder")))
    allowed = set(spec) | ({"zero_disorder"} if args.command == "dos" else set())
    unknown = sorted(set(file_cfg) - allowed)
    if unknown:
        raise UsageError(f"unknown config field {unknown[0]!r} for {args.command}")
    cfg = {}
    for key, (typ, default, _) in spec.items():
        val = getattr(args, key)
        if val is None:
            val = file_cfg.get(key, default)
        if val is not None and typ is not bool:
            try:
                val = typ(val)
            except (TypeError, ValueError):
                raise UsageError(f"field {key!r} must be of type {typ.__name__}") from None
        cfg[key] = bool(val) if typ is bool else val
    zero_flag = getattr(args, "zero_disorder", None) or file_cfg.get("zero_disorder")
    if zero_flag:
        cfg["disorder"] = "zero"
    if cfg["threads"] < 1:
        raise UsageError("field 'threads' must be at least 1")
    if cfg["out"] is None:
        cfg["out"] = args.command
    return cfg


def _flatten_disorder(rec: dict) -> dict:
    out = {"disorder": rec.get("distribution", "zero"), "seed": rec.get("seed", 0)}
    params = rec.get("params", {}) or {}
    for k, v in params.items():
        out[k] = ",".join(map(str, v)) if isinstance(v, (list, tuple)) else v
    return out


def disorder_from_config(cfg: dict) -> DisorderSpec:
    kind = cfg.get("disorder", "zero")
    try:
        if kind == "zero":
            return DisorderSpec.zero()
        if kind == "constant":
            return DisorderSpec.constant(cfg["c"])
        if kind == "uniform":
            return DisorderSpec.uniform(cfg["C"], cfg["seed"])
        if kind == "bernoulli":
            return DisorderSpec.bernoulli(cfg["p"], cfg["w"], cfg["seed"])
        if kind == "discrete":
            if not cfg.get("values") or not cfg.get("weights"):
                raise UsageError("field 'values' and 'weights' are required for discrete disorder")
            vals = [float(v) for v in str(cfg["values"]).split(",")]
            wts = [float(v) for v in str(cfg["weights"]).split(",")]
            return DisorderSpec.discrete(vals, wts, cfg["seed"])
    except ValidationError as exc:
        raise UsageError(f"field 'disorder': {exc}") from None
    raise UsageError(f"field 'disorder' must be one of {', '.join(KINDS)}")


def parse_z_list(text: str, eta: float) -> list[complex]:
    """Comma-separated entries; purely real entries receive ``+ i eta``."""
    out = []
    for item in str(text).split(","):
        item = item.strip().replace(" ", "")
        if not item:
            continue
        try:
            z = complex(item)
        except ValueError:
            raise UsageError(f"field 'z': cannot parse {item!r}") from None
        out.append(complex(z.real, eta) if z.imag == 0 else z)
    if not out:
        raise UsageError("field 'z' is empty")
    return out


# -- subcommands ---------------------------------------------------------------


def _check(name: str, fn: Callable[[], tuple[bool, float]]) -> tuple[str, bool, float]:
    ok, detail = fn()
    return name, bool(ok), float(detail)


def run_verify(cfg: dict) -> tuple[list[str], list[list], dict, int]:
    k = cfg["kappa"]
    lat = BetheLattice(k)
    r = 3 if cfg["quick"] else 4
    ball = lat.ball(r)
    small = lat.ball(2 if cfg["quick"] else 3)
    rng = random.Random(12345)

    def closed_form():
        bad = sum(lat.shift(x, z) != lat.apply_word(lat.exponents_of(x), z) for x in ball for z in ball)
        return bad == 0, bad

    def composition_exact():
        # tau_x o tau_y = tau_{tau_x(y)} and its inverse form, as maps on the ball
        bad = 0
        for x, y in itertools.product(small, small):
            wx, wy = lat.exponents_of(x), lat.exponents_of(y)
            wxy = lat.exponents_of(lat.shift(x, y))
            wxiy = lat.exponents_of(lat.shift_inverse(x, y))
            for v in small:
                bad += lat.apply_word(wx, lat.apply_word(wy, v)) != lat.apply_word(wxy, v)
                bad += lat.apply_word_inverse(wx, lat.apply_word(wy, v)) != lat.apply_word(wxiy, v)
        return bad == 0, bad

    def composition_stabilizer():
        # tau_{tau_x(y)}^{-1} o tau_x o tau_y fixes the root and is a level-preserving automorphism
        bad = 0
        for x, y in itertools.product(small, small):
            xy = lat.shift(x, y)
            rho = {v: lat.shift_inverse(xy, lat.shift(x, lat.shift(y, v))) for v in small}
            bad += rho[()] != ()
            bad += any(len(rho[v]) != len(v) for v in small)
            bad += len(set(rho.values())) != len(small)
            bad += any(rho[v[:-1]] != rho[v][:-1] for v in small if v)
        return bad == 0, bad

    def automorphism():
        bad = 0
        for x in small:
            for u in small:
                for v in lat.children(u):
                    if v in small:
                        bad += lat.distance(lat.shift(x, u), lat.shift(x, v)) != 1
        return bad == 0, bad

    def telescoping():
        bad = sum(lat.vertex_of_word(lat.exponents_of(x)) != x for x in ball)
        return bad == 0, bad

    spec = DisorderSpec.uniform(1.0, 2024)
    region = Region.ball(lat, 2 if k > 2 else 3)

    def saw_direct():
        worst = 0.0
        for i in range(20):
            omega = DisorderRealization.sample(lat, spec, i)
            H = assemble(region, omega)
            x, y = rng.sample(region.vertices, 2)
            z = complex(rng.uniform(-2, 2), rng.uniform(0.1, 2))
            d = green_direct(H, z, x, y)
            worst = max(worst, abs(green_saw(region, omega, z, x, y) - d) / abs(d))
        return worst <= 1e-9, worst

    def rw_bound():
        omega = DisorderRealization.sample(lat, spec, 0)
        H = assemble(region, omega)
        x, y = region.vertices[0], region.vertices[-1]
        z = 10j
        sums, bounds = green_rw(H, z, x, y, 12, partials=True)
        d = green_direct(H, z, x, y)
        worst = max(abs(s - d) / b for s, b in zip(sums, bounds))
        return worst <= 1.0, worst

    def m_closed():
        zero = DisorderRealization(lat, DisorderSpec.zero())
        err = abs(m_recursive(zero, 2j, (0,), 60) - m_free_closed(2j, k))
        return err <= 1e-8, err

    def herglotz():
        omega = DisorderRealization.sample(lat, spec, 1)
        H = assemble(region, omega)
        g = region.forest.diagonal(H.potential, 0.3 + 0.7j)
        return bool(np.all(g.imag > 0)), float(g.imag.min())

    checks = [
        _check("closed_form_shift", closed_form),
        _check("composition_law_exact", composition_exact),
        _check("composition_up_to_stabilizer", composition_stabilizer),
        _check("graph_automorphism", automorphism),
        _check("telescoping", telescoping),
        _check("saw_vs_direct", saw_direct),
        _check("rw_error_bound", rw_bound),
        _check("m_recursion_vs_closed", m_closed),
        _check("herglotz", herglotz),
    ]
    # the exact composition law fails for generic pairs (the shifts are coset
    # representatives, not a group), so it is reported but does not gate
    gating = {name: name != "composition_law_exact" for name, _, _ in checks}
    rows = [[n, ok, d, gating[n]] for n, ok, d in checks]
    passed = all(ok for n, ok, _ in checks if gating[n])
    summary = {"passed": passed, "failed": [n for n, ok, _ in checks if not ok]}
    return ["check", "passed", "detail", "gating"], rows, summary, EXIT_OK if passed else EXIT_VERIFY


def run_dos(cfg: dict):
    spec = disorder_from_config(cfg)
    k, L = cfg["kappa"], cfg["L"]
    if cfg["method"] == "resolvent":
        grid = default_energy_grid(k, spec.bound, cfg["eta"], cfg["points"])
        if cfg["emin"] is not None or cfg["emax"] is not None:
            lo = grid[0] if cfg["emin"] is None else cfg["emin"]
            hi = grid[-1] if cfg["emax"] is None else cfg["emax"]
            grid = np.linspace(lo, hi, cfg["points"])
        dos = dos_resolvent(spec, k, L, cfg["eta"], grid, cfg["samples"], threads=cfg["threads"])
    elif cfg["method"] == "eigen":
        dos = dos_eigen(spec, k, L, cfg["samples"], cfg["points"], threads=cfg["threads"])
    else:
        raise UsageError("field 'method' must be resolvent or eigen")
    rows = [[e, d] for e, d in zip(dos.energies, dos.density)]
    return ["energy", "density"], rows, dos.metadata(), EXIT_OK


def run_lyapunov(cfg: dict):
    spec = disorder_from_config(cfg)
    k = cfg["kappa"]
    lat = BetheLattice(k)
    rows = []
    for z in parse_z_list(cfg["z"], cfg["eta"]):
        if cfg["method"] == "mc":
            est = lyapunov_mc(spec, k, z, cfg["depth"], cfg["samples"], cfg["j"], threads=cfg["threads"])
        elif cfg["method"] == "path":
            path = lat.spine_path(cfg["a1"], cfg["L"])
            est = lyapunov_path(spec, k, z, cfg["L"], path, cfg["samples"], threads=cfg["threads"])
        elif cfg["method"] == "free":
            est = free_lyapunov(z, k)
        else:
            raise UsageError("field 'method' must be path, mc or free")
        rec = est.to_record()
        rows.append([rec[h] for h in _LYAP_HEADER])
    return _LYAP_HEADER, rows, {"rows": len(rows)}, EXIT_OK


_LYAP_HEADER = ["z_re", "z_im", "eta", "kappa", "L_or_depth", "samples", "seed", "value", "stderr", "method"]


def run_remainder(cfg: dict):
    k = cfg["kappa"]
    zs = parse_z_list(cfg["z"], cfg["eta"])
    spec = DisorderSpec.zero() if cfg["analytic_dos"] else disorder_from_config(cfg)
    if cfg["analytic_dos"]:
        dos = KestenMcKay(k)
    else:
        dos = dos_resolvent(spec, k, cfg["L"], cfg["eta"], samples=cfg["samples"], threads=cfg["threads"])
    header = ["z_re", "z_im", "kappa", "lyapunov", "lyapunov_stderr", "thouless", "R", "delta_R", "delta_R_closed"]
    if cfg["finite"]:
        header.append("R_L")
    rows, first = [], None
    for z in zs:
        if cfg["analytic_dos"]:
            lyap = free_lyapunov(z, k, band_limit=abs(z.real) < 2 * math.sqrt(k))
        else:
            lyap = lyapunov_path(spec, k, z, cfg["L"], None, cfg["samples"], threads=cfg["threads"])
        est = remainder_from_parts(k, z, dos, lyap)
        if first is None:
            first = (z, est.value)
        closed = free_remainder_diff(first[0].real, z.real, k)
        row = [z.real, z.imag, k, est.lyapunov, est.stderr, est.thouless, est.value, est.value - first[1], closed]
        if cfg["finite"]:
            row.append(remainder_finite_parts(spec, k, z, cfg["L"])["R_L"])
        rows.append(row)
    return header, rows, {"rows": len(rows), "analytic_dos": cfg["analytic_dos"]}, EXIT_OK


def run_green(cfg: dict):
    spec = disorder_from_config(cfg)
    lat = BetheLattice(cfg["kappa"])
    try:
        x, y = lat.validate(parse_vertex(cfg["x"])), lat.validate(parse_vertex(cfg["y"]))
        z = complex(cfg["z"].replace(" ", ""))
    except ValueError as exc:
        raise UsageError(f"field 'x'/'y'/'z': {exc}") from None
    region = Region.ball(lat, cfg["L"])
    omega = DisorderRealization.sample(lat, spec, 0)
    H = assemble(region, omega)
    applicable = {
        "direct": True,
        "rw": abs(z.imag) > lat.kappa + 1,
        "saw": x != y,
        "m": x == y and bool(x),
    }
    if cfg["engine"] == "all":
        engines = [e for e, ok in applicable.items() if ok]
    elif cfg["engine"] in applicable:
        engines = [cfg["engine"]]
    else:
        raise UsageError("field 'engine' must be direct, rw, saw, m or all")
    rows = []
    for eng in engines:
        bound = 0.0
        if eng == "direct":
            g = green_direct(H, z, x, y)
        elif eng == "rw":
            g, bound = green_rw(H, z, x, y, cfg["n_terms"])
        elif eng == "saw":
            g = green_saw(region, omega, z, x, y)
        else:
            if not applicable["m"]:
                raise UsageError("engine 'm' needs x == y and a non-root vertex")
            # forward subtree of x inside ball(L), i.e. x decoupled from its parent
            g = m_recursive(omega, z, x, cfg["L"] - len(x) + 1)
        rows.append([eng, complex(g).real, complex(g).imag, bound])
    meta = {"x": format_vertex(x), "y": format_vertex(y), "z": z, "size": len(region)}
    return ["engine", "re", "im", "error_bound"], rows, meta, EXIT_OK


_RUNNERS = {
    "verify": run_verify,
    "dos": run_dos,
    "lyapunov": run_lyapunov,
    "remainder": run_remainder,
    "green": run_green,
}


def run(cfg: dict, command: str, *, timestamp: bool = False) -> int:
    """Execute one resolved configuration and write its artifacts."""
    header, rows, summary, status = _RUNNERS[command](cfg)
    prefix = Path(cfg["out"])
    if prefix.parent and not prefix.parent.exists():
        prefix.parent.mkdir(parents=True)
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    write_csv(csv_path, header, rows)
    recorded = {k: v for k, v in cfg.items() if k not in ("threads", "out")}
    payload = {"command": command, "config": recorded, "summary": summary, "status": status}
    if timestamp:
        payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    write_json(json_path, payload)
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        status = run(cfg, args.command, timestamp=args.timestamp)
    except UsageError as exc:
        print(f"bethe: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SizeGuardError, NumericalError) as exc:
        print(f"bethe: numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ValidationError as exc:
        print(f"bethe: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BetheError as exc:
        print(f"bethe: error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    if status == EXIT_VERIFY:
        print("bethe: verification failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 failed check, 2 closed form and enumeration
disagree, 3 resource bound hit, 64 usage error.

Scan CSV schema (one header line, comma separated, '.' decimal point):
``round,<coordinate names...>,ratio`` where ``round`` is 0 for the coarse
grid and 1.. for the refinement rounds.  Flat coordinates are the
normalised moduli (B1: a1,lam,v with |a3| = 1; B2: lam,v,d with |a1| = 1;
B3/B4: a1,a2 with |a3| = 1); singular coordinates are alpha,d (B1),
delta,d (B2) or d (B3/B4).  Points outside the feasible region are omitted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import bieberbach_flat as flat
from . import mesh_oracle
from . import suspension as susp
from .bavard_surface import KleinIsometry

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_MISMATCH = 2
EXIT_RESOURCE = 3
EXIT_USAGE = 64

ENUM_TOL = 1e-9
RATIO_TOL = 1e-9
CONVERGENCE_FACTOR = 1.7


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    types: tuple[str, ...]
    moduli: tuple[float, ...]
    angle: float | None
    d: float | None
    h: float
    samples: int | None
    grid: int
    seed: int
    fmt: str
    out: str | None
    suite: str
    singular: bool
    halve: bool

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        types = tuple(flat.check_type(t) for t in ns.type) if ns.type else flat.TYPES
        if ns.h <= 0:
            raise UsageError("--h must be positive")
        if ns.samples is not None and ns.samples <= 0:
            raise UsageError("--samples must be positive")
        if ns.grid < 2:
            raise UsageError("--grid must be at least 2")
        return cls(ns.command, types, tuple(getattr(ns, "moduli", ()) or ()), getattr(ns, "angle", None),
                   getattr(ns, "d", None), ns.h, ns.samples, ns.grid, ns.seed, ns.format, ns.out,
                   getattr(ns, "suite", "all"), getattr(ns, "singular", False), getattr(ns, "halve", False))


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table_text(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def _csv_text(header: Sequence[str], rows: list[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------------------

def cmd_table(cfg: RunConfig) -> int:
    rows = susp.table_report(cfg.types, check=False)
    if cfg.fmt == "json":
        _emit(cfg, _json_text([r.as_json() for r in rows]))
    elif cfg.fmt == "csv":
        _emit(cfg, _csv_text(["type", "flat_exact", "flat_value", "singular_exact", "singular_value"],
                             [[r.type_tag, r.flat_exact, repr(r.flat_value), r.singular_exact,
                               repr(r.singular_value)] for r in rows]))
    else:
        lines = [["type", "flat", "", "singular", ""]]
        lines += [[r.type_tag, r.flat_exact, _fmt(r.flat_value), r.singular_exact, _fmt(r.singular_value)]
                  for r in rows]
        _emit(cfg, _table_text(lines))
    bad = [r.type_tag for r in rows if not r.holds]
    if bad:
        print(f"singular ratio does not beat the flat optimum for {', '.join(bad)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_flat(cfg: RunConfig) -> int:
    if len(cfg.types) != 1:
        raise UsageError("flat needs exactly one --type")
    t = cfg.types[0]
    if cfg.moduli:
        try:
            spec = flat.BieberbachSpec(t, cfg.moduli)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        spec = flat.optimal_flat_ratio(t)[1]
    closed = flat.flat_systole_closed(spec)
    enum = flat.flat_systole_enum(spec)
    vol = flat.flat_volume(spec)
    vol_group = flat.presentation_volume(flat.build_group(spec))
    ratio = closed ** 3 / vol
    record = {"type": t, "moduli": spec.as_dict(), "systole_closed": closed, "systole_enum": enum,
              "volume": vol, "volume_presentation": vol_group, "ratio": ratio}
    if cfg.fmt == "json":
        _emit(cfg, _json_text(record))
    elif cfg.fmt == "csv":
        keys = [k for k in record if k != "moduli"]
        _emit(cfg, _csv_text(list(spec.as_dict()) + keys[1:],
                             [[repr(v) for v in spec.as_dict().values()] + [repr(record[k]) for k in keys[1:]]]))
    else:
        mod = " ".join(f"{k}={_fmt(v)}" for k, v in spec.as_dict().items())
        _emit(cfg, _table_text([["type", t], ["moduli", mod], ["systole (closed)", _fmt(closed)],
                                ["systole (enum)", _fmt(enum)], ["volume", _fmt(vol)], ["ratio", _fmt(ratio)]]))
    if abs(closed - enum) > ENUM_TOL or abs(vol - vol_group) > ENUM_TOL * max(1.0, vol):
        print(f"closed form and enumeration disagree: {closed!r} vs {enum!r}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_suspension(cfg: RunConfig) -> int:
    reports = []
    for t in cfg.types:
        spec, _ = susp.optimize_suspension(t)
        if cfg.angle is not None or cfg.d is not None:
            iso = spec.base_iso
            if cfg.angle is not None:
                if t not in ("B1", "B2"):
                    raise UsageError("--angle applies to B1 and B2 only")
                iso = KleinIsometry(iso.kind, cfg.angle)
            try:
                spec = susp.SuspensionSpec(iso, spec.d if cfg.d is None else cfg.d)
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
        reports.append({"type": t, "parameters": spec.as_dict(), "systole": susp.suspension_systole(spec),
                        "volume": susp.suspension_volume(spec), "ratio": susp.singular_ratio(spec),
                        "higher_powers_clear": susp.higher_powers_clear(spec)})
    if cfg.fmt == "json":
        _emit(cfg, _json_text(reports))
    elif cfg.fmt == "csv":
        _emit(cfg, _csv_text(["type", "iso", "angle", "d", "systole", "volume", "ratio", "higher_powers_clear"],
                             [[r["type"], r["parameters"]["iso"], repr(r["parameters"].get("angle", 0.0)),
                               repr(r["parameters"]["d"]), repr(r["systole"]), repr(r["volume"]),
                               repr(r["ratio"]), r["higher_powers_clear"]] for r in reports]))
    else:
        rows = [["type", "iso", "angle", "d", "systole", "volume", "ratio"]]
        rows += [[r["type"], r["parameters"]["iso"], _fmt(r["parameters"].get("angle", 0.0)),
                  _fmt(r["parameters"]["d"]), _fmt(r["systole"]), _fmt(r["volume"]), _fmt(r["ratio"])]
                 for r in reports]
        _emit(cfg, _table_text(rows))
    return EXIT_OK


def _scan_csv(names: Sequence[str], history) -> str:
    buf = io.StringIO()
    buf.write(",".join(["round", *names, "ratio"]) + "\n")
    for r, pts, vals in history:
        ok = np.isfinite(vals)
        block = np.column_stack([np.full(ok.sum(), r), pts[ok], vals[ok]])
        np.savetxt(buf, block, fmt=["%d"] + ["%.17g"] * (block.shape[1] - 1), delimiter=",")
    return buf.getvalue()


def cmd_scan(cfg: RunConfig) -> int:
    want_csv = cfg.fmt == "csv"
    summaries = []
    csv_parts = []
    for t in cfg.types:
        if cfg.singular:
            names = susp.SINGULAR_DOMAINS[t][0]
            res, spec = susp.scan_singular_ratio(t, grid=cfg.grid, keep_history=want_csv)
            optimum = susp.optimal_singular_ratio(t)
            params = spec.as_dict()
        else:
            names = flat.SCAN_DOMAINS[t][0]
            res, spec = flat.scan_flat_ratio(t, grid=cfg.grid, keep_history=want_csv)
            optimum = flat.optimal_flat_ratio(t)[0]
            params = spec.as_dict()
        summaries.append({"type": t, "singular": cfg.singular, "coordinates": dict(zip(names, map(float, res.best_x))),
                          "parameters": params, "ratio": res.best_value, "optimum": optimum,
                          "gap": optimum - res.best_value, "evaluations": res.evaluations})
        if want_csv:
            csv_parts.append(_scan_csv(names, res.history))
    if want_csv:
        if len(cfg.types) != 1:
            raise UsageError("CSV scan output needs exactly one --type")
        _emit(cfg, csv_parts[0])
    summary_out = sys.stderr if want_csv and not cfg.out else sys.stdout
    if cfg.fmt == "json":
        _emit(cfg, _json_text(summaries))
    else:
        rows = [["type", "incumbent", "ratio", "optimum", "gap"]]
        rows += [[s["type"], " ".join(f"{k}={_fmt(v)}" for k, v in s["coordinates"].items()), _fmt(s["ratio"]),
                  _fmt(s["optimum"]), f"{s['gap']:.3e}"] for s in summaries]
        summary_out.write(_table_text(rows))
    beaten = [s["type"] for s in summaries if s["ratio"] > s["optimum"] + RATIO_TOL]
    if beaten:
        print(f"scan beats the closed-form optimum for {', '.join(beaten)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def flat_suite(types: Sequence[str], samples: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    for t in types:
        opt = flat.optimal_flat_ratio(t)[0]
        sys_err = vol_err = 0.0
        excess = -math.inf
        for _ in range(samples):
            spec = flat.random_spec(t, rng)
            closed = flat.flat_systole_closed(spec)
            sys_err = max(sys_err, abs(flat.flat_systole_enum(spec) - closed))
            vol = flat.flat_volume(spec)
            vol_err = max(vol_err, abs(flat.presentation_volume(flat.build_group(spec)) - vol) / vol)
            excess = max(excess, closed ** 3 / vol - opt)
        out[t] = {"systole_max_abs_err": sys_err, "volume_max_rel_err": vol_err, "ratio_excess": excess}
    return out


def suspension_suite(types: Sequence[str], mesh=None) -> dict:
    out = {}
    for t in types:
        spec, ratio = susp.optimize_suspension(t)
        res, _ = susp.scan_singular_ratio(t)
        row = {"closed_form_err": abs(ratio - susp.optimal_singular_ratio(t)),
               "margin": ratio - flat.optimal_flat_ratio(t)[0],
               "higher_powers_clear": susp.higher_powers_clear(spec),
               "scan_excess": res.best_value - susp.optimal_singular_ratio(t)}
        if mesh is not None and t in ("B1", "B2"):
            # deck transformations of K are included, so this also bounds mixed elements
            lats = np.linspace(-mesh.phi0, mesh.phi0, 9)
            got = mesh_oracle.klein_displacement(mesh, spec.base_iso, lats)
            want = susp.power_displacement(spec.base_iso, 1)
            row["mesh_displacement_rel_err"] = abs(got - want) / want
            row["mesh_undershoot"] = max(0.0, want - got)
        out[t] = row
    return out


def cmd_verify(cfg: RunConfig) -> int:
    suites = ("mesh", "flat", "suspension") if cfg.suite == "all" else (cfg.suite,)
    report: dict = {}
    code = EXIT_OK
    lines = []
    if "mesh" in suites:
        n = cfg.samples or 100
        rep = mesh_oracle.verify_closed_forms(h=cfg.h, samples=n, seed=cfg.seed)
        entry = {"h": cfg.h, "samples": n, "rotation_max_rel_err": rep.rotation_max_rel_err,
                 "screw_max_rel_err": rep.screw_max_rel_err,
                 "singular_circle_max_rel_err": rep.singular_circle_max_rel_err,
                 "max_undershoot": rep.max_undershoot, "passed": rep.passed}
        ok = rep.passed
        if cfg.halve:
            fine = mesh_oracle.verify_closed_forms(h=cfg.h / 2, samples=n, seed=cfg.seed)
            factor = rep.max_rel_err / fine.max_rel_err if fine.max_rel_err > 0 else math.inf
            entry["halved_max_rel_err"] = fine.max_rel_err
            entry["convergence_factor"] = factor
            ok = ok and fine.passed and factor >= CONVERGENCE_FACTOR
        report["mesh"] = entry
        lines.append(f"mesh: h={cfg.h} max rel err {rep.max_rel_err:.3e}, undershoot {rep.max_undershoot:.3e}"
                     + (f", convergence factor {entry['convergence_factor']:.3f}" if cfg.halve else "")
                     + (" PASS" if ok else " FAIL"))
        if not ok:
            code = EXIT_CHECK
    if "flat" in suites:
        res = flat_suite(cfg.types, cfg.samples or 1000, cfg.seed)
        report["flat"] = res
        for t, r in res.items():
            mismatch = r["systole_max_abs_err"] > ENUM_TOL or r["volume_max_rel_err"] > ENUM_TOL
            ok = not mismatch and r["ratio_excess"] <= RATIO_TOL
            lines.append(f"flat {t}: |enum-closed| {r['systole_max_abs_err']:.3e}, volume rel err "
                         f"{r['volume_max_rel_err']:.3e}, ratio excess {r['ratio_excess']:.3e}"
                         + (" PASS" if ok else " FAIL"))
            if mismatch:
                code = EXIT_MISMATCH
            elif not ok and code == EXIT_OK:
                code = EXIT_CHECK
    if "suspension" in suites:
        mesh = mesh_oracle.build_mesh(h=max(cfg.h, 0.01))
        res = suspension_suite(cfg.types, mesh)
        report["suspension"] = res
        for t, r in res.items():
            ok = (r["closed_form_err"] <= RATIO_TOL and r["margin"] >= susp.TABLE_SLACK
                  and r["scan_excess"] <= RATIO_TOL and r.get("mesh_undershoot", 0.0) <= 1e-9
                  and r.get("mesh_displacement_rel_err", 0.0) <= 0.02)
            if t == "B2":
                ok = ok and r["higher_powers_clear"]
            lines.append(f"suspension {t}: margin {r['margin']:.6f}, scan excess {r['scan_excess']:.3e}"
                         + (f", mesh displacement rel err {r['mesh_displacement_rel_err']:.3e}"
                            if "mesh_displacement_rel_err" in r else "")
                         + (" PASS" if ok else " FAIL"))
            if not ok and code == EXIT_OK:
                code = EXIT_CHECK
    if cfg.fmt == "json":
        report["exit_code"] = code
        _emit(cfg, _json_text(report))
    else:
        _emit(cfg, "".join(line + "\n" for line in lines))
    return code


def cmd_mesh_dump(cfg: RunConfig) -> int:
    mesh = mesh_oracle.build_mesh(h=cfg.h)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            mesh_oracle.dump_mesh(mesh, fh)
    else:
        mesh_oracle.dump_mesh(mesh, sys.stdout)
    return EXIT_OK


COMMANDS = {"table": cmd_table, "flat": cmd_flat, "suspension": cmd_suspension, "scan": cmd_scan,
            "verify": cmd_verify, "mesh-dump": cmd_mesh_dump}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--type", action="append", help="B1..B4; repeat to select several (default all)")
    common.add_argument("--format", choices=("text", "csv", "json"), default="text")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--h", type=float, default=0.01, help="mesh spacing")
    common.add_argument("--samples", type=int, default=None, help="random samples per suite")
    common.add_argument("--grid", type=int, default=64, help="scan points per axis")
    common.add_argument("--seed", type=int, default=42)

    p = _Parser(prog="systolica", description="Systolic ratios of flat and singular non-orientable 3-manifolds.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("table", parents=[common], help="flat versus singular optimum per type")
    fp = sub.add_parser("flat", parents=[common], help="systole, volume and ratio of a flat metric")
    fp.add_argument("moduli", nargs="*", type=float, help="moduli in the order of the type (default: optimum)")
    sp = sub.add_parser("suspension", parents=[common], help="systole, volume and ratio of a suspension")
    sp.add_argument("--angle", type=float, help="rotation or screw angle (B1, B2)")
    sp.add_argument("--d", type=float, help="suspension length")
    sc = sub.add_parser("scan", parents=[common], help="grid scan with refinement")
    sc.add_argument("--singular", action="store_true", help="scan suspensions instead of flat metrics")
    vp = sub.add_parser("verify", parents=[common], help="run the verification suites")
    vp.add_argument("--suite", choices=("all", "mesh", "flat", "suspension"), default="all")
    vp.add_argument("--halve", action="store_true", help="also run the mesh suite at h/2 and check convergence")
    sub.add_parser("mesh-dump", parents=[common], help="write the oracle graph")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, ValueError) as exc:
        print(f"systolica: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except mesh_oracle.ResourceBoundError as exc:
        print(f"systolica: resource bound: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())

"""Command line driver: ``hormander {lift,chart,metrics,approx,report} --config CFG``.

Exit codes: 0 all checks passed, 1 a check missed its margin, 2 bad
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from fractions import Fraction

import jsonschema
import numpy as np

from . import __version__
from .approx import (
    geometric_probes,
    holder_exponent_estimate,
    jacobian_check,
    box_grid,
    order_table,
    orders_csv,
    theta_jacobian,
    unit_directions,
)
from .builtins import builtin
from .expr import EvaluationError, ExprSyntaxError, free_variables, parse
from .geom import ChartError, ChartFactory, RegularizationError
from .liealg import graded_basis, group_structure
from .lifting import LiftingError, lift
from .metrics import fit_reports
from .ode import IntegrationError
from .vf import HormanderError, VectorField, WeightedSystem

STAGES = ("lift", "chart", "metrics", "approx")

_SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["p", "n", "r", "fields"],
    "additionalProperties": False,
    "properties": {
        "p": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "r": {"type": "integer", "minimum": 2},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "x0_present": {"type": "boolean"},
        "fields": {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"type": "string"}}},
        "region": {
            "type": "object",
            "required": ["min", "max"],
            "properties": {"min": {"type": "array", "items": {"type": "number"}},
                           "max": {"type": "array", "items": {"type": "number"}}},
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["system", "seed"],
    "additionalProperties": False,
    "properties": {
        "system": {"oneOf": [{"type": "string"}, _SYSTEM_SCHEMA]},
        "stages": {"type": "array", "items": {"enum": list(STAGES)}, "uniqueItems": True},
        "base_points": {"type": "array", "minItems": 1, "items": {"type": "array", "items": {"type": "number"}}},
        "radii": {"type": "array", "minItems": 2, "items": {"type": "number", "exclusiveMinimum": 0}},
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["smooth", "regularized"]},
        "lifted": {"type": "boolean"},
        "pairs": {"type": "integer", "minimum": 0},
        "segments": {"type": "integer", "minimum": 1},
        "directions": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "Q": {"type": "number", "minimum": 0},
                "doubling": {"type": "number", "minimum": 0},
                "roundtrip": {"type": "number", "minimum": 0},
                "antisymmetry": {"type": "number", "minimum": 0},
                "distance_ratio": {"type": "number", "minimum": 1},
                "quasi_triangle": {"type": "number", "minimum": 1},
                "holder": {"type": "number"},
                "volume_rse": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

DEFAULT_TOL = {"Q": 0.2, "doubling": 0.15, "roundtrip": 1e-8, "antisymmetry": 1e-7,
               "distance_ratio": 20.0, "quasi_triangle": 3.0, "holder": 0.1,
               "volume_rse": 0.1}


class ConfigError(ValueError):
    pass


def system_from_json(obj: dict) -> WeightedSystem:
    """Build a system; with ``x0_present`` the first entry of ``fields`` is ``X0``."""
    p, n = obj["p"], obj["n"]
    rows = obj["fields"]
    has0 = obj.get("x0_present", False)
    if len(rows) != n + int(has0):
        raise ConfigError(f"expected {n + int(has0)} fields, got {len(rows)}")
    parsed = []
    for row in rows:
        if len(row) != p:
            raise ConfigError(f"each field needs {p} coefficients")
        exprs = tuple(parse(c) for c in row)
        for e in exprs:
            if any(v >= p for v in free_variables(e)):
                raise ConfigError(f"coefficient uses a variable beyond x{p}")
        parsed.append(VectorField(exprs))
    drift = parsed.pop(0) if has0 else None
    region = None
    if "region" in obj:
        lo, hi = obj["region"]["min"], obj["region"]["max"]
        if len(lo) != p or len(hi) != p or any(a >= b for a, b in zip(lo, hi)):
            raise ConfigError("region must be a nonempty box in R^p")
        region = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))
    alpha = Fraction(str(obj.get("alpha", 1))).limit_denominator(10**6)
    return WeightedSystem(tuple(parsed), drift, r=obj["r"], alpha=alpha, region=region)


def load_config(path: str, overrides: dict) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config does not match the schema: {exc.message}") from exc
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_default) + "\n"


def _default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


class Run:
    """One pipeline execution; artifacts are kept in memory until the end."""

    def __init__(self, cfg: dict, workers: int = 1):
        self.cfg = cfg
        self.workers = workers
        self.tol = {**DEFAULT_TOL, **cfg.get("tolerances", {})}
        try:
            sysdef = cfg["system"]
            self.system = builtin(sysdef) if isinstance(sysdef, str) else system_from_json(sysdef)
        except (KeyError, ExprSyntaxError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        self.base_points = [list(map(float, b)) for b in cfg.get("base_points", [[0.0] * self.system.p])]
        for b in self.base_points:
            if len(b) != self.system.p:
                raise ConfigError(f"base point {b} is not in R^{self.system.p}")
        self.mode = cfg.get("mode", "smooth" if self.system.alpha == 1 else "regularized")
        self.artifacts: dict[str, str] = {}
        self.checks: dict[str, bool] = {}
        self.lifted = None

    def header(self) -> dict:
        return {"config_hash": config_hash(self.cfg), "seed": self.cfg["seed"], "version": __version__}

    def working_system(self) -> WeightedSystem:
        """The lifted system when ``lifted`` is set, otherwise the configured one."""
        if not self.cfg.get("lifted"):
            return self.system
        if self.lifted is None:
            self.lifted = lift(self.system, self.base_points[0])
        return self.lifted.system

    def working_points(self):
        if self.cfg.get("lifted"):
            m = self.working_system().p - self.system.p
            return [b + [0.0] * m for b in self.base_points]
        return self.base_points

    # stages

    def stage_lift(self):
        res = lift(self.system, self.base_points[0])
        self.lifted = res
        sysl = res.system
        from .vf import freeness_check, span_rank

        x = self.base_points[0] + [0.0] * res.m
        ok = freeness_check(sysl, x, sysl.r).free and span_rank(sysl, x) == sysl.p
        self.checks["lift"] = bool(ok)
        self.artifacts["lift.json"] = _dump({**self.header(), "result": res.to_json(),
                                             "free_dimension": graded_basis(sysl.n, sysl.with_x0, sysl.r).dim})

    def stage_chart(self):
        sysw = self.working_system()
        fac = ChartFactory(sysw, self.mode, reference=self.working_points()[0])
        reports = []
        ok = True
        rng = np.random.default_rng([self.cfg["seed"], 101])
        for xb in self.working_points():
            ch = fac.chart(xb)
            diag = ch.diagnostics()
            R = diag["validity_radius"]
            # random directions dilated to norms uniform in (0, R/2)
            w = np.array(ch.weights, dtype=float)
            V = rng.uniform(-1, 1, size=(100, ch.p))
            lam = rng.uniform(0, R / 2, size=100) / ch.norm(V)
            U = V * lam[:, None] ** w
            X = ch.exp_flow(U)
            Ub = ch.theta(X)
            diag["roundtrip_max_error"] = float(np.max(np.abs(Ub - U)))
            ok &= diag["roundtrip_max_error"] <= self.tol["roundtrip"]
            if self.mode == "smooth":
                back = fac.theta_many(X, np.broadcast_to(ch.xbar, X.shape))[0]
                diag["antisymmetry_max_error"] = float(np.max(np.abs(back + Ub)))
                ok &= diag["antisymmetry_max_error"] <= self.tol["antisymmetry"]
            reports.append(diag)
        self.checks["chart"] = bool(ok)
        self.artifacts["chart.json"] = _dump({**self.header(), "charts": reports})

    def stage_metrics(self):
        sysw = self.working_system()
        xb = self.working_points()[0]
        fac = ChartFactory(sysw, self.mode, reference=xb)
        radii = self.cfg.get("radii", [0.05, 0.1, 0.2, 0.4])
        rep = fit_reports(fac, xb, radii, self.cfg.get("samples", 100000), self.cfg["seed"],
                          pairs=self.cfg.get("pairs", 200) if self.mode == "smooth" else 0,
                          segments=self.cfg.get("segments", 1), workers=self.workers)
        # too few hits make every volume-based check meaningless
        ok = max(se / v if v > 0 else np.inf for v, se in zip(rep.volumes, rep.stderrs)) <= self.tol["volume_rse"]
        ok &= rep.Q_hat is not None and abs(rep.Q_hat - rep.Q_expected) <= self.tol["Q"]
        for d in rep.doubling:
            ok &= d["ratio"] is not None and abs(d["ratio"] / d["expected"] - 1) <= self.tol["doubling"]
        if rep.pairs:
            ok &= rep.rho_over_d[1] / rep.rho_over_d[0] <= self.tol["distance_ratio"]
            ok &= rep.quasi_triangle <= self.tol["quasi_triangle"]
        self.checks["metrics"] = bool(ok)
        self.artifacts["metrics.json"] = _dump({**self.header(), "report": rep.to_json()})
        self.artifacts["volumes.csv"] = rep.volume_csv()

    def stage_approx(self):
        sysw = self.working_system()
        xb = self.working_points()[0]
        fac = ChartFactory(sysw, self.mode, reference=xb)
        ch = fac.chart(xb)
        out = {**self.header(), "mode": self.mode, "base_point": xb}
        ok = True
        g = group_structure(sysw.n, sysw.with_x0, sysw.r)
        rows = []
        if tuple(ch.basis) == tuple(g.basis.elements):
            dirs = unit_directions(g, self.cfg.get("directions", 3), self.cfg["seed"])
            rows = order_table(ch, g, dirs)
            ok &= all(r.passed for r in rows)
            out["orders"] = {"rows": len(rows), "failed": sum(not r.passed for r in rows)}
        else:
            out["orders"] = {"skipped": "system is not free up to its step at the base point"}
        self.artifacts["orders.csv"] = orders_csv(rows)
        R = ch.validity_radius()
        jr = jacobian_check(ch, box_grid(ch, R / 2))
        out["jacobian"] = jr.to_json()
        ok &= bool(np.isfinite(jr.K)) and jr.product_error <= 1e-7
        if sysw.alpha < 1:
            x0 = np.asarray(xb) + 0.1
            probes = geometric_probes(xb, np.eye(sysw.p)[0])
            floor = float(sysw.alpha) - self.tol["holder"]
            h1 = holder_exponent_estimate(lambda b: fac.chart(b).theta(x0), probes)
            h2 = holder_exponent_estimate(lambda b: theta_jacobian(fac.chart(b), x0).ravel(), probes)
            out["holder"] = {"theta": h1.exponent, "theta_jacobian": h2.exponent, "floor": floor,
                             "sup_norm": "sup over probe pairs at one target point"}
            ok &= all(h.exact or h.exponent >= floor for h in (h1, h2))
        self.checks["approx"] = bool(ok)
        self.artifacts["approx.json"] = _dump(out)

    def execute(self, stages):
        for st in stages:
            getattr(self, f"stage_{st}")()
        self.artifacts["summary.json"] = _dump({**self.header(), "stages": list(stages), "checks": self.checks,
                                                "system": self.system.to_json()})


def _write(out_dir: str, artifacts: dict):
    os.makedirs(out_dir, exist_ok=True)
    for name, text in sorted(artifacts.items()):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hormander", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=STAGES + ("report",))
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="out")
    ap.add_argument("--samples", type=int)
    ap.add_argument("--mode", choices=("smooth", "regularized"))
    ap.add_argument("--workers", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "samples": args.samples, "mode": args.mode})
        run = Run(cfg, workers=max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "report":
        stages = [s for s in STAGES if s in cfg.get("stages", STAGES)]
    else:
        stages = [args.command]
    try:
        run.execute(stages)
    except (ChartError, IntegrationError, LiftingError, HormanderError, RegularizationError,
            EvaluationError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _write(args.out, run.artifacts)
    failed = [k for k, v in run.checks.items() if not v]
    for k, v in run.checks.items():
        print(f"{k}: {'pass' if v else 'FAIL'}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

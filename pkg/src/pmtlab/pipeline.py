"""Sweep orchestration: configs, per-t rows, the verdict suite and report I/O.

A run takes a metric family and a decreasing list of smoothing scales. For each
``t`` it mollifies, measures the equivalence factor and the curvature deficit,
bounds the Sobolev constant, checks the smallness condition, and when that
holds solves for the conformal factor and compares masses.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .conformal import assemble_operator, shell_profile, solve_conformal_factor, verify_w_bounds
from .functional import (
    Constants,
    make_test_functions,
    rayleigh_quotient,
    sobolev_upper_bound,
    sy_condition,
)
from .grid import Grid, lp_norm
from .mass import adm_mass, conformal_mass, mass_defect
from .metrics import RoughConformalSpec, flat, rough_conformal, schwarzschild_isotropic
from .smoothing import blend_width, curvature_deficit, mollify_family

COLUMNS = (
    "t",
    "rho",
    "deficit_K",
    "sminus_norm_3_2",
    "sminus_norm_6_5",
    "c1_upper",
    "sy_value",
    "sy_pass",
    "w_norm",
    "dw_norm_sq",
    "A_t",
    "m_g",
    "m_ghat",
    "defect",
    "identity_gap",
    "curvature_min_ghat",
)

FAMILIES = ("flat", "schwarzschild", "rough_conformal")


class StageError(RuntimeError):
    """A module rejection inside the sweep, tagged with ``t`` and the stage."""


@dataclass(frozen=True)
class RunConfig:
    family: str
    extent: float
    nodes: int
    compact_radius: float
    mass_radii: tuple
    t_list: tuple = ()
    base_scale: float | None = None
    t_factors: tuple = ()
    fit_radii: tuple = ()
    # family parameters
    mass: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    eps: float = 0.05
    beta: float = 1.5
    r0: float = 1.0
    x0: tuple | None = None  # None: nearest node plus h/3 on each axis
    # solver and checks
    solver_tol: float = 1e-10
    solver_maxiter: int = 5000
    curvature_mode: str = "corrected"
    mollifier_points: int = 4
    seed: int = 0
    test_functions: int = 20
    profile_points: int = 24
    w_slack: float = 0.05
    quad_tol: float = 1e-6
    monotone_slack: float = 1e-8
    rho_slack: float = 1e-6
    identity_frac: float = 0.02
    final_gap_frac: float = 0.05
    tol_curv: float = 1e-8
    sobolev_constant: float | None = None
    out_dir: str = "out"

    def __post_init__(self):
        for name in ("mass_radii", "t_list", "t_factors", "fit_radii", "center"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        self.validate()

    @property
    def grid(self) -> Grid:
        return Grid(self.extent, self.nodes, self.compact_radius)

    @property
    def scales(self) -> tuple:
        if self.t_list:
            return self.t_list
        return tuple(self.base_scale * f for f in self.t_factors)

    def validate(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        grid = self.grid
        if bool(self.t_list) == bool(self.t_factors):
            raise ValueError("give exactly one of t_list or (base_scale, t_factors)")
        if self.t_factors and self.base_scale is None:
            raise ValueError("t_factors needs base_scale")
        ts = self.scales
        if any(b >= a for a, b in zip(ts, ts[1:])):
            raise ValueError("smoothing scales must be strictly decreasing")
        d = blend_width(grid)
        if ts[0] >= d / 4 or ts[-1] <= 0:
            raise ValueError(f"smoothing scales must lie in (0, delta_blend/4 = {d / 4:.6g})")
        lo, hi = 1.25 * self.compact_radius, self.extent - 2 * grid.h
        for r in self.mass_radii + self.fit_radii:
            if not lo < r < hi:
                raise ValueError(f"radius {r} outside the admissible shell ({lo:.6g}, {hi:.6g})")
        if len(self.mass_radii) < 2:
            raise ValueError("mass_radii needs at least two radii")
        if self.fit_radii and len(self.fit_radii) != 2:
            raise ValueError("fit_radii needs exactly two radii")
        if self.curvature_mode not in ("corrected", "raw"):
            raise ValueError("curvature_mode must be 'corrected' or 'raw'")

    @classmethod
    def from_mapping(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        with path.open("rb") as fh:
            data = tomllib.load(fh)
        nested = [k for k, v in data.items() if isinstance(v, dict)]
        if nested:
            raise ValueError(f"config must be flat; found tables {nested}")
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def metric(self):
        if self.family == "flat":
            return flat()
        if self.family == "schwarzschild":
            return schwarzschild_isotropic(self.mass, self.center)
        x0 = self.x0
        if x0 is None:
            x0 = tuple(self.grid.nearest_node([0.0, 0.0, 0.0]) + self.grid.h / 3.0)
        return rough_conformal(RoughConformalSpec(self.eps, self.beta, self.r0, x0))


@dataclass
class MassReport:
    config: dict
    rows: list
    extras: list = field(default_factory=list)
    error_bars: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    verdict: dict = field(default_factory=dict)

    def column(self, name):
        return [r[name] for r in self.rows]

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "columns": list(COLUMNS),
                "rows": self.rows,
                "extras": self.extras,
                "error_bars": self.error_bars,
                "profiles": self.profiles,
                "verdict": self.verdict,
            },
            indent=1,
            allow_nan=False,
        )

    @classmethod
    def from_json(cls, text: str) -> MassReport:
        d = json.loads(text)
        if list(d.get("columns", [])) != list(COLUMNS):
            raise ValueError("report columns do not match the expected layout")
        return cls(d["config"], d["rows"], d["extras"], d["error_bars"], d["profiles"], d["verdict"])


def _f(x):
    return None if x is None else float(x)


def _row(cfg: RunConfig, metric, grid, g, fd_rough, m_g, constants, corpus, q_rough, t):
    stage = "mollify"
    try:
        sm = mollify_family(metric, grid, t, g=g, q=cfg.mollifier_points)
        stage = "curvature_deficit"
        sm = curvature_deficit(metric, sm, grid, g=g, fd_rough=fd_rough, mode=cfg.curvature_mode)
        stage = "sobolev_bound"
        s65 = lp_norm(sm.sminus, constants.dual_exponent, sm.g_t)
        c1 = sobolev_upper_bound(sm.g_t, constants)
        sy_value, sy_pass = sy_condition(c1, sm.sminus_norm, constants)
        stage = "rayleigh_sandwich"
        violations, worst = 0, 0.0
        r3 = sm.rho ** constants.n
        for (_, phi), qg in zip(corpus, q_rough):
            qt = rayleigh_quotient(phi, sm.g_t, constants.n)
            lo, hi = qt / r3, qt * r3
            tol = 1e-12 * qt
            if not (lo - tol <= qg <= hi + tol):
                violations += 1
            worst = max(worst, qg / hi, lo / qg)
        row = dict.fromkeys(COLUMNS)
        row.update(
            t=float(t),
            rho=float(sm.rho),
            deficit_K=float(sm.deficit_K),
            sminus_norm_3_2=float(sm.sminus_norm),
            sminus_norm_6_5=float(s65),
            c1_upper=float(c1),
            sy_value=float(sy_value),
            sy_pass=bool(sy_pass),
            m_g=float(m_g.value),
        )
        extra = {
            "t": float(t),
            "deficit_M": float(sm.deficit_M),
            "sandwich_violations": violations,
            "sandwich_worst_ratio": float(worst),
        }
        bars = {"t": float(t), "m_g": float(m_g.error_bar)}
        profile = None
        if sy_pass:
            stage = "solve"
            op = assemble_operator(sm.g_t, sm.sminus, constants)
            sol = solve_conformal_factor(
                op, sm.g_t, cfg.solver_tol, cfg.solver_maxiter, cfg.fit_radii or None
            )
            stage = "w_bounds"
            wb = verify_w_bounds(sol, sm.sminus, sm.g_t, c1, constants, cfg.w_slack)
            stage = "conformal_mass"
            m_gt = adm_mass(sm.g_t, cfg.mass_radii)
            m_hat, cmin, _ = conformal_mass(sol, sm.g_t, cfg.mass_radii, sm.s_t, constants, cfg.tol_curv)
            defect, tail = mass_defect(sol, op, constants)
            row.update(
                w_norm=float(sol.w_norm),
                dw_norm_sq=float(sol.dw_norm_sq),
                A_t=float(sol.A),
                m_ghat=float(m_hat.value),
                defect=float(defect),
                identity_gap=float(m_gt.value - m_hat.value - defect),
                curvature_min_ghat=float(cmin),
            )
            extra.update(
                m_g_t=float(m_gt.value),
                solver_residual=float(sol.residual),
                solver_iterations=int(sol.iterations),
                dw_rhs=float(wb["dw_rhs"]),
                w_rhs=float(wb["w_rhs"]),
                w_rhs_energy=float(wb["w_rhs_energy"]),
                dw_pass=wb["dw_pass"],
                w_pass=wb["w_pass"],
            )
            bars.update(m_ghat=float(m_hat.error_bar), m_g_t=float(m_gt.error_bar), defect_tail=float(tail))
            lo = 1.25 * cfg.compact_radius
            hi = cfg.extent - 2 * grid.h
            radii = np.linspace(lo, hi, cfg.profile_points + 2)[1:-1]
            prof = shell_profile(sol.w, radii, constants.n)
            profile = {"t": float(t), "r": [float(r) for r in radii], "a": [float(a) for a in prof]}
        return row, extra, bars, profile
    except Exception as exc:
        raise StageError(f"t = {t:g}, stage {stage}: {exc}") from exc


def run_sweep(cfg: RunConfig, threads: int = 1, constants: Constants | None = None) -> MassReport:
    """Run every ``t`` and assemble the report in decreasing-``t`` order."""
    if constants is None:
        constants = Constants.for_dimension(3, cfg.sobolev_constant)
    grid = cfg.grid
    try:
        metric = cfg.metric()
        g = metric.sample(grid)
        fd_rough = None
        m_g = adm_mass(g, cfg.mass_radii)
        corpus = make_test_functions(grid, cfg.seed, cfg.test_functions)[3:]
        q_rough = [rayleigh_quotient(phi, g, 3) for _, phi in corpus]
    except Exception as exc:
        raise StageError(f"setup: {exc}") from exc

    def job(t):
        return _row(cfg, metric, grid, g, fd_rough, m_g, constants, corpus, q_rough, t)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, cfg.scales))
    else:
        results = [job(t) for t in cfg.scales]
    report = MassReport(
        config=cfg.to_dict(),
        rows=[r[0] for r in results],
        extras=[r[1] for r in results],
        error_bars=[r[2] for r in results],
        profiles=[r[3] for r in results if r[3] is not None],
    )
    report.verdict = verify(report)
    return report


def _nonincreasing(vals, slack):
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def _check(ok, slack, detail=""):
    return {"pass": bool(ok), "slack": None if slack is None else float(slack), "detail": detail}


def verify(report: MassReport) -> dict:
    """Per-inequality verdicts with measured slack; ``overall`` is PASS iff all pass.

    Slack is the margin by which the inequality holds (negative when violated).
    """
    cfg = report.config
    rows, extras, bars = report.rows, report.extras, report.error_bars
    mono = cfg.get("monotone_slack", 1e-8)
    quad = cfg.get("quad_tol", 1e-6)
    out = {}

    # negative part controlled by the deficit over M; deficit_K strictly decreasing
    margins = [e["deficit_M"] + quad - r["sminus_norm_3_2"] for r, e in zip(rows, extras)]
    dk = [r["deficit_K"] for r in rows]
    strict = all(b < a or (a <= 1e-12 and b <= 1e-12) for a, b in zip(dk, dk[1:]))
    out["smin0"] = _check(min(margins) >= 0 and strict, min(margins),
                          "sminus_norm <= deficit_M + quad_tol; deficit_K strictly decreasing")

    # smallness condition at the two smallest t, decreasing in t
    sy = [r["sy_value"] for r in rows]
    tail = rows[-2:] if len(rows) >= 2 else rows
    sy_ok = all(r["sy_pass"] for r in tail) and _nonincreasing(sy, mono)
    out["sy_condition"] = _check(sy_ok, 0.5 - max(r["sy_value"] for r in tail),
                                 "sy_value <= 1/2 at the two smallest t and non-increasing")

    solved = [(r, e, b) for r, e, b in zip(rows, extras, bars) if r["sy_pass"]]
    slack_w = cfg.get("w_slack", 0.05)
    if solved:
        dw_m = min((1 + slack_w) * e["dw_rhs"] - r["dw_norm_sq"] for r, e, _ in solved)
        w_m = min((1 + slack_w) * e["w_rhs"] - r["w_norm"] for r, e, _ in solved)
        we_m = min((1 + slack_w) * e["w_rhs_energy"] - r["w_norm"] for r, e, _ in solved)
    else:
        dw_m = w_m = we_m = 0.0
    out["dwbound"] = _check(dw_m >= 0, dw_m, "gradient estimate for w, 5% slack")
    out["wbound"] = _check(w_m >= 0, w_m, "critical-norm estimate for w (8 c_n^2 c1^2 form), 5% slack")
    out["wbound_energy"] = _check(we_m >= 0, we_m, "critical-norm estimate for w (2 c_n c1 form), 5% slack")

    scale = max(abs(rows[0]["m_g"]), 0.01)
    if solved:
        last = solved[-1][0]
        gap_m = cfg.get("identity_frac", 0.02) * scale - abs(last["identity_gap"])
    else:
        gap_m = -1.0
    out["mass_identity"] = _check(gap_m >= 0, gap_m, "|m(g_t) - m(ghat_t) - defect| at the smallest t")

    sign = [r["m_ghat"] + b["m_ghat"] for r, _, b in solved]
    out["sign_structure"] = _check(bool(solved) and min(sign) >= 0, min(sign) if sign else None,
                                   "m_ghat >= -(error bars) at every solved t")

    gaps = [abs(r["m_ghat"] - r["m_g"]) for r, _, _ in solved]
    fin = cfg.get("final_gap_frac", 0.05) * scale - gaps[-1] if gaps else -1.0
    out["final_limit"] = _check(bool(gaps) and _nonincreasing(gaps, mono) and fin >= 0, fin,
                                "|m_ghat - m_g| non-increasing and final value <= 5% of scale")

    cols = {
        "deficit_K": dk,
        "sminus_norm": [r["sminus_norm_3_2"] for r in rows],
        "sy_value": sy,
        "w_norm": [r["w_norm"] for r, _, _ in solved],
        "dw_norm_sq": [r["dw_norm_sq"] for r, _, _ in solved],
        "mass_gap": gaps,
    }
    bad = [k for k, v in cols.items() if not _nonincreasing(v, mono)]
    out["monotone_columns"] = _check(not bad, None, "non-increasing: " + (", ".join(bad) if bad else "all"))

    mg = [r["m_g"] for r in rows]
    exact_tail = all(e.get("m_g_t", r["m_g"]) == r["m_g"] for r, e in zip(rows, extras))
    out["mass_constancy"] = _check(len(set(mg)) == 1 and exact_tail, 0.0, "m_g identical across rows and equal to m(g_t)")

    rho = [r["rho"] for r in rows]
    out["rho_trend"] = _check(_nonincreasing(rho, cfg.get("rho_slack", 1e-6)) and min(rho) >= 1.0, None,
                              "rho >= 1 and non-increasing as t decreases")

    curv = [r["curvature_min_ghat"] for r, _, _ in solved]
    tc = cfg.get("tol_curv", 1e-8)
    out["curvature_ghat"] = _check(all(c >= -tc for c in curv), min(curv) + tc if curv else None,
                                   "identity-form curvature of ghat >= -tol_curv")

    viol = sum(e["sandwich_violations"] for e in extras)
    out["rayleigh_sandwich"] = _check(viol == 0, -viol, f"{viol} violations")

    out["overall"] = "PASS" if all(v["pass"] for v in out.values()) else "FAIL"
    return out


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return format(v, ".17g")


def emit_report(report: MassReport, out_dir, fmt: str = "both", profiles: bool = False) -> list:
    """Write ``report.csv`` and/or ``report.json`` (and profile CSVs) into ``out_dir``."""
    if fmt not in ("csv", "json", "both"):
        raise ValueError("format must be csv, json or both")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt in ("csv", "both"):
            p = out / "report.csv"
            with p.open("w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(COLUMNS)
                for r in report.rows:
                    wr.writerow([_csv_value(r[c]) for c in COLUMNS])
            written.append(p)
        if fmt in ("json", "both"):
            p = out / "report.json"
            p.write_text(report.to_json() + "\n")
            written.append(p)
        if profiles:
            for k, prof in enumerate(report.profiles):
                p = out / f"profile_{k:02d}.csv"
                with p.open("w", newline="") as fh:
                    wr = csv.writer(fh, lineterminator="\n")
                    wr.writerow(["t", "r", "avg_w_r"])
                    for r, a in zip(prof["r"], prof["a"]):
                        wr.writerow([_csv_value(prof["t"]), _csv_value(r), _csv_value(a)])
                written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return written


def read_report(path) -> MassReport:
    return MassReport.from_json(Path(path).read_text())

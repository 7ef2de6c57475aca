"""The eleven acceptance criteria, each at its stated tolerance.

Every test records a one-line result in ``conftest.ACCEPTANCE``; the terminal
summary prints them as a PASS/FAIL table. The rough sweeps are shared through
module-scoped fixtures.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, CONFIGS
from pmtlab.curvature import scalar_curvature_fd
from pmtlab.grid import Grid
from pmtlab.mass import adm_mass
from pmtlab.metrics import RoughConformalSpec, rough_conformal, schwarzschild_isotropic
from pmtlab.pipeline import RunConfig, emit_report, run_sweep


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def rough64():
    cfg = RunConfig.load(CONFIGS / "rough_n64.toml")
    t0 = time.perf_counter()
    rep = run_sweep(cfg, threads=1)
    return cfg, rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def rough96():
    cfg = RunConfig.load(CONFIGS / "rough_n96.toml")
    return cfg, run_sweep(cfg, threads=1)


def solved(rep):
    return [(r, e, b) for r, e, b in zip(rep.rows, rep.extras, rep.error_bars) if r["sy_pass"]]


def test_c01_flat_sanity(configs_dir):
    cfg = RunConfig.load(configs_dir / "flat.toml")
    assert (cfg.extent, cfg.nodes) == (8.0, 64)
    t0 = time.perf_counter()
    rep = run_sweep(cfg)
    dt = time.perf_counter() - t0
    norms = ("deficit_K", "sminus_norm_3_2", "sminus_norm_6_5", "w_norm", "dw_norm_sq", "A_t", "defect")
    worst = max(abs(r[c]) for r in rep.rows for c in norms)
    mass = max(max(abs(r["m_g"]), abs(r["m_ghat"])) for r in rep.rows)
    ok = worst <= 1e-10 and mass <= 1e-10 and dt < 10.0
    record(1, ok, f"max norm {worst:.1e}, max |mass| {mass:.1e}, runtime {dt:.1f} s")


def test_c02_schwarzschild_calibration():
    t0 = time.perf_counter()
    grid = Grid(16.0, 96, 3.0)
    est = adm_mass(schwarzschild_isotropic(1.0).sample(grid), (7.5, 15.0))
    dt = time.perf_counter() - t0
    err = abs(est.value - 1.0)
    record(2, err <= 0.01 and dt < 300, f"m = {est.value:.5f} (error {err:.2%}), runtime {dt:.1f} s")


def test_c03_curvature_order():
    # the error decays like r^-5 away from the puncture; weighting by (r/2)^5
    # measures the discretization order uniformly on the shell
    metric = schwarzschild_isotropic(1.0)
    plain, weighted = [], []
    for N in (48, 96):
        grid = Grid(8.0, N, 1.0)
        s = scalar_curvature_fd(metric.sample(grid)).interior
        r = grid.radius(0)
        sel = (r >= 2.0) & (r <= 6.0)
        plain.append(np.abs(s[sel]).max())
        weighted.append((np.abs(s) * (r / 2.0) ** 5)[sel].max())
    p_plain = np.log2(plain[0] / plain[1])
    p_w = np.log2(weighted[0] / weighted[1])
    record(3, p_w >= 1.9, f"order {p_w:.3f} in r^5-weighted max norm (unweighted max: {p_plain:.3f})")


def test_c04_rough_mass_oracle():
    grid = Grid(6.0, 64, 1.5)
    x0 = tuple(grid.nearest_node([0.0, 0.0, 0.0]) + grid.h / 3.0)
    metric = rough_conformal(RoughConformalSpec(0.05, 1.5, 1.0, x0))
    est = adm_mass(metric.sample(grid), (3.0, 5.5))
    target = 4 * 0.05 / 3
    rel = abs(est.value / target - 1.0)
    record(4, rel <= 0.02, f"m = {est.value:.6f} vs {target:.6f} (error {rel:.3%})")


def test_c05_smin0(rough64):
    cfg, rep, _ = rough64
    assert cfg.t_factors == (0.4, 0.2, 0.1)
    sm = rep.column("sminus_norm_3_2")
    dk = rep.column("deficit_K")
    dm = [e["deficit_M"] for e in rep.extras]
    # the bound holds against the deficit over M and also over K alone
    bound = all(s <= d + 1e-6 for s, d in zip(sm, dm)) and all(s <= d + 1e-6 for s, d in zip(sm, dk))
    decreasing = all(b < a for a, b in zip(dk, dk[1:]))
    record(5, bound and decreasing,
           f"max sminus/deficit_K = {max(s / d for s, d in zip(sm, dk)):.4f}; "
           f"deficit_K {', '.join(f'{v:.3e}' for v in dk)}")


def test_c06_sy_condition(rough64):
    _, rep, _ = rough64
    sy = rep.column("sy_value")
    ok = all(r["sy_pass"] for r in rep.rows[-2:]) and all(b < a for a, b in zip(sy, sy[1:]))
    record(6, ok, "sy_value " + ", ".join(f"{v:.3e}" for v in sy))


def test_c07_w_bounds(rough64):
    _, rep, _ = rough64
    rows = solved(rep)
    dw = [r["dw_norm_sq"] / e["dw_rhs"] for r, e, _ in rows]
    w = [r["w_norm"] / e["w_rhs"] for r, e, _ in rows]
    ok = bool(rows) and max(dw) <= 1.05 and max(w) <= 1.05
    we = max(r["w_norm"] / e["w_rhs_energy"] for r, e, _ in rows)
    record(7, ok, f"{len(rows)} solved rows; max LHS/RHS gradient {max(dw):.3f}, critical norm {max(w):.3f}"
              f" (2 c_n c1 form: {we:.3f})")


def test_c08_mass_identity(rough64, rough96):
    gaps = []
    for _, rep, *_ in (rough64, rough96):
        last = solved(rep)[-1][0]
        scale = max(abs(last["m_g"]), 0.01)
        gaps.append((abs(last["identity_gap"]), scale))
    ok = gaps[0][0] <= 0.02 * gaps[0][1] and gaps[1][0] <= 0.02 * gaps[1][1] and gaps[1][0] < gaps[0][0]
    record(8, ok, f"identity gap N=64 {gaps[0][0]:.2e}, N=96 {gaps[1][0]:.2e} (limit {0.02 * gaps[1][1]:.2e})")


def test_c09_sign_and_final_limit(rough64):
    _, rep, _ = rough64
    rows = solved(rep)
    sign = min(r["m_ghat"] + b["m_ghat"] for r, _, b in rows)
    last = rep.rows[-1]
    gap = abs(last["m_ghat"] - last["m_g"])
    lim = 0.05 * max(abs(last["m_g"]), 0.01)
    record(9, sign >= 0 and gap <= lim, f"min m_ghat + bar {sign:.4e}; final |m_ghat - m_g| {gap:.2e} <= {lim:.2e}")


def test_c10_rayleigh_sandwich(rough64):
    cfg, rep, _ = rough64
    assert cfg.test_functions == 20
    viol = sum(e["sandwich_violations"] for e in rep.extras)
    worst = max(e["sandwich_worst_ratio"] for e in rep.extras)
    record(10, viol == 0, f"{viol} violations over 20 functions x {len(rep.rows)} t; worst ratio {worst:.6f}")


def test_c11_determinism(rough64, tmp_path):
    cfg, rep1, _ = rough64
    rep2 = run_sweep(cfg, threads=2)
    emit_report(rep1, tmp_path / "a")
    emit_report(rep2, tmp_path / "b")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("report.csv", "report.json"))
    record(11, same and rep1.to_json() == rep2.to_json(), "threads=1 vs threads=2 reports bit-identical" if same
           else "reports differ between thread counts")

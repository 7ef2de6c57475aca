"""
From the smoothed metrics to the mass
=====================================

For each t: smooth, check the smallness condition, solve for the conformal
factor, rescale, and compare the mass of the rescaled metric with the mass of
the original rough metric. This is the same sweep ``pmtlab run`` performs.
"""

from pathlib import Path

from pmtlab.pipeline import RunConfig, run_sweep

cfg = RunConfig.load(Path(__file__).resolve().parent.parent / "configs" / "rough_n64.toml")
report = run_sweep(cfg)

print(f"{'t':>6} {'sy_value':>10} {'A_t':>10} {'m_g':>10} {'m_ghat':>10} {'defect':>10} {'gap':>9}")
for r in report.rows:
    print(f"{r['t']:6.3f} {r['sy_value']:10.3e} {r['A_t']:10.3e} {r['m_g']:10.6f} "
          f"{r['m_ghat']:10.6f} {r['defect']:10.3e} {r['identity_gap']:9.1e}")

print("\nmass of the rough metric, closed form:", cfg.metric().oracle_mass)
for name, v in report.verdict.items():
    if name != "overall":
        print(f"  {'PASS' if v['pass'] else 'FAIL'}  {name}")
print("overall:", report.verdict["overall"])

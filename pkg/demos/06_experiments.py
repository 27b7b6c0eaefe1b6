"""Sweeps, reliability grids and multi-worker runs, written as CSV plot data."""
import tempfile
from pathlib import Path

from streamcascade.engine import (
    RunConfig, SyntheticSpec, best_operating_points, generate, reliability_grid, run_parallel, sweep,
    write_report_csv, write_trajectory_csv,
)

data = generate(SyntheticSpec(n=5000, overlap=0.4, seed=0))

rows = sweep(RunConfig(algorithm="gamcal"), {"alpha": [0.2, 0.5, 0.8]}, seeds=3, dataset=data, run_prefix="gamcal")
rows += sweep(RunConfig(algorithm="supg_it"), {"target": [0.7, 0.8, 0.9]}, seeds=3, dataset=data, run_prefix="it")
for alg, (f, d) in best_operating_points(rows).items():
    print(f"best {alg:8s} F1 {f:.3f} at delegation {100 * d:.1f}%")

cells = reliability_grid(RunConfig(algorithm="supg_it"), data, [0.7, 0.9], [0.7, 0.9], seeds=5)
print("\nt_p  t_r  satisfied  precision-fails  recall-fails")
for c in cells:
    print(f"{c.t_p:.1f}  {c.t_r:.1f}  {c.satisfaction:9.2f}  {c.precision_failures:15d}  {c.recall_failures:12d}")

print("\nworkers  F1")
for w in (1, 4, 8):
    print(f"{w:7d}  {run_parallel(RunConfig(algorithm='gamcal', workers=w), data).metrics.f_beta:.4f}")

out = Path(tempfile.mkdtemp())
write_report_csv(rows, out / "report.csv")
write_trajectory_csv(rows, out / "trajectory.csv")
print(f"\nwrote {out / 'report.csv'} and {out / 'trajectory.csv'}")

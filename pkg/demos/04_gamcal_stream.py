"""The calibration-driven cascade on a stream.

During cold start every record is uncertain and only the per-batch budget is
labeled.  Each time the labeled sample doubles, the calibration model is refit
and thresholds re-optimized; between refits the thresholds stay fixed.
"""
from streamcascade.engine import RunConfig, SyntheticSpec, generate, run_parallel

data = generate(SyntheticSpec(n=10_000, overlap=0.2, seed=0))
cfg = RunConfig(algorithm="gamcal", batch_size=200, rho=0.03, alpha=0.35, seed=0)
report = run_parallel(cfg, data)
events = {e[0]: e for e in report.retrain_events[0]}
print("batch  uncertain  thresholds")
for p in report.threshold_trajectory:
    if p.batch in events or p.batch % 10 == 0:
        mark = f"  <- refit on {events[p.batch][1]} labels" if p.batch in events else ""
        print(f"{p.batch:5d}  {p.uncertain_fraction:9.3f}  ({p.thresholds.low:.3f}, {p.thresholds.high:.3f}){mark}")
m = report.metrics
print(f"\nF1 {m.f_beta:.3f} with {report.oracle_calls} oracle labels ({100 * m.delegation_rate:.1f}% of records)")

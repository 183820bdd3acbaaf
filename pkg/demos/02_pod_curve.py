"""Hit/miss POD from scratch: logistic fit in log size, lower bound, a90/95.

Simulates an inspector whose true POD is logistic in log(a), fits the curve,
and prints a90 and the size where the 95% lower bound reaches 90%. Also shows
what happens with perfectly separable data (the Firth-penalized fallback).

    python demos/02_pod_curve.py [outdir]
"""
import sys
from pathlib import Path

import numpy as np

from weldnde.evalnde import HitMissRecord, fit_pod, pod_csv
from weldnde.report import pod_plot

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/pod")
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(0)

b0, b1 = -2.0, 6.0  # true a50 = exp(1/3) ~ 1.40 mm
sizes = np.exp(rng.uniform(np.log(0.3), np.log(5.0), 120))
p = 1 / (1 + np.exp(-(b0 + b1 * np.log(sizes))))
hits = rng.random(len(sizes)) < p
records = [HitMissRecord(float(a), bool(h), float(a) if h else None) for a, h in zip(sizes, hits)]

curve = fit_pod(records)
true_a90 = np.exp((np.log(9) - b0) / b1)
print(f"{len(records)} flaws, {hits.sum()} hits")
print(f"fit  b0={curve.b0:.2f} b1={curve.b1:.2f}  (true {b0}, {b1})")
print(f"a90 = {curve.a90:.3f} mm (true {true_a90:.3f}), a90/95 = {curve.a90_95:.3f} mm")

a = np.exp(np.linspace(np.log(curve.a_min), np.log(curve.a_max), 100))
(out / "pod.svg").write_text(pod_plot(a, curve.pod(a), curve.pod_lo(a), "simulated inspector"))
(out / "pod.csv").write_text(pod_csv(curve))

# separable data: every miss is smaller than every hit
sep = [HitMissRecord(float(a), a > 2.0, float(a) if a > 2.0 else None) for a in sizes[:40]]
c = fit_pod(sep)
print(f"separable: penalized={c.penalized}, a50={np.exp(-c.b0 / c.b1):.3f} mm, a90={c.a90:.3f} mm")
print("wrote", out)

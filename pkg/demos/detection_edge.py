"""Null-model retention as the tuning parameter moves across the calibrated quantile.

Run with ``python3 demos/detection_edge.py``; takes about a minute.
"""

from explasso import ScenarioConfig, run_detection_edge

cfg = ScenarioConfig(n=100, p=200, s_star=0, replications=100, calib_reps=5000, seed=3)
rep = run_detection_edge(cfg, lambda_grid=(0.3, 0.6, 0.8, 1.0, 1 / 0.9, 1.5))
print("multiplier  retention  activity  lower bound on activity")
for m, row in rep.aggregates["by_multiplier"].items():
    print(f"{float(m):10.3f}  {row['retention']:9.2f}  {row['activity']:8.2f}  {row['activity_lower_bound']:8.3f}")

# Monte Carlo comparison of the estimator roster
# ==============================================
#
# Reproduces the benchmark experiment layout: draw a random grouped network,
# simulate outcomes with endogenous (0.1), own (0.2), contextual (0.2) and
# spatially correlated (0.1) effects, and compare six estimators on the same
# draws:
#
#   2SLS (finite iv)      small roster J[X, WX, MX, MWX]
#   2SLS (large iv)       plus one centrality column per group  (many IVs)
#   Bias-corrected 2SLS   large roster minus the plug-in instrument-count bias
#   T / LF / PC-2SLS      regularized first stage on the normalized roster,
#                         damping chosen per replication by the MSE estimate
#
# The canonical cells use 500 replications; this demo defaults to 60 so it
# finishes in a few seconds (pass a replication count as the first argument).

import sys
import time

from sarnet import McConfig, run_study, summarize

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 60

for label, config in (
    ("sparse network, small sample", McConfig(group_count=30, group_size=10,
                                              max_links=3, replications=reps,
                                              seed=42)),
    ("dense network, large sample", McConfig(group_count=60, group_size=15,
                                             max_links=6, replications=reps,
                                             seed=42)),
):
    t0 = time.time()
    results = run_study(config)
    summary = summarize(results, config)
    print(f"== {label} ({time.time() - t0:.1f}s)")
    print(summary.to_text())

print("""
Reading the tables: the large roster cuts the SD but biases lambda toward
zero (many weak instruments); the bias correction recenters it; the
regularized estimators keep most of the SD gain while removing much of the
bias, and they improve with network density and sample size.
""")

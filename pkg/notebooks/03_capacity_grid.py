"""
Constrained capacity on a synthetic population
==============================================

Score every pair once, calibrate thresholds at three operating points on the
full-feature store, and count how many identities stay free of false accepts.
"""

import tempfile
from pathlib import Path

from iriscap import (
    PopulationParams,
    QualityPolicy,
    SystemConfig,
    apply_quality_policy,
    build_plan,
    generate_population,
    run_nn,
)
from iriscap.report import calibrate_store, evaluate_store

pop = generate_population(PopulationParams(n_identities=300, seed=3, quality_flip_spread=0.1))
work = Path(tempfile.mkdtemp())

for quality, records in [("ALLQ", pop.records),
                         ("ISOQ", apply_quality_policy(pop.records, QualityPolicy.isoq()))]:
    plan = build_plan(records)
    base = run_nn(plan, pop.templates, SystemConfig(quality_mode=quality), work / f"{quality}100")
    half = run_nn(plan, pop.templates, SystemConfig(quality_mode=quality, feature_level=50),
                  work / f"{quality}50")
    for op in (0.001, 0.01, 0.1):
        thr = calibrate_store(base, op)  # thresholds always come from the 100% store
        for level, store in ((100, base), (50, half)):
            r, _, curve = evaluate_store(store, thr)
            print(f"{quality} M={r.M:3d} op={op:<5} f{level:<3d} t={thr.hd_threshold:.4f} "
                  f"FA={r.total_fa:4d} CC={r.cc:3d} PC={r.pc:6.2f} FRR={r.frr:.4f} "
                  f"first error at k={next((k for k, v in enumerate(curve) if v), None)}")

# With only a few tens of thousands of imposter pairs, the tightest operating
# points cannot admit a single pair and fall back to the 0 threshold, so every
# genuine pair is rejected too. The reduced-feature rows reuse the 100%
# threshold, which is why their false accepts climb so steeply.

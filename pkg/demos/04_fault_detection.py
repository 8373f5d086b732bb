"""Whole study: train, compare both models, detect an injected fault, score the codes.

Takes roughly ten minutes on one core.
"""

import logging

from cellseer.study import MODELS, StudyConfig, run_study

logging.basicConfig(level=logging.INFO, format="%(message)s")
res = run_study(StudyConfig())
for name in MODELS:
    lead = res.fault.lead_hours(name)
    print(f"{name:>10}: inter MAE {res.inter[name].mu:6.2f} mV, "
          f"threshold {res.fault.thresholds[name].value:g} mV, "
          f"lead {'none' if lead is None else f'{lead:.1f} h'}")
print(f"error ratio nn/parametric: {res.error_ratio:.3f}")
print("ordering |rho| per test cycle:", [round(r, 3) for _, r in res.ordering])
print("timings (s):", {k: round(v, 1) for k, v in res.timings.items()})

"""
Plug-in classification under a margin condition
===============================================

eta(x) = 1/2 + sign(x1 - 1/2) |2 x1 - 1| / 2 on the unit square, so the
margin exponent is 1.  Excess risk is measured against the Bayes rule.
"""

from mrproj.classify import bayes_classifier, excess_risk_mc, margin_scenario, risk_curve
from mrproj.regress import ThresholdPolicy
from mrproj.scaling import build_basis

scenario = margin_scenario(theta=1.0, d=2)
print("Bayes rule:", excess_risk_mc(bayes_classifier(scenario), scenario, 20000, seed=0).estimate)

rows = risk_curve(scenario, [512, 1024, 2048, 4096], reps=10, basis=build_basis(2),
                  policy=ThresholdPolicy("density-floor", 1e-9), m=20000, seed=0, j=1)
for row in rows:
    print(f"n={row['n']:5d}  median excess risk {row['median_excess_risk']:.2e}  (+- {row['stderr']:.1e})")

"""
Printed decomposition versus the coordinate formula
===================================================

f^2 = exp(t + x) with the spatial translation V = d/dx.  The factor-wise
second-order expansion drops V_i(u_i) g_i, which here equals exp(t + x).
"""

import numpy as np

from twistlab import (FactorChart, LieCalculus, Mode, Scene, TwistFunction,
                      VectorFieldSpec, compare)

scene = Scene(
    [FactorChart.interval("I", "t", 1, 2, sign=-1.0), FactorChart.interval("I2", "x", 0, 1)],
    [TwistFunction("I2", "sqrt(exp(t + x))")],
    VectorFieldSpec({"I": ["0"], "I2": ["1"]}),
    name="discrepancy",
)

calc = LieCalculus.for_scene(scene)
point = {"t": 1.5, "x": 0.5}
for mode in Mode:
    print(f"{mode.value:9s}", calc.at(point, 2, mode)[1, 1])
print("exp(t+x)  ", np.exp(2.0))

result = compare(scene)
print({m.value: k.value for m, k in result.classifications.items()})
print(result.disagreements)

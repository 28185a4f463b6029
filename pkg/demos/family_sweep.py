"""
How far the cube-root family is from 2-Killing
==============================================

For k != 0 the coordinate residual of the generated twist is
a^2 k^2 c0' exp(a x + b), so only c0' = 0 gives a genuine 2-Killing field.
The printed expansion reports zero for every c0'.
"""

import numpy as np

from twistlab import (Family, FamilyError, FamilyParams, Mode, family_scene,
                      two_killing_residual)

for c0p in np.linspace(-0.5, 1.0, 7):
    p = FamilyParams(Family.CBRT_FLOW, a=1.0, k=1.0, c1=1.0, c2=0.0, c0=1.5, c0p=c0p)
    try:
        scene = family_scene(p)
    except FamilyError as err:
        # large negative c0' makes the profile cross zero inside [1, 2]
        print(f"c0'={c0p:+.2f}  rejected: {err}")
        continue
    oracle = two_killing_residual(scene)
    x = oracle.points.columns()["x2"]
    ratio = oracle.component("x2", "x2") / np.exp(x)
    paper = two_killing_residual(scene, Mode.PAPER).sup
    print(f"c0'={c0p:+.2f}  xx/exp(x) in [{ratio.min():+.6f}, {ratio.max():+.6f}]"
          f"  paper sup {paper:.1e}")

# the k = 0 branch has no dropped term
p = FamilyParams(Family.CBRT_FLOW, a=1.0, k=0.0, c0p=0.7)
print(two_killing_residual(family_scene(p)).sup)

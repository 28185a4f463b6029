"""
A flow that is 2-Killing but not Killing
========================================

The cube-root flow cbrt(t) d/dt + d/dx on a twisted spacetime with
f = exp((2x - 3 t^(2/3)) / 4).
"""

import numpy as np

from twistlab import example_scene, killing_residual, two_killing_residual

scene = example_scene(43, n_spatial=1)
print(scene.metric.G)

# first order: only the time-time component survives, -(2/3) t^(-2/3)
first = killing_residual(scene)
t = first.points.columns()["t"]
print("L_V g, tt component:", first.component("t", "t")[:3])
print("closed form        :", (-2 / 3 * t ** (-2 / 3))[:3])
print("normalized sup", first.sup, "at", first.argmax)

# second order vanishes to rounding
second = two_killing_residual(scene)
print("L_V L_V g sup:", second.sup)
assert not first.holds() and second.holds()

# the same verdict on a two-dimensional spatial slice
print(two_killing_residual(example_scene(43, n_spatial=2)).sup)

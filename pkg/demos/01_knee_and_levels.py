"""
Where the knee sits and how admission control sees utilization
===============================================================

A processor-sharing server answers a request of ``ell`` operations in
ell / (C - rho). The curve is flat at first and then climbs steeply. The knee
is where the steep tangent meets the flat one. The admission controller
quantizes utilization into levels that crowd together just below a target.

Run with ``python3 demos/01_knee_and_levels.py``.
"""

from sqlr.qcurve import PSCurve, find_knee, geometric_levels, quantize_down, quantize_up, response_time

# one request of unit size on a server of capacity 100
curve = PSCurve(ell=1.0, capacity=100.0)
for g in (0.01, 0.1, 0.5, 2.0):
    knee = find_knee(curve, g)
    print(f"gradient {g:>5}: knee at rho = {knee:6.2f}, T there = {response_time(curve, knee):.4f} s")

# the curve itself, coarsely, to see the bend
rho = [0, 50, 80, 90, 95, 97, 98, 99]
print("rho:", rho)
print("T:  ", [round(response_time(curve, r), 3) for r in rho])

# geometric levels for a 60% target with the boundary at 62%; past the
# boundary both quantizers return the boundary itself
levels = geometric_levels(60, 62)
print("levels:", list(levels.levels), "boundary:", levels.x_bnd)
for x in (10, 33, 50, 57.5, 61, 75):
    print(f"  x = {x:>5}: down -> {quantize_down(levels, x):>3}, up -> {quantize_up(levels, x):>3}")

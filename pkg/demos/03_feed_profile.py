"""
Kinematic feed profiles
=======================

Feed behaviour of a straight move, a short move and a right-angle corner, and
the feed-loss areas that a real toolpath produces.
"""
import numpy as np

from forgecam.die_model import Tool
from forgecam.geometry import Polyline
from forgecam.perf_viewer import (MachineModel, NcuModel, corner_speed_limit, detect_feed_loss, machining_time,
                                  plan_feed_profile)
from forgecam.toolpath import Move, Toolpath

machine = MachineModel.uniform(v_max=333.0, a_max=1000.0)
ncu = NcuModel(corner_tolerance=0.01)
tool = Tool("B10", "ball_end", 5.0, 5.0, 60.0)


def path(points, feed=6000.0):
    return Toolpath((Move("cut", Polyline(np.asarray(points, float)), feed=feed),), tool, "imported", "one_way")


# 100 mm at 100 mm/s: accelerate, cruise, decelerate
p = plan_feed_profile(path([[0, 0, 0], [100, 0, 0]]), machine, ncu)
print(f"trapezoid: {machining_time(p):.4f} s, peak {p.v.max():.2f} mm/s")

# 5 mm never reaches the programmed feed
p = plan_feed_profile(path([[0, 0, 0], [5, 0, 0]]), machine, ncu)
print(f"triangle:  {machining_time(p):.4f} s, peak {p.v.max():.2f} mm/s")

# the controller rounds corners within its tolerance; the radius bounds the speed
v = corner_speed_limit([1, 0, 0], [0, 1, 0], MachineModel.uniform(333.0, 2000.0), ncu)
print(f"right-angle corner limit: {v:.3f} mm/s")

# a zigzag of short strokes loses feed at every turn
zig = [[x, 10.0 * (k % 2), 0.0] for k, x in enumerate(np.arange(0.0, 20.0, 1.0))]
p = plan_feed_profile(path(zig), machine, ncu)
areas = detect_feed_loss(p)
print(f"zigzag: {machining_time(p):.3f} s, {len(areas)} feed-loss areas, "
      f"{sum(a.length for a in areas):.1f} mm below 90 % of feed")
print(p.to_csv().splitlines()[:4])

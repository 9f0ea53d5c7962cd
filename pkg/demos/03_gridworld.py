"""Walk the robot to the object and back by hand, with noisy sensor readings."""
import numpy as np

from kbpomdp import Action, load_map, observe, reset, step

grid = load_map()
rng = np.random.default_rng(1)
s = reset(grid)
L, R, M, G = Action.TurnLeft, Action.TurnRight, Action.Move, Action.Grab

# north through both doorways to row 4, east to the object, then west to the target
plan = [M] * 6 + [R] + [M] * 4 + [G] + [L, L] + [M] * 9
total = 0.0
for a in plan:
    s, r, done = step(s, a, grid)
    total += r
    o = observe(s, rng)
    print(f"{a.name:<9} -> x={s.x:2d} y={s.y:2d} l={s.l} d={s.d.name:<5} h={int(s.h)}  reward {r:+5.0f}   sensed ({o.ox:2d},{o.oy:2d},{o.ol})")
    if done:
        break
print(f"\ndelivered: {s.terminal}, total reward {total:+.0f}")
print(grid.render(s))

"""Bias beliefs from map-derived knowledge, and the two revision rules."""
import numpy as np

from kbpomdp import compute_bias, derive_knowledge_from_map, jeffrey_revision, load_map, rnorm_combine

grid = load_map()
print(grid.render())

kb = derive_knowledge_from_map(grid)
print("\nknowledge pairs:", kb.pairs())
print("P(l | x=4):", kb.get("x", "l").table[4].round(3))

bias = compute_bias(kb)
np.set_printoptions(precision=3, suppress=True)
for a in ("x", "y", "l"):
    print(f"bias over {a}:", bias[a])

# a filtered belief that is fairly sure the robot is in room2
b = np.array([0.05, 0.1, 0.8, 0.05])
print("\nfiltered belief over l :", b)
print("r-norm blend (beta=0.5):", rnorm_combine(b, bias["l"], 0.5, 1.0))
print("Jeffrey step           :", jeffrey_revision(bias["l"], b, threshold=0.2, beta=0.5, r=1.0))
print("Jeffrey then blend     :", rnorm_combine(jeffrey_revision(bias["l"], b), bias["l"], 0.5, 1.0))

# the Jeffrey step keeps the ratios among the untouched entries
out = jeffrey_revision(bias["l"], b)
print("ratio b[0]/b[1] before and after:", b[0] / b[1], out[0] / out[1])

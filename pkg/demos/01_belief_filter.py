"""Factored belief filtering on a tiny two-attribute problem, checked against
the exact joint filter."""
import numpy as np

from kbpomdp import (
    AttributeSpace, FactoredBelief, FactoredModel, joint_filter_oracle,
    joint_product, marginals, quantize, update_factored_belief,
)

rng = np.random.default_rng(0)
space = AttributeSpace(("a", "b"), (3, 2))

# sticky chains, noisy sensors
Ta = np.array([[0.8, 0.2, 0.0], [0.1, 0.8, 0.1], [0.0, 0.2, 0.8]])
Tb = np.array([[0.9, 0.1], [0.3, 0.7]])
Za = np.array([[0.7, 0.2, 0.1], [0.15, 0.7, 0.15], [0.1, 0.2, 0.7]])
Zb = np.array([[0.8, 0.2], [0.25, 0.75]])
model = FactoredModel(space, {"a": {0: Ta}, "b": {0: Tb}}, {"a": Za, "b": Zb})

belief = FactoredBelief.uniform(space)
joint = joint_product(belief.components)
print("start   ", [c.round(3).tolist() for c in belief.components])

for t, obs in enumerate([{"a": 2, "b": 0}, {"a": 2, "b": 0}, {"a": 1, "b": 1}]):
    belief = update_factored_belief(belief, 0, obs, model)
    joint = joint_filter_oracle(joint, np.kron(Ta, Tb), np.kron(Za[:, obs["a"]], Zb[:, obs["b"]]))
    gap = max(np.abs(f - j).max() for f, j in zip(belief.components, marginals(joint, space.sizes)))
    print(f"step {t}  ", [c.round(3).tolist() for c in belief.components], f"key {quantize(belief)}  gap vs joint {gap:.1e}")

print("\nWith independent chains the factored filter is exact, so the gap stays at rounding level.")

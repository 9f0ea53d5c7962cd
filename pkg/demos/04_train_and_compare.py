"""All five methods trained on the default map with one seed.

The full comparison over five seeds is `kbpomdp compare`; one seed takes
about half a minute.
"""
from kbpomdp import ExperimentConfig, Hyperparams, derive_knowledge_from_map, load_map
from kbpomdp import experiment as ex

grid = load_map()
cfg = ExperimentConfig(hyper=Hyperparams(), seeds=(1,), eval_episodes=300)
result = ex.run_comparison(cfg, grid, derive_knowledge_from_map(grid))
print(ex.format_summary(result.summary))

for m in cfg.methods:
    roll = ex.rolling_mean(result.mean_curve(m))
    print(f"{m.value:<13} rolling mean reward at episodes 2000/5000/9999: "
          + " ".join(f"{roll[i]:8.1f}" for i in (2000, 5000, 9999)))

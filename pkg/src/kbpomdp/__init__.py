"""Knowledge-augmented belief estimation for factored POMDPs.

Submodules:

- ``belief``: factored beliefs and the per-attribute Bayes filter
- ``knowledge``: conditional-probability knowledge, bias beliefs, Jeffrey and r-norm revision
- ``gridworld``: the 13x13 object-fetching domain
- ``learner``: tabular Q-learning over quantized beliefs
- ``experiment``: five-way comparison harness and file formats
"""

from .belief import (
    AttributeSpace,
    DegenerateEvidenceError,
    FactoredBelief,
    FactoredModel,
    joint_filter_oracle,
    joint_product,
    marginals,
    quantize,
    update_attribute_belief,
    update_factored_belief,
)
from .knowledge import (
    BiasBelief,
    KnowledgeBase,
    KnowledgeMatrix,
    compute_bias,
    derive_knowledge_from_map,
    jeffrey_revision,
    rnorm_combine,
    solve_bias,
)
from .experiment import ExperimentConfig, load_config, run_comparison
from .gridworld import Action, Direction, GridMap, RobotState, load_map, observe, reset, step
from .learner import Hyperparams, MethodVariant, QTable, train

__version__ = "0.1.0"

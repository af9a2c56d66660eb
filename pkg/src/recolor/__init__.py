"""Iterative binary-coloring environment for instance segmentation."""

from .coloring import (
    ColorState,
    apply_action,
    colors_from_planes,
    decode_instances,
    label_components,
    relabel_consecutive,
    remove_small_segments,
)
from .edges import (
    MergeEdgeSystem,
    SplitEdgeSystem,
    build_merge_system,
    build_split_system,
    shrink_segment,
)
from .env import (
    EnvConfig,
    Episode,
    SamplePair,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .metrics import EvalOptions, evaluate, evaluate_pair
from .net import NetSpec, load_checkpoint, save_checkpoint
from .policy import (
    OptimConfig,
    PolicyParams,
    default_spec,
    infer,
    new_policy,
    train,
)
from .reward import RewardConfig, RewardMap

__version__ = "0.1.0"

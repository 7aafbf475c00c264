"""Python access to the treealign core.

The extension speaks JSON text; these wrappers decode it into plain dicts.
"""

import json

from . import _core
from ._core import TreeAlignError, __version__, auc, compute_iou, drop_moment, masked_bce

__all__ = [
    "TreeAlignError",
    "__version__",
    "auc",
    "build_tree",
    "compute_iou",
    "default_config",
    "drop_moment",
    "generate_tasks",
    "gold_trajectory",
    "masked_bce",
    "mc_values",
    "run_pipeline",
    "verify_run",
]


def _text(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def default_config():
    return json.loads(_core.default_config())


def generate_tasks(seed, count, config=None):
    return [json.loads(t) for t in _core.generate_tasks(seed, count, _text(config or {}))]


def gold_trajectory(task):
    return json.loads(_core.gold_trajectory(_text(task)))


def build_tree(task, policy=None, config=None):
    """Entropy-guided tree for one task; the untrained toy policy by default."""
    return json.loads(_core.build_tree(_text(task), _text(policy) if policy else "", _text(config or {})))


def mc_values(tree):
    """(node_id, successes, total, value) per node."""
    return _core.mc_values(_text(tree))


def run_pipeline(config, out_dir, resume=False, jobs=1):
    return json.loads(_core.run_pipeline(_text(config), str(out_dir), resume, jobs))


def verify_run(run_dir):
    return _core.verify_run(str(run_dir))

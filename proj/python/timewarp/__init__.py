"""Python access to the timewarp core."""

import json
import os
from pathlib import Path

_prompts = Path(__file__).with_name("prompts")
if "TIMEWARP_PROMPT_DIR" not in os.environ and _prompts.is_dir():
    os.environ["TIMEWARP_PROMPT_DIR"] = str(_prompts)

from . import _timewarp  # noqa: E402
from ._timewarp import TimewarpError, make_shuffle, stage_names, token_similarity  # noqa: E402

__all__ = [
    "TimewarpError",
    "dpo_grad",
    "dpo_loss",
    "dpo_to_kto",
    "make_shuffle",
    "random_group_baseline",
    "run",
    "score_group",
    "stage_names",
    "token_similarity",
    "trim_video",
]


def run(config, stages=(), out_dir=None, seed=None, dry_run=False, force=False):
    """Run pipeline stages (all of them when `stages` is empty)."""
    text = _timewarp.run_stages(str(config), list(stages), None if out_dir is None else str(out_dir), seed,
                                dry_run, force)
    return json.loads(text)


def trim_video(record, max_s=105.0, min_scenes=2):
    return json.loads(_timewarp.trim_video(json.dumps(record), max_s, min_scenes))


def dpo_to_kto(pairs):
    return json.loads(_timewarp.dpo_to_kto(json.dumps(list(pairs))))


def dpo_loss(batch):
    return _timewarp.dpo_loss(json.dumps(list(batch)))


def dpo_grad(batch):
    return [tuple(g) for g in _timewarp.dpo_grad(json.dumps(list(batch)))]


def score_group(quads):
    """quads: iterable of (t1, t2, v1, v2) choices."""
    return json.loads(_timewarp.score_group([tuple(q) for q in quads]))


def random_group_baseline(n, seed=0):
    """Scores of uniform random guessing over n quadruples."""
    return json.loads(_timewarp.random_group_baseline(n, seed))

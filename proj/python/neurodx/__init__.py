"""Volumetric MRI reports, differential-diagnosis parsing, rewards and GRPO sandbox."""

import json as _json

from . import _core
from ._core import NeurodxError, RewardService, compute_sds, group_advantages, version

__all__ = [
    "NeurodxError",
    "RewardService",
    "compute_sds",
    "evaluate",
    "generate_reports",
    "grade",
    "grpo_train",
    "group_advantages",
    "handle_rewards_request",
    "majority_vote",
    "parse_completion",
    "score_completion",
    "sds_table",
    "version",
]


def _subject(subject):
    return subject if isinstance(subject, str) else _json.dumps(subject)


def grade(sds):
    """(grade name, direction, signed severity -6..6) under the default scale."""
    return _core.grade(sds)


def sds_table(subject, normative_model=""):
    """SDS records of a subject dict (or JSON text); empty model path uses the synthetic model."""
    return _json.loads(_core.sds_table(_subject(subject), str(normative_model)))


def generate_reports(subject, n=3, seed=0, normative_model=""):
    return _json.loads(_core.generate_reports(_subject(subject), n, seed, str(normative_model)))


def parse_completion(text):
    return _json.loads(_core.parse_completion(text))


def score_completion(text, gold):
    return _json.loads(_core.score_completion(text, gold))


def handle_rewards_request(body):
    """(status, response dict) for a POST /v1/rewards body (dict or JSON text)."""
    status, out = _core.handle_rewards_request(body if isinstance(body, str) else _json.dumps(body))
    return status, _json.loads(out)


def evaluate(pairs):
    """Metrics for (gold, predicted) label pairs."""
    return _json.loads(_core.evaluate([(g, p) for g, p in pairs]))


def majority_vote(completions):
    """(winner, tie_broken, excluded) over completion texts."""
    return _core.majority_vote(list(completions))


def grpo_train(steps=500, seed=1, group_size=6, epsilon=0.2, beta=0.005):
    return _json.loads(_core.grpo_train(steps, seed, group_size, epsilon, beta))

"""Step-level supervision: Monte Carlo labels, PRM scores, selection, DPO pairs.

A trajectory's steps are labeled by cutting it after each prefix, asking a
backend to finish the reasoning, and counting how many completions land on
the gold answer. Scores come either from the symbolic verifier or a remote
scoring service. Selection and preference-pair construction sit on top of
those judgments.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass

import requests

from .jsonl import write_jsonl
from .llm import GenerationRequest, generate_batch
from .problems import Problem
from .rules import VerdictStatus, verify_trajectory
from .trajectory import (
    EmptyTrajectory,
    Trajectory,
    build_completion_prompt,
    build_sampling_prompt,
    parse_trajectory,
    render_step,
)

logger = logging.getLogger(__name__)

DEFAULT_N_SAMPLES = 10
DEFAULT_K = 1
DEFAULT_STEP_THRESHOLD = 0.5
DEFAULT_DPO_THRESHOLD = 0.25
LOSS_EPSILON = 1e-7

VERDICT_PROBS = {
    VerdictStatus.VERIFIED_BY_RULE: 0.99,
    VerdictStatus.VERIFIED_SEMANTICALLY: 0.90,
    VerdictStatus.UNPARSEABLE: 0.50,
    VerdictStatus.INVALID: 0.01,
}


class LengthMismatch(ValueError):
    """Labels and scores disagree on the number of steps."""


class ScorerUnavailable(RuntimeError):
    """The scoring service cannot judge this trajectory."""


def make_trajectory_id(problem_id: str, raw_text: str) -> str:
    digest = hashlib.sha1(raw_text.encode("utf-8")).hexdigest()[:12]
    return f"{problem_id}#{digest}"


def trajectory_id_of(traj: Trajectory) -> str:
    return make_trajectory_id(traj.problem_id, traj.raw_text)


@dataclass(frozen=True)
class StepLabel:
    trajectory_id: str
    step_index: int
    n_samples: int
    n_success: int
    hard_label: int
    completions: tuple[tuple[str | None, bool], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "completions", tuple(tuple(c) for c in self.completions))
        if not 0 <= self.n_success <= self.n_samples:
            raise ValueError(f"n_success {self.n_success} outside 0..{self.n_samples}")
        if self.hard_label not in (1, -1):
            raise ValueError(f"hard_label must be +1 or -1, got {self.hard_label}")


def step_label_to_dict(label: StepLabel) -> dict:
    return {
        "trajectory_id": label.trajectory_id,
        "step_index": label.step_index,
        "n_samples": label.n_samples,
        "n_success": label.n_success,
        "hard_label": label.hard_label,
        "completions": [[answer, matched] for answer, matched in label.completions],
    }


def step_label_from_dict(d: dict) -> StepLabel:
    return StepLabel(
        trajectory_id=d["trajectory_id"],
        step_index=d["step_index"],
        n_samples=d["n_samples"],
        n_success=d["n_success"],
        hard_label=d["hard_label"],
        completions=tuple((c[0], bool(c[1])) for c in d.get("completions", [])),
    )


@dataclass(frozen=True)
class PrmScore:
    trajectory_id: str
    step_probs: tuple[float, ...]
    trajectory_prob: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "step_probs", tuple(float(p) for p in self.step_probs))
        for p in self.step_probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"step probability {p} outside [0, 1]")
        product = math.prod(self.step_probs)
        if self.trajectory_prob is None:
            object.__setattr__(self, "trajectory_prob", product)
        elif abs(self.trajectory_prob - product) > 1e-12:
            raise ValueError(
                f"trajectory_prob {self.trajectory_prob} differs from step product {product}"
            )


@dataclass(frozen=True)
class PreferencePair:
    problem_id: str
    chosen: str
    rejected: str
    gap: float


# ---------------------------------------------------------------------------
# Monte Carlo labeling
# ---------------------------------------------------------------------------


def mc_label(
    problem: Problem,
    traj: Trajectory,
    backend,
    n_samples: int = DEFAULT_N_SAMPLES,
    k: int = DEFAULT_K,
    temperature: float = 0.7,
    max_tokens: int = 512,
    parallelism: int = 4,
    n_shots: int = 1,
) -> list[StepLabel]:
    """One StepLabel per prefix of the trajectory.

    The label for step_index p-1 counts completions sampled after the first p
    steps that end on the gold answer; hard_label is +1 iff at least k do.
    Backend failures count as non-matching; a too-long prompt skips that
    prefix with a logged reason.
    """
    if not traj.steps:
        raise ValueError("trajectory has no steps to label")
    if not 1 <= k <= n_samples:
        raise ValueError(f"need 1 <= k <= n_samples, got k={k} n_samples={n_samples}")
    tid = trajectory_id_of(traj) if traj.problem_id else make_trajectory_id(problem.id, traj.raw_text)
    labels: list[StepLabel] = []
    for prefix_len in range(1, len(traj.steps) + 1):
        messages = build_completion_prompt(problem, traj, prefix_len, n_shots).to_messages()
        reqs = [
            GenerationRequest(
                messages=tuple(messages), temperature=temperature, max_tokens=max_tokens, seed=i
            )
            for i in range(n_samples)
        ]
        responses = generate_batch(backend, reqs, parallelism)
        if any(r.error and r.error.startswith("PromptTooLong") for r in responses):
            logger.warning("%s: prefix %d skipped: prompt too long", tid, prefix_len)
            continue
        completions: list[tuple[str | None, bool]] = []
        n_success = 0
        for r in responses:
            if r.error:
                logger.warning("%s: completion failed, counted as non-matching: %s", tid, r.error)
                completions.append((None, False))
                continue
            try:
                answer = parse_trajectory(r.text).final_answer
            except EmptyTrajectory:
                answer = None
            matched = answer is problem.label
            n_success += matched
            completions.append((str(answer) if answer is not None else None, matched))
        labels.append(
            StepLabel(
                trajectory_id=tid,
                step_index=prefix_len - 1,
                n_samples=n_samples,
                n_success=n_success,
                hard_label=1 if n_success >= k else -1,
                completions=tuple(completions),
            )
        )
    return labels


# ---------------------------------------------------------------------------
# PRM loss and scoring
# ---------------------------------------------------------------------------


def prm_loss(labels, scores: PrmScore) -> float:
    """Binary cross-entropy between hard step labels and step probabilities."""
    labels = list(labels)
    if len(labels) != len(scores.step_probs):
        raise LengthMismatch(f"{len(labels)} labels vs {len(scores.step_probs)} probabilities")
    total = 0.0
    for label, prob in zip(labels, scores.step_probs):
        y = 1.0 if label.hard_label > 0 else 0.0
        r = min(max(prob, LOSS_EPSILON), 1.0 - LOSS_EPSILON)
        total -= y * math.log(r) + (1.0 - y) * math.log(1.0 - r)
    return total


class SymbolicScorer:
    """Step probabilities from the rule verifier's verdicts."""

    def __init__(self, problems, max_domain: int = 3):
        self._by_id = {p.id: p for p in problems}
        self.max_domain = max_domain

    def step_probs(self, traj: Trajectory) -> list[float]:
        problem = self._by_id.get(traj.problem_id)
        if problem is None:
            raise ScorerUnavailable(f"no problem on record for {traj.problem_id!r}")
        verdicts = verify_trajectory(problem, traj, max_domain=self.max_domain)
        return [VERDICT_PROBS[v.status] for v in verdicts]


class RemoteScorer:
    """Step probabilities from an HTTP service: POST {steps:[...]} -> {probs:[...]}."""

    def __init__(self, url: str, timeout_s: float = 60.0, session=None):
        self.url = url
        self.timeout_s = timeout_s
        self._session = session if session is not None else requests.Session()

    def step_probs(self, traj: Trajectory) -> list[float]:
        payload = {"steps": [render_step(s) for s in traj.steps]}
        try:
            resp = self._session.post(self.url, json=payload, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ScorerUnavailable(f"scorer request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ScorerUnavailable(f"scorer answered HTTP {resp.status_code}")
        try:
            probs = resp.json()["probs"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ScorerUnavailable(f"scorer response malformed: {exc}") from exc
        if not isinstance(probs, list) or len(probs) != len(traj.steps):
            raise ScorerUnavailable("scorer returned a wrong-length probability list")
        return [float(p) for p in probs]


def score_trajectory(traj: Trajectory, scorer) -> PrmScore:
    return PrmScore(trajectory_id=trajectory_id_of(traj), step_probs=tuple(scorer.step_probs(traj)))


# ---------------------------------------------------------------------------
# Selection and preference pairs
# ---------------------------------------------------------------------------


def select_trajectories(
    trajs,
    problems,
    scores=None,
    labels=None,
    step_threshold: float = DEFAULT_STEP_THRESHOLD,
) -> list[Trajectory]:
    """Trajectories whose every step is judged positive and whose answer is gold.

    Judgments come from MC labels (every hard_label +1), from PRM scores
    (every step probability strictly above step_threshold), or both when both
    are given. Trajectories without a complete judgment are dropped.
    """
    if scores is None and labels is None:
        raise ValueError("need scores, labels, or both to judge steps")
    by_id = {p.id: p for p in problems}
    score_map = {s.trajectory_id: s for s in scores} if scores is not None else None
    label_map: dict[str, list[StepLabel]] | None = None
    if labels is not None:
        label_map = {}
        for label in labels:
            label_map.setdefault(label.trajectory_id, []).append(label)
    selected = []
    for traj in trajs:
        problem = by_id.get(traj.problem_id)
        if problem is None:
            logger.warning("dropping trajectory for unknown problem %r", traj.problem_id)
            continue
        if traj.final_answer is not problem.label:
            continue
        tid = trajectory_id_of(traj)
        ok = True
        if label_map is not None:
            traj_labels = sorted(label_map.get(tid, []), key=lambda l: l.step_index)
            ok &= len(traj_labels) == len(traj.steps)
            ok &= all(l.hard_label > 0 for l in traj_labels)
        if ok and score_map is not None:
            score = score_map.get(tid)
            ok &= (
                score is not None
                and len(score.step_probs) == len(traj.steps)
                and all(p > step_threshold for p in score.step_probs)
            )
        if ok:
            selected.append(traj)
    return selected


def build_dpo_pairs(groups, threshold: float = DEFAULT_DPO_THRESHOLD) -> list[PreferencePair]:
    """Preference pairs within each problem group.

    groups maps problem_id -> iterable of (trajectory_id, trajectory_prob).
    Every pair whose probability gap strictly exceeds the threshold is
    emitted, higher probability as chosen; output is sorted by problem_id,
    then gap descending.
    """
    pairs: list[PreferencePair] = []
    for problem_id in sorted(groups):
        entries = sorted(groups[problem_id], key=lambda e: (-e[1], e[0]))
        for (tid_a, prob_a), (tid_b, prob_b) in itertools.combinations(entries, 2):
            gap = prob_a - prob_b
            if gap > threshold:
                pairs.append(PreferencePair(problem_id, tid_a, tid_b, gap))
    pairs.sort(key=lambda p: (p.problem_id, -p.gap, p.chosen, p.rejected))
    return pairs


# ---------------------------------------------------------------------------
# Dataset exports
# ---------------------------------------------------------------------------


def _prompt_text(problem: Problem, n_shots: int) -> str:
    messages = build_sampling_prompt(problem, n_shots).to_messages()
    return "\n\n".join(m["content"] for m in messages)


def export_prm_dataset(labels, trajectories, problems, path, n_shots: int = 1) -> int:
    """PRM records {prompt, steps, step_labels}; returns the record count."""
    by_id = {p.id: p for p in problems}
    label_map: dict[str, dict[int, int]] = {}
    for label in labels:
        label_map.setdefault(label.trajectory_id, {})[label.step_index] = label.hard_label
    records = []
    for traj in trajectories:
        tid = trajectory_id_of(traj)
        per_step = label_map.get(tid)
        problem = by_id.get(traj.problem_id)
        if per_step is None or problem is None:
            continue
        records.append(
            {
                "prompt": _prompt_text(problem, n_shots),
                "steps": [render_step(s) for s in traj.steps],
                "step_labels": [per_step.get(i) for i in range(len(traj.steps))],
            }
        )
    write_jsonl(path, records)
    return len(records)


def export_sft_dataset(selected, problems, path, n_shots: int = 1) -> int:
    """SFT records {prompt, response}; returns the record count."""
    by_id = {p.id: p for p in problems}
    records = []
    for traj in selected:
        problem = by_id.get(traj.problem_id)
        if problem is None:
            continue
        records.append({"prompt": _prompt_text(problem, n_shots), "response": traj.raw_text})
    write_jsonl(path, records)
    return len(records)


def export_dpo_dataset(pairs, trajectories, problems, path, n_shots: int = 1) -> int:
    """DPO records {prompt, chosen, rejected}; returns the record count."""
    by_id = {p.id: p for p in problems}
    raw_by_tid = {trajectory_id_of(t): t.raw_text for t in trajectories}
    records = []
    for pair in pairs:
        problem = by_id.get(pair.problem_id)
        chosen = raw_by_tid.get(pair.chosen)
        rejected = raw_by_tid.get(pair.rejected)
        if problem is None or chosen is None or rejected is None:
            logger.warning("skipping pair with missing pieces: %s", pair)
            continue
        records.append(
            {"prompt": _prompt_text(problem, n_shots), "chosen": chosen, "rejected": rejected}
        )
    write_jsonl(path, records)
    return len(records)

"""Tests for Monte Carlo step labels, PRM scoring, selection, and exports."""

import hashlib
import json
import math
import random
from pathlib import Path

import pytest

from symtraj.fol import parse_formula
from symtraj.jsonl import read_jsonl
from symtraj.llm import (
    GenerationResponse,
    PromptTooLong,
    ScriptedMockBackend,
    prompt_key,
)
from symtraj.problems import Problem, Statement
from symtraj.semantics import Label
from symtraj.supervision import (
    PreferencePair,
    PrmScore,
    RemoteScorer,
    ScorerUnavailable,
    StepLabel,
    SymbolicScorer,
    build_dpo_pairs,
    export_dpo_dataset,
    export_prm_dataset,
    export_sft_dataset,
    make_trajectory_id,
    mc_label,
    prm_loss,
    score_trajectory,
    select_trajectories,
    step_label_from_dict,
    step_label_to_dict,
    trajectory_id_of,
)
from symtraj.trajectory import build_completion_prompt, parse_trajectory

DATA_DIR = Path(__file__).parent / "data"

MC_TRACE = """Thought: Work from the two premises toward the question.
Action: Apply instantiation to the universally quantified formula
Observation: Cook(alice) -> Tea(alice)
Action: Apply modus ponens to derive the next fact
Observation: Tea(alice)
Action: Finish [True]
"""


def _chain_problem(pid: str = "mc-fixture") -> Problem:
    return Problem(
        id=pid,
        premises=(
            Statement(nl="Everyone who cooks drinks tea.", formula=parse_formula("∀x (Cook(x) → Tea(x))")),
            Statement(nl="Alice cooks.", formula=parse_formula("Cook(alice)")),
        ),
        hypothesis=Statement(nl="Alice drinks tea.", formula=parse_formula("Tea(alice)")),
        label=Label.TRUE,
        source="custom",
    )


def _mc_fixture():
    problem = _chain_problem()
    traj = parse_trajectory(MC_TRACE, problem_id=problem.id)
    return problem, traj


class CountingBackend:
    """Answers gold for request seeds below succeed_first, wrong above."""

    def __init__(self, succeed_first: int, gold: str = "True", wrong: str = "False"):
        self.succeed_first = succeed_first
        self.gold = gold
        self.wrong = wrong
        self.calls = 0

    def generate(self, req) -> GenerationResponse:
        self.calls += 1
        answer = self.gold if req.seed < self.succeed_first else self.wrong
        return GenerationResponse(text=f"Action: Finish [{answer}]", finish_reason="stop")


class FlakyBackend:
    """Raises for the listed request seeds, answers gold otherwise."""

    def __init__(self, bad_seeds):
        self.bad_seeds = set(bad_seeds)

    def generate(self, req) -> GenerationResponse:
        if req.seed in self.bad_seeds:
            raise RuntimeError("transient backend failure")
        return GenerationResponse(text="Action: Finish [True]", finish_reason="stop")


class SizeLimitedBackend:
    """Rejects prompts above a character budget, answers gold otherwise."""

    def __init__(self, max_chars: int):
        self.max_chars = max_chars

    def generate(self, req) -> GenerationResponse:
        chars = sum(len(m.get("content", "")) for m in req.messages)
        if chars > self.max_chars:
            raise PromptTooLong(f"prompt is {chars} chars, limit {self.max_chars}")
        return GenerationResponse(text="Action: Finish [True]", finish_reason="stop")


# ---------------------------------------------------------------------------
# StepLabel and PrmScore containers
# ---------------------------------------------------------------------------


def test_step_label_validation():
    with pytest.raises(ValueError):
        StepLabel("t#1", 0, n_samples=10, n_success=11, hard_label=1)
    with pytest.raises(ValueError):
        StepLabel("t#1", 0, n_samples=10, n_success=-1, hard_label=-1)
    with pytest.raises(ValueError):
        StepLabel("t#1", 0, n_samples=10, n_success=5, hard_label=0)


def test_step_label_dict_round_trip():
    label = StepLabel(
        "p#abc",
        3,
        n_samples=4,
        n_success=2,
        hard_label=1,
        completions=(("True", True), (None, False), ("False", False), ("True", True)),
    )
    again = step_label_from_dict(step_label_to_dict(label))
    assert again == label


def test_prm_score_product():
    score = PrmScore("t#1", (0.5, 0.5, 0.8))
    assert score.trajectory_prob == pytest.approx(0.2, abs=1e-12)


def test_prm_score_empty_product_is_one():
    assert PrmScore("t#1", ()).trajectory_prob == 1.0


def test_prm_score_rejects_out_of_range():
    with pytest.raises(ValueError):
        PrmScore("t#1", (0.5, 1.5))
    with pytest.raises(ValueError):
        PrmScore("t#1", (-0.1,))


def test_prm_score_rejects_inconsistent_product():
    with pytest.raises(ValueError):
        PrmScore("t#1", (0.5, 0.5), trajectory_prob=0.3)


def test_make_trajectory_id_is_stable():
    tid = make_trajectory_id("prob-7", "some raw text")
    assert tid == "prob-7#" + hashlib.sha1(b"some raw text").hexdigest()[:12]
    assert make_trajectory_id("prob-7", "some raw text") == tid
    assert make_trajectory_id("prob-7", "other text") != tid


# ---------------------------------------------------------------------------
# Monte Carlo labeling
# ---------------------------------------------------------------------------


def test_mc_label_matches_committed_expectations():
    problem, traj = _mc_fixture()
    script = {}
    for prefix_len in range(1, len(traj.steps) + 1):
        messages = build_completion_prompt(problem, traj, prefix_len).to_messages()
        answer = "True" if prefix_len <= 3 else "False"
        script[prompt_key(messages)] = f"Action: Finish [{answer}]"
    backend = ScriptedMockBackend(script)

    labels = mc_label(problem, traj, backend, n_samples=10, k=1)
    got = [json.dumps(step_label_to_dict(l), ensure_ascii=False, sort_keys=True) for l in labels]
    expected = (DATA_DIR / "mc_labels_expected.jsonl").read_text(encoding="utf-8").splitlines()
    assert got == expected


def test_mc_label_boundary_between_success_and_failure():
    problem, traj = _mc_fixture()
    script = {}
    for prefix_len in range(1, len(traj.steps) + 1):
        messages = build_completion_prompt(problem, traj, prefix_len).to_messages()
        answer = "True" if prefix_len <= 3 else "False"
        script[prompt_key(messages)] = f"Action: Finish [{answer}]"
    labels = mc_label(problem, traj, ScriptedMockBackend(script), n_samples=10, k=1)

    assert [l.hard_label for l in labels] == [1, 1, 1, -1, -1, -1]
    assert [l.step_index for l in labels] == list(range(6))
    assert labels[2].n_success == 10 and labels[3].n_success == 0


def test_mc_label_hard_label_thresholds_exhaustively():
    problem = _chain_problem("thresh")
    traj = parse_trajectory("Thought: immediate.\nAction: Finish [True]", problem_id="thresh")
    for k in range(1, 11):
        for m in range(0, 11):
            labels = mc_label(problem, traj, CountingBackend(m), n_samples=10, k=k)
            want = 1 if m >= k else -1
            assert all(l.n_success == m for l in labels)
            assert all(l.hard_label == want for l in labels), (k, m)


def test_mc_label_counts_backend_errors_as_failures():
    problem = _chain_problem("flaky")
    traj = parse_trajectory("Thought: immediate.\nAction: Finish [True]", problem_id="flaky")
    labels = mc_label(problem, traj, FlakyBackend({1, 4, 7}), n_samples=10, k=8)
    assert all(l.n_success == 7 for l in labels)
    assert all(l.hard_label == -1 for l in labels)
    assert labels[0].completions[1] == (None, False)
    assert labels[0].completions[0] == ("True", True)


def test_mc_label_skips_prefixes_with_too_long_prompts():
    problem, traj = _mc_fixture()
    sizes = [
        sum(len(m["content"]) for m in build_completion_prompt(problem, traj, p).to_messages())
        for p in range(1, len(traj.steps) + 1)
    ]
    assert sizes == sorted(sizes)
    # Budget sits between the third and fourth prefix prompt sizes.
    cutoff = (sizes[2] + sizes[3]) // 2
    labels = mc_label(problem, traj, SizeLimitedBackend(cutoff), n_samples=3, k=1)
    assert [l.step_index for l in labels] == [0, 1, 2]
    assert all(l.hard_label == 1 for l in labels)


def test_mc_label_rejects_bad_arguments():
    problem, traj = _mc_fixture()
    backend = CountingBackend(10)
    with pytest.raises(ValueError):
        mc_label(problem, traj, backend, n_samples=10, k=0)
    with pytest.raises(ValueError):
        mc_label(problem, traj, backend, n_samples=10, k=11)
    empty = parse_trajectory("Action: Finish [True]", problem_id="mc-fixture")
    stripped = type(traj)(steps=(), final_answer=None, raw_text="")
    with pytest.raises(ValueError):
        mc_label(problem, stripped, backend)
    assert empty.steps  # sanity: the Finish line itself is a step


# ---------------------------------------------------------------------------
# PRM loss
# ---------------------------------------------------------------------------


def _labels_for(tid, hard_labels):
    return [
        StepLabel(tid, i, n_samples=1, n_success=1 if h > 0 else 0, hard_label=h)
        for i, h in enumerate(hard_labels)
    ]


def _reference_prm_loss(hard_labels, probs) -> float:
    total = 0.0
    for h, p in zip(hard_labels, probs):
        y = 1.0 if h > 0 else 0.0
        p = min(max(p, 1e-7), 1.0 - 1e-7)
        total -= y * math.log(p) + (1.0 - y) * math.log(1.0 - p)
    return total


def test_prm_loss_hand_case():
    loss = prm_loss(_labels_for("t#1", [1]), PrmScore("t#1", (0.5,)))
    assert loss == pytest.approx(0.6931, abs=1e-4)


def test_prm_loss_mixed_hand_case():
    loss = prm_loss(_labels_for("t#1", [1, -1]), PrmScore("t#1", (0.9, 0.2)))
    assert loss == pytest.approx(-math.log(0.9) - math.log(0.8), abs=1e-9)


def test_prm_loss_matches_reference_on_random_vectors():
    rng = random.Random(77)
    for _ in range(100):
        n = rng.randint(1, 12)
        hard = [rng.choice((1, -1)) for _ in range(n)]
        probs = [rng.random() for _ in range(n)]
        got = prm_loss(_labels_for("t#r", hard), PrmScore("t#r", tuple(probs)))
        assert got == pytest.approx(_reference_prm_loss(hard, probs), abs=1e-9)


def test_prm_loss_clamps_extreme_probabilities():
    loss = prm_loss(_labels_for("t#1", [1]), PrmScore("t#1", (0.0,)))
    assert math.isfinite(loss)
    assert loss == pytest.approx(-math.log(1e-7), rel=1e-6)


def test_prm_loss_length_mismatch():
    from symtraj.supervision import LengthMismatch

    with pytest.raises(LengthMismatch):
        prm_loss(_labels_for("t#1", [1, 1]), PrmScore("t#1", (0.5,)))


# ---------------------------------------------------------------------------
# Scorers
# ---------------------------------------------------------------------------


def test_symbolic_scorer_probabilities():
    problem, traj = _mc_fixture()
    scorer = SymbolicScorer([problem])
    probs = scorer.step_probs(traj)
    assert len(probs) == len(traj.steps)
    assert all(p in (0.99, 0.90, 0.50, 0.01) for p in probs)
    # The fixture derivation is clean: nothing below the semantic tier.
    assert all(p >= 0.90 for p in probs)


def test_symbolic_scorer_unknown_problem():
    problem, traj = _mc_fixture()
    scorer = SymbolicScorer([problem])
    stray = parse_trajectory(MC_TRACE, problem_id="nobody-home")
    with pytest.raises(ScorerUnavailable):
        scorer.step_probs(stray)


def test_score_trajectory_wraps_probs():
    problem, traj = _mc_fixture()
    score = score_trajectory(traj, SymbolicScorer([problem]))
    assert score.trajectory_id == trajectory_id_of(traj)
    assert score.trajectory_prob == pytest.approx(math.prod(score.step_probs))


class _FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if isinstance(self._payload, Exception):
            raise self._payload
        return self._payload


class _FakeSession:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def post(self, url, json=None, timeout=None):
        self.requests.append({"url": url, "json": json, "timeout": timeout})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def test_remote_scorer_round_trip():
    problem, traj = _mc_fixture()
    probs = [0.9] * len(traj.steps)
    session = _FakeSession([_FakeResponse(payload={"probs": probs})])
    scorer = RemoteScorer("http://scorer.local/probs", session=session)
    assert scorer.step_probs(traj) == probs
    sent = session.requests[0]["json"]
    assert len(sent["steps"]) == len(traj.steps)
    assert sent["steps"][0].startswith("Thought:")


def test_remote_scorer_failures():
    import requests as requests_lib

    problem, traj = _mc_fixture()
    cases = [
        _FakeResponse(status_code=503),
        _FakeResponse(payload={"wrong": []}),
        _FakeResponse(payload={"probs": [0.5]}),
        _FakeResponse(payload=ValueError("not json")),
        requests_lib.ConnectionError("down"),
    ]
    for outcome in cases:
        scorer = RemoteScorer("http://scorer.local/probs", session=_FakeSession([outcome]))
        with pytest.raises(ScorerUnavailable):
            scorer.step_probs(traj)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def _judged_set(n_traj: int, rng: random.Random):
    """Synthetic trajectories with random answers and random judgments."""
    problem = _chain_problem("sel")
    trajs, labels, scores = [], [], []
    for i in range(n_traj):
        answer = rng.choice(("True", "False"))
        text = f"Thought: variant {i}.\nAction: Finish [{answer}]"
        traj = parse_trajectory(text, problem_id="sel")
        trajs.append(traj)
        tid = trajectory_id_of(traj)
        hard = [rng.choice((1, -1)) for _ in traj.steps]
        labels.extend(_labels_for(tid, hard))
        probs = tuple(rng.choice((0.99, 0.9, 0.3)) for _ in traj.steps)
        scores.append(PrmScore(tid, probs))
    return problem, trajs, labels, scores


def test_select_requires_a_judgment_source():
    problem, traj = _mc_fixture()
    with pytest.raises(ValueError):
        select_trajectories([traj], [problem])


def test_select_by_labels_exact_semantics():
    problem, trajs, labels, _ = _judged_set(40, random.Random(5))
    selected = select_trajectories(trajs, [problem], labels=labels)
    by_tid = {}
    for label in labels:
        by_tid.setdefault(label.trajectory_id, []).append(label)
    expected = [
        t
        for t in trajs
        if t.final_answer is problem.label
        and all(l.hard_label > 0 for l in by_tid[trajectory_id_of(t)])
    ]
    assert selected == expected


def test_select_by_scores_strict_threshold():
    problem, trajs, _, scores = _judged_set(40, random.Random(9))
    selected = select_trajectories(trajs, [problem], scores=scores, step_threshold=0.5)
    score_map = {s.trajectory_id: s for s in scores}
    expected = [
        t
        for t in trajs
        if t.final_answer is problem.label
        and all(p > 0.5 for p in score_map[trajectory_id_of(t)].step_probs)
    ]
    assert selected == expected
    # Probability exactly at the threshold is rejected.
    traj = trajs[0]
    tid = trajectory_id_of(traj)
    flat = [PrmScore(tid, tuple(0.5 for _ in traj.steps))]
    gold = [t for t in trajs if trajectory_id_of(t) == tid and t.final_answer is problem.label]
    assert select_trajectories(gold, [problem], scores=flat, step_threshold=0.5) == []


def test_select_requires_complete_judgments():
    problem, traj = _mc_fixture()
    assert traj.final_answer is problem.label
    tid = trajectory_id_of(traj)
    partial = _labels_for(tid, [1] * (len(traj.steps) - 1))
    assert select_trajectories([traj], [problem], labels=partial) == []
    full = _labels_for(tid, [1] * len(traj.steps))
    assert select_trajectories([traj], [problem], labels=full) == [traj]


def test_select_with_both_sources_needs_both_to_pass():
    problem, traj = _mc_fixture()
    tid = trajectory_id_of(traj)
    good_labels = _labels_for(tid, [1] * len(traj.steps))
    good_score = [PrmScore(tid, tuple(0.9 for _ in traj.steps))]
    bad_score = [PrmScore(tid, tuple(0.2 for _ in traj.steps))]
    assert select_trajectories([traj], [problem], scores=good_score, labels=good_labels) == [traj]
    assert select_trajectories([traj], [problem], scores=bad_score, labels=good_labels) == []


def test_select_is_monotone_in_judgments():
    # Flipping one negative judgment to positive never shrinks the selection.
    rng = random.Random(31)
    for _ in range(20):
        problem, trajs, labels, _ = _judged_set(12, rng)
        before = {t.raw_text for t in select_trajectories(trajs, [problem], labels=labels)}
        negatives = [i for i, l in enumerate(labels) if l.hard_label < 0]
        if not negatives:
            continue
        i = rng.choice(negatives)
        flipped = labels[i]
        labels[i] = StepLabel(
            flipped.trajectory_id,
            flipped.step_index,
            n_samples=flipped.n_samples,
            n_success=flipped.n_samples,
            hard_label=1,
        )
        after = {t.raw_text for t in select_trajectories(trajs, [problem], labels=labels)}
        assert before <= after


def test_select_drops_unknown_problems():
    problem, traj = _mc_fixture()
    stray = parse_trajectory(MC_TRACE, problem_id="elsewhere")
    tid = trajectory_id_of(stray)
    labels = _labels_for(tid, [1] * len(stray.steps))
    assert select_trajectories([stray], [problem], labels=labels) == []


# ---------------------------------------------------------------------------
# DPO pairs
# ---------------------------------------------------------------------------


def _brute_force_pairs(groups, threshold):
    pairs = []
    for problem_id, entries in groups.items():
        entries = list(entries)
        for a_tid, a_prob in entries:
            for b_tid, b_prob in entries:
                if a_tid == b_tid:
                    continue
                gap = a_prob - b_prob
                if gap > threshold or (gap == threshold and False):
                    pairs.append(PreferencePair(problem_id, a_tid, b_tid, gap))
    pairs.sort(key=lambda p: (p.problem_id, -p.gap, p.chosen, p.rejected))
    return pairs


def test_build_dpo_pairs_hand_case():
    groups = {"a": [("t1", 0.9), ("t2", 0.5), ("t3", 0.1)], "b": [("t4", 0.6)]}
    pairs = build_dpo_pairs(groups, threshold=0.25)
    assert pairs == [
        PreferencePair("a", "t1", "t3", pytest.approx(0.8)),
        PreferencePair("a", "t1", "t2", pytest.approx(0.4)),
        PreferencePair("a", "t2", "t3", pytest.approx(0.4)),
    ]


def test_build_dpo_pairs_threshold_is_strict():
    groups = {"a": [("hi", 0.75), ("lo", 0.5)]}
    assert build_dpo_pairs(groups, threshold=0.25) == []
    assert len(build_dpo_pairs(groups, threshold=0.2499)) == 1


def test_build_dpo_pairs_matches_brute_force():
    rng = random.Random(123)
    for _ in range(200):
        groups = {}
        for g in range(rng.randint(1, 4)):
            n = rng.randint(0, 6)
            groups[f"p{g}"] = [
                (f"p{g}#t{i}", round(rng.random(), 3)) for i in range(n)
            ]
        got = build_dpo_pairs(groups, threshold=0.25)
        want = _brute_force_pairs(groups, 0.25)
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert (g.problem_id, g.chosen, g.rejected) == (w.problem_id, w.chosen, w.rejected)
            assert g.gap == pytest.approx(w.gap, abs=1e-12)


def test_build_dpo_pairs_chosen_always_outranks_rejected():
    rng = random.Random(7)
    groups = {"p": [(f"t{i}", rng.random()) for i in range(10)]}
    probs = dict(groups["p"])
    for pair in build_dpo_pairs(groups, threshold=0.1):
        assert probs[pair.chosen] > probs[pair.rejected]
        assert pair.gap == pytest.approx(probs[pair.chosen] - probs[pair.rejected])


# ---------------------------------------------------------------------------
# Dataset exports
# ---------------------------------------------------------------------------


def test_export_prm_dataset_round_trip(tmp_path):
    problem, traj = _mc_fixture()
    tid = trajectory_id_of(traj)
    labels = _labels_for(tid, [1, 1, 1, -1, -1, -1])
    out = tmp_path / "prm.jsonl"
    count = export_prm_dataset(labels, [traj], [problem], out)
    assert count == 1
    records = read_jsonl(out)
    assert len(records) == 1
    rec = records[0]
    assert rec["steps"][0].startswith("Thought:")
    assert len(rec["steps"]) == len(traj.steps)
    assert rec["step_labels"] == [1, 1, 1, -1, -1, -1]
    assert "Everyone who cooks drinks tea." in rec["prompt"]


def test_export_prm_dataset_marks_missing_steps(tmp_path):
    problem, traj = _mc_fixture()
    tid = trajectory_id_of(traj)
    labels = [StepLabel(tid, 1, n_samples=2, n_success=2, hard_label=1)]
    out = tmp_path / "prm.jsonl"
    export_prm_dataset(labels, [traj], [problem], out)
    rec = read_jsonl(out)[0]
    assert rec["step_labels"] == [None, 1, None, None, None, None]


def test_export_sft_dataset(tmp_path):
    problem, traj = _mc_fixture()
    out = tmp_path / "sft.jsonl"
    count = export_sft_dataset([traj], [problem], out)
    assert count == 1
    rec = read_jsonl(out)[0]
    assert rec["response"] == traj.raw_text
    assert "Alice drinks tea." in rec["prompt"]


def test_export_sft_empty_selection(tmp_path):
    problem, _ = _mc_fixture()
    out = tmp_path / "sft.jsonl"
    assert export_sft_dataset([], [problem], out) == 0
    assert out.read_text(encoding="utf-8") == ""


def test_export_dpo_dataset(tmp_path):
    problem = _chain_problem("dpo")
    good = parse_trajectory(MC_TRACE, problem_id="dpo")
    bad = parse_trajectory("Thought: guesswork.\nAction: Finish [False]", problem_id="dpo")
    pair = PreferencePair("dpo", trajectory_id_of(good), trajectory_id_of(bad), 0.7)
    out = tmp_path / "dpo.jsonl"
    count = export_dpo_dataset([pair], [good, bad], [problem], out)
    assert count == 1
    rec = read_jsonl(out)[0]
    assert rec["chosen"] == good.raw_text
    assert rec["rejected"] == bad.raw_text
    assert "Alice cooks." in rec["prompt"]


def test_export_dpo_skips_incomplete_pairs(tmp_path):
    problem = _chain_problem("dpo")
    good = parse_trajectory(MC_TRACE, problem_id="dpo")
    pair = PreferencePair("dpo", trajectory_id_of(good), "dpo#missing00000", 0.5)
    out = tmp_path / "dpo.jsonl"
    assert export_dpo_dataset([pair], [good], [problem], out) == 0
    assert out.read_text(encoding="utf-8") == ""

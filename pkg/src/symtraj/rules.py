"""Inference rule catalog, single-step checking, and whole-trajectory verification.

Each rule is a syntactic schema over at most two premise formulas. verify_step
first tries to justify a claimed formula by one rule application over small
subsets of the context and only then falls back to the finite-model oracle, so
a verdict says how a step was justified, not merely whether it holds.
"""

from __future__ import annotations

import enum
import itertools
import logging
import re
from dataclasses import dataclass, field

from . import fol
from .fol import (
    And,
    ArityConflict,
    Constant,
    Exists,
    ForAll,
    Formula,
    Implies,
    Not,
    Or,
    Pred,
    Term,
    Variable,
    substitute,
)
from .semantics import BudgetExceeded, Label, entails

logger = logging.getLogger(__name__)


class Rule(enum.Enum):
    UNIVERSAL_INSTANTIATION = "UniversalInstantiation"
    EXISTENTIAL_INSTANTIATION = "ExistentialInstantiation"
    QUANTIFIER_NEGATION = "QuantifierNegation"
    DE_MORGAN = "DeMorgan"
    DOUBLE_NEGATION = "DoubleNegation"
    IMPLICATION_TO_DISJUNCTION = "ImplicationToDisjunction"
    DISJUNCTION_INTRODUCTION = "DisjunctionIntroduction"
    MODUS_PONENS = "ModusPonens"
    CONJUNCTION_ELIM = "ConjunctionElim"
    CONJUNCTION_INTRO = "ConjunctionIntro"
    CASE_ANALYSIS = "CaseAnalysis"


class SchemaMismatch(ValueError):
    """The inputs (or bindings) do not fit the rule's schema."""


@dataclass(frozen=True)
class RuleApplication:
    rule: Rule
    inputs: tuple[Formula, ...]
    output: Formula
    bindings: dict[str, Term] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))


class VerdictStatus(enum.Enum):
    VERIFIED_BY_RULE = "VerifiedByRule"
    VERIFIED_SEMANTICALLY = "VerifiedSemantically"
    INVALID = "Invalid"
    UNPARSEABLE = "Unparseable"


# Aggregation severity, best first.
_SEVERITY = [
    VerdictStatus.VERIFIED_BY_RULE,
    VerdictStatus.VERIFIED_SEMANTICALLY,
    VerdictStatus.UNPARSEABLE,
    VerdictStatus.INVALID,
]


@dataclass
class StepVerdict:
    status: VerdictStatus
    rule: RuleApplication | None = None
    note: str = ""


# ---------------------------------------------------------------------------
# apply_rule: schema-determined conclusions
# ---------------------------------------------------------------------------


def _one(inputs) -> Formula:
    if len(inputs) != 1:
        raise SchemaMismatch(f"expected 1 input, got {len(inputs)}")
    return inputs[0]


def _two(inputs) -> tuple[Formula, Formula]:
    if len(inputs) != 2:
        raise SchemaMismatch(f"expected 2 inputs, got {len(inputs)}")
    return inputs[0], inputs[1]


def _binding_term(bindings: dict | None, var: str) -> Term:
    if not bindings or var not in bindings:
        raise SchemaMismatch(f"instantiation needs a binding for {var!r}")
    term = bindings[var]
    if not isinstance(term, Constant):
        raise SchemaMismatch("instantiation target must be a Constant")
    return term


def _apply_universal(inputs, bindings):
    f = _one(inputs)
    if not isinstance(f, ForAll):
        raise SchemaMismatch("input must be a universally quantified formula")
    return substitute(f.body, f.var, _binding_term(bindings, f.var))


def _apply_existential(inputs, bindings):
    f = _one(inputs)
    if not isinstance(f, Exists):
        raise SchemaMismatch("input must be an existentially quantified formula")
    witness = _binding_term(bindings, f.var)
    if witness.name in fol.constants(f):
        raise SchemaMismatch(f"witness {witness.name!r} already occurs in the input")
    return substitute(f.body, f.var, witness)


def _quantifier_negation_rewrites(f: Formula) -> list[Formula]:
    out = []
    if isinstance(f, Not) and isinstance(f.body, ForAll):
        out.append(Exists(f.body.var, Not(f.body.body)))
    if isinstance(f, Not) and isinstance(f.body, Exists):
        out.append(ForAll(f.body.var, Not(f.body.body)))
    if isinstance(f, ForAll) and isinstance(f.body, Not):
        out.append(Not(Exists(f.var, f.body.body)))
    if isinstance(f, Exists) and isinstance(f.body, Not):
        out.append(Not(ForAll(f.var, f.body.body)))
    return out


def _apply_quantifier_negation(inputs, bindings):
    rewrites = _quantifier_negation_rewrites(_one(inputs))
    if not rewrites:
        raise SchemaMismatch("input is not a negated quantifier or quantified negation")
    return rewrites[0]


def _de_morgan_rewrites(f: Formula) -> list[Formula]:
    out = []
    if isinstance(f, Not) and isinstance(f.body, And):
        out.append(Or(Not(f.body.left), Not(f.body.right)))
    if isinstance(f, Not) and isinstance(f.body, Or):
        out.append(And(Not(f.body.left), Not(f.body.right)))
    if isinstance(f, And) and isinstance(f.left, Not) and isinstance(f.right, Not):
        out.append(Not(Or(f.left.body, f.right.body)))
    if isinstance(f, Or) and isinstance(f.left, Not) and isinstance(f.right, Not):
        out.append(Not(And(f.left.body, f.right.body)))
    return out


def _apply_de_morgan(inputs, bindings):
    rewrites = _de_morgan_rewrites(_one(inputs))
    if not rewrites:
        raise SchemaMismatch("input does not fit a De Morgan shape")
    return rewrites[0]


def _apply_double_negation(inputs, bindings):
    f = _one(inputs)
    if isinstance(f, Not) and isinstance(f.body, Not):
        return f.body.body
    raise SchemaMismatch("input is not doubly negated")


def _implication_disjunction_rewrites(f: Formula) -> list[Formula]:
    # The equivalence A -> B == !A | B, applied at the top or one level under
    # a negation (the form worked derivations actually use).
    out = []
    if isinstance(f, Implies):
        out.append(Or(Not(f.left), f.right))
    if isinstance(f, Or) and isinstance(f.left, Not):
        out.append(Implies(f.left.body, f.right))
    if isinstance(f, Not):
        inner = f.body
        if isinstance(inner, Implies):
            out.append(Not(Or(Not(inner.left), inner.right)))
        if isinstance(inner, Or) and isinstance(inner.left, Not):
            out.append(Not(Implies(inner.left.body, inner.right)))
    return out


def _apply_implication_to_disjunction(inputs, bindings):
    rewrites = _implication_disjunction_rewrites(_one(inputs))
    if not rewrites:
        raise SchemaMismatch("input has no implication/disjunction form to rewrite")
    return rewrites[0]


def _apply_disjunction_introduction(inputs, bindings):
    established, introduced = _two(inputs)
    return Or(established, introduced)


def _apply_modus_ponens(inputs, bindings):
    a, b = _two(inputs)
    if isinstance(a, Implies) and a.left == b:
        return a.right
    if isinstance(b, Implies) and b.left == a:
        return b.right
    raise SchemaMismatch("inputs are not an implication and its antecedent")


def _apply_conjunction_elim(inputs, bindings):
    f = _one(inputs)
    if not isinstance(f, And):
        raise SchemaMismatch("input is not a conjunction")
    return f.left


def _apply_conjunction_intro(inputs, bindings):
    a, b = _two(inputs)
    return And(a, b)


def _case_analysis_conclusion(disj: Formula, branches: Formula) -> Formula | None:
    if not (isinstance(disj, Or) and isinstance(branches, And)):
        return None
    left, right = branches.left, branches.right
    for first, second in ((left, right), (right, left)):
        if (
            isinstance(first, Implies)
            and isinstance(second, Implies)
            and first.left == disj.left
            and second.left == disj.right
            and first.right == second.right
        ):
            return first.right
    return None


def _apply_case_analysis(inputs, bindings):
    a, b = _two(inputs)
    for disj, branches in ((a, b), (b, a)):
        conclusion = _case_analysis_conclusion(disj, branches)
        if conclusion is not None:
            return conclusion
    raise SchemaMismatch("inputs are not a disjunction plus both case implications")


_APPLIERS = {
    Rule.UNIVERSAL_INSTANTIATION: _apply_universal,
    Rule.EXISTENTIAL_INSTANTIATION: _apply_existential,
    Rule.QUANTIFIER_NEGATION: _apply_quantifier_negation,
    Rule.DE_MORGAN: _apply_de_morgan,
    Rule.DOUBLE_NEGATION: _apply_double_negation,
    Rule.IMPLICATION_TO_DISJUNCTION: _apply_implication_to_disjunction,
    Rule.DISJUNCTION_INTRODUCTION: _apply_disjunction_introduction,
    Rule.MODUS_PONENS: _apply_modus_ponens,
    Rule.CONJUNCTION_ELIM: _apply_conjunction_elim,
    Rule.CONJUNCTION_INTRO: _apply_conjunction_intro,
    Rule.CASE_ANALYSIS: _apply_case_analysis,
}


def apply_rule(rule: Rule, inputs, bindings: dict[str, Term] | None = None) -> Formula:
    """Conclusion the rule's schema determines for these inputs.

    Raises SchemaMismatch when the inputs (or required bindings) do not fit.
    """
    return _APPLIERS[rule](tuple(inputs), bindings)


# ---------------------------------------------------------------------------
# Claimed-formula matching (the verify direction)
# ---------------------------------------------------------------------------


def _match_instantiation(rule: Rule, inputs, claimed) -> RuleApplication | None:
    f = inputs[0]
    wanted = ForAll if rule is Rule.UNIVERSAL_INSTANTIATION else Exists
    if len(inputs) != 1 or not isinstance(f, wanted):
        return None
    candidates = sorted(fol.constants(claimed))
    if rule is Rule.EXISTENTIAL_INSTANTIATION:
        used = fol.constants(f)
        candidates = [c for c in candidates if c not in used]
    if f.var not in fol.free_vars(f.body):
        if claimed == f.body:
            return RuleApplication(rule, inputs, claimed, {})
        return None
    for name in candidates:
        if substitute(f.body, f.var, Constant(name)) == claimed:
            return RuleApplication(rule, inputs, claimed, {f.var: Constant(name)})
    return None


def _match_rewrites(rule: Rule, rewrites_fn, inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 1:
        return None
    if claimed in rewrites_fn(inputs[0]):
        return RuleApplication(rule, inputs, claimed)
    return None


def _match_double_negation(inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 1:
        return None
    f = inputs[0]
    if isinstance(f, Not) and isinstance(f.body, Not) and f.body.body == claimed:
        return RuleApplication(Rule.DOUBLE_NEGATION, inputs, claimed)
    if claimed == Not(Not(f)):
        return RuleApplication(Rule.DOUBLE_NEGATION, inputs, claimed)
    return None


def _match_disjunction_introduction(inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 1 or not isinstance(claimed, Or):
        return None
    if inputs[0] in (claimed.left, claimed.right):
        return RuleApplication(Rule.DISJUNCTION_INTRODUCTION, inputs, claimed)
    return None


def _match_modus_ponens(inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 2:
        return None
    a, b = inputs
    if isinstance(a, Implies) and a.left == b and a.right == claimed:
        return RuleApplication(Rule.MODUS_PONENS, inputs, claimed)
    return None


def _match_conjunction_elim(inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 1 or not isinstance(inputs[0], And):
        return None
    if claimed in (inputs[0].left, inputs[0].right):
        return RuleApplication(Rule.CONJUNCTION_ELIM, inputs, claimed)
    return None


def _match_conjunction_intro(inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 2:
        return None
    if claimed == And(inputs[0], inputs[1]):
        return RuleApplication(Rule.CONJUNCTION_INTRO, inputs, claimed)
    return None


def _match_case_analysis(inputs, claimed) -> RuleApplication | None:
    if len(inputs) != 2:
        return None
    if _case_analysis_conclusion(inputs[0], inputs[1]) == claimed:
        return RuleApplication(Rule.CASE_ANALYSIS, inputs, claimed)
    return None


def _match(rule: Rule, inputs: tuple[Formula, ...], claimed: Formula) -> RuleApplication | None:
    if rule in (Rule.UNIVERSAL_INSTANTIATION, Rule.EXISTENTIAL_INSTANTIATION):
        return _match_instantiation(rule, inputs, claimed)
    if rule is Rule.QUANTIFIER_NEGATION:
        return _match_rewrites(rule, _quantifier_negation_rewrites, inputs, claimed)
    if rule is Rule.DE_MORGAN:
        return _match_rewrites(rule, _de_morgan_rewrites, inputs, claimed)
    if rule is Rule.DOUBLE_NEGATION:
        return _match_double_negation(inputs, claimed)
    if rule is Rule.IMPLICATION_TO_DISJUNCTION:
        return _match_rewrites(rule, _implication_disjunction_rewrites, inputs, claimed)
    if rule is Rule.DISJUNCTION_INTRODUCTION:
        return _match_disjunction_introduction(inputs, claimed)
    if rule is Rule.MODUS_PONENS:
        return _match_modus_ponens(inputs, claimed)
    if rule is Rule.CONJUNCTION_ELIM:
        return _match_conjunction_elim(inputs, claimed)
    if rule is Rule.CONJUNCTION_INTRO:
        return _match_conjunction_intro(inputs, claimed)
    if rule is Rule.CASE_ANALYSIS:
        return _match_case_analysis(inputs, claimed)
    raise AssertionError(rule)


def _subsets(context: list[Formula]):
    for f in context:
        yield (f,)
    for a, b in itertools.permutations(context, 2):
        yield (a, b)


def verify_step(
    context,
    claimed: Formula,
    hint: Rule | None = None,
    max_domain: int = 3,
) -> StepVerdict:
    """Justify one claimed formula against the context.

    Tries rule schemas over context subsets of size <= 2 (the hinted rule
    first when given, then every rule), then the finite-model oracle.
    """
    deduped: list[Formula] = []
    for f in context:
        if f not in deduped:
            deduped.append(f)
    if claimed in deduped:
        return StepVerdict(VerdictStatus.VERIFIED_SEMANTICALLY, note="restates an earlier formula")
    rules_to_try = [hint] if hint is not None else list(Rule)
    for rule in rules_to_try:
        for inputs in _subsets(deduped):
            app = _match(rule, inputs, claimed)
            if app is not None:
                return StepVerdict(VerdictStatus.VERIFIED_BY_RULE, rule=app, note=rule.value)
    if hint is not None:
        for rule in Rule:
            if rule is hint:
                continue
            for inputs in _subsets(deduped):
                app = _match(rule, inputs, claimed)
                if app is not None:
                    return StepVerdict(VerdictStatus.VERIFIED_BY_RULE, rule=app, note=rule.value)
    try:
        verdict = entails(deduped, claimed, max_domain)
    except (BudgetExceeded, ArityConflict, ValueError) as exc:
        return StepVerdict(VerdictStatus.INVALID, note=f"semantic check failed: {exc}")
    if verdict.result is Label.TRUE:
        return StepVerdict(
            VerdictStatus.VERIFIED_SEMANTICALLY,
            note=f"entailed under finite-model check (max_domain={max_domain})",
        )
    return StepVerdict(VerdictStatus.INVALID, note=f"not entailed by the context ({verdict.result})")


# ---------------------------------------------------------------------------
# Action-text heuristics
# ---------------------------------------------------------------------------

_FORMALIZATION_WORDS = ("defin", "translat", "formaliz", "formalis", "formulat")


def is_formalization_action(text: str) -> bool:
    low = text.lower()
    return any(w in low for w in _FORMALIZATION_WORDS)


def is_definition_action(text: str) -> bool:
    low = text.lower()
    return "defin" in low and "translat" not in low


def hint_from_text(text: str) -> Rule | None:
    """Best-effort mapping from an Action description to a catalog rule."""
    low = text.lower()
    if "existential instantiation" in low:
        return Rule.EXISTENTIAL_INSTANTIATION
    if "instantiat" in low:
        return Rule.UNIVERSAL_INSTANTIATION
    if "quantifier" in low:
        return Rule.QUANTIFIER_NEGATION
    if "morgan" in low:
        return Rule.DE_MORGAN
    if "double negation" in low:
        return Rule.DOUBLE_NEGATION
    if "modus ponens" in low:
        return Rule.MODUS_PONENS
    if "conjunction introduction" in low:
        return Rule.CONJUNCTION_INTRO
    if "conjunction elimination" in low or "simplif" in low:
        return Rule.CONJUNCTION_ELIM
    if "case" in low:
        return Rule.CASE_ANALYSIS
    if "disjunction" in low and "introduc" in low:
        return Rule.DISJUNCTION_INTRODUCTION
    if "implication" in low and ("rewrite" in low or "disjunction" in low):
        return Rule.IMPLICATION_TO_DISJUNCTION
    return None


# ---------------------------------------------------------------------------
# Whole-trajectory verification
# ---------------------------------------------------------------------------


def _syntax_check(formulas, sig: fol.Signature) -> tuple[VerdictStatus, str]:
    probe = fol.Signature(dict(sig.predicates), set(sig.constants))
    for f in formulas:
        try:
            probe.add_formula(f)
        except ArityConflict as exc:
            return VerdictStatus.INVALID, f"arity conflict: {exc}"
    sig.predicates.update(probe.predicates)
    sig.constants.update(probe.constants)
    return VerdictStatus.VERIFIED_SEMANTICALLY, "formalization (syntax check only)"


_PLACEHOLDER_RE = re.compile(r"[u-z][0-9]*")


def _is_signature_stub(f: Formula) -> bool:
    # Predicate-definition lines gloss a predicate over placeholder arguments
    # (bare x, y, x2 parsed as constants); they declare vocabulary, not facts.
    # Ground atoms over real entity names stay eligible for the context.
    return (
        isinstance(f, Pred)
        and len(f.args) > 0
        and all(
            isinstance(t, Constant) and _PLACEHOLDER_RE.fullmatch(t.name) for t in f.args
        )
    )


def verify_trajectory(problem, traj, max_domain: int = 3) -> list[StepVerdict]:
    """One StepVerdict per step.

    The working context starts from the problem's premise formulas.
    Observations after formalization-style actions are syntax-checked only;
    later Observation formulas are justified one by one (each earlier line of
    the same observation is visible to the next) and then join the context.
    Thought and Action steps get neutral verdicts.
    """
    from .trajectory import StepKind  # local import to avoid a module cycle

    context: list[Formula] = [s.formula for s in problem.premises if s.formula is not None]
    sig = fol.Signature()
    for f in context:
        sig.add_formula(f)
    verdicts: list[StepVerdict] = []
    last_action = None
    for step in traj.steps:
        if step.kind is StepKind.THOUGHT:
            verdicts.append(StepVerdict(VerdictStatus.VERIFIED_SEMANTICALLY, note="thought"))
            continue
        if step.kind is StepKind.ACTION:
            last_action = step
            verdicts.append(StepVerdict(VerdictStatus.VERIFIED_SEMANTICALLY, note="action"))
            continue
        if not step.formulas:
            verdicts.append(StepVerdict(VerdictStatus.UNPARSEABLE, note="no parseable formulas"))
            continue
        if last_action is not None and is_formalization_action(last_action.text):
            status, note = _syntax_check(step.formulas, sig)
            verdicts.append(StepVerdict(status, note=note))
            if not is_definition_action(last_action.text):
                for f in step.formulas:
                    if fol.is_closed(f) and not _is_signature_stub(f) and f not in context:
                        context.append(f)
            continue
        hint = hint_from_text(last_action.text) if last_action is not None else None
        worst = StepVerdict(VerdictStatus.VERIFIED_BY_RULE, note="")
        parts: list[str] = []
        first_app: RuleApplication | None = None
        for f in step.formulas:
            v = verify_step(context, f, hint=hint, max_domain=max_domain)
            if first_app is None and v.rule is not None:
                first_app = v.rule
            parts.append(v.note)
            if _SEVERITY.index(v.status) > _SEVERITY.index(worst.status):
                worst = StepVerdict(v.status, note=v.note)
            try:
                sig.add_formula(f)
            except ArityConflict:
                pass
            if f not in context:
                context.append(f)
        status = worst.status
        note = "; ".join(parts)
        rule_app = first_app if status is VerdictStatus.VERIFIED_BY_RULE else None
        verdicts.append(StepVerdict(status, rule=rule_app, note=note))
    return verdicts

"""Finite-model semantics: truth evaluation and a brute-force entailment oracle.

entails() decides three-way entailment by checking every interpretation over
domains of size 1..max_domain. The search enumerates constant denotations up
to renaming of domain elements (predicate tables are enumerated in full, so
isomorphic assignments cannot change satisfiability) and prunes any subtree of
truth assignments that already falsifies a constraint; both cuts only skip
interpretations that cannot matter, so the verdict matches exhaustive search.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .fol import (
    And,
    Constant,
    Exists,
    ForAll,
    Formula,
    Iff,
    Implies,
    Not,
    Or,
    Pred,
    Variable,
    Xor,
    collect_signature,
    free_vars,
)


class Label(enum.Enum):
    TRUE = "True"
    FALSE = "False"
    UNCERTAIN = "Uncertain"

    @classmethod
    def from_text(cls, text: str) -> "Label | None":
        word = text.strip().lower()
        if word in ("true", "yes"):
            return cls.TRUE
        if word in ("false", "no"):
            return cls.FALSE
        if word in ("uncertain", "unknown"):
            return cls.UNCERTAIN
        return None

    def __str__(self) -> str:
        return self.value


class BudgetExceeded(RuntimeError):
    """The interpretation search outgrew the configured budget."""


class MissingSymbol(KeyError):
    """A formula mentions a predicate or constant the interpretation lacks."""


# ---------------------------------------------------------------------------
# Direct evaluation against an explicit interpretation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interpretation:
    domain: tuple[int, ...]
    predicates: dict[str, frozenset[tuple[int, ...]]]
    constants: dict[str, int]


def evaluate(f: Formula, interp: Interpretation, env: dict[str, int] | None = None) -> bool:
    """Tarskian truth of f in interp. env maps bound variables to elements."""
    env = env or {}
    if isinstance(f, Pred):
        if f.name not in interp.predicates:
            raise MissingSymbol(f"predicate {f.name!r} not interpreted")
        elems = []
        for t in f.args:
            if isinstance(t, Variable):
                if t.name not in env:
                    raise MissingSymbol(f"unbound variable {t.name!r}")
                elems.append(env[t.name])
            else:
                if t.name not in interp.constants:
                    raise MissingSymbol(f"constant {t.name!r} not interpreted")
                elems.append(interp.constants[t.name])
        return tuple(elems) in interp.predicates[f.name]
    if isinstance(f, Not):
        return not evaluate(f.body, interp, env)
    if isinstance(f, And):
        return evaluate(f.left, interp, env) and evaluate(f.right, interp, env)
    if isinstance(f, Or):
        return evaluate(f.left, interp, env) or evaluate(f.right, interp, env)
    if isinstance(f, Xor):
        return evaluate(f.left, interp, env) != evaluate(f.right, interp, env)
    if isinstance(f, Implies):
        return (not evaluate(f.left, interp, env)) or evaluate(f.right, interp, env)
    if isinstance(f, Iff):
        return evaluate(f.left, interp, env) == evaluate(f.right, interp, env)
    if isinstance(f, ForAll):
        return all(evaluate(f.body, interp, {**env, f.var: e}) for e in interp.domain)
    if isinstance(f, Exists):
        return any(evaluate(f.body, interp, {**env, f.var: e}) for e in interp.domain)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Entailment by interpretation search
# ---------------------------------------------------------------------------


@dataclass
class EntailmentVerdict:
    result: Label
    unsatisfiable_premises: bool
    max_domain: int
    interpretations_explored: int


# Ground constraint nodes: ("atom", idx) / ("not", n) / ("and", (n, ...)) /
# ("or", (n, ...)) / ("xor", a, b) / ("iff", a, b)


def _ground(f: Formula, env: dict[str, int], consts: dict[str, int], atom_ix: dict) -> tuple:
    if isinstance(f, Pred):
        elems = tuple(env[t.name] if isinstance(t, Variable) else consts[t.name] for t in f.args)
        key = (f.name, elems)
        idx = atom_ix.get(key)
        if idx is None:
            idx = len(atom_ix)
            atom_ix[key] = idx
        return ("atom", idx)
    if isinstance(f, Not):
        return ("not", _ground(f.body, env, consts, atom_ix))
    if isinstance(f, And):
        return ("and", (_ground(f.left, env, consts, atom_ix), _ground(f.right, env, consts, atom_ix)))
    if isinstance(f, Or):
        return ("or", (_ground(f.left, env, consts, atom_ix), _ground(f.right, env, consts, atom_ix)))
    if isinstance(f, Implies):
        return ("or", (("not", _ground(f.left, env, consts, atom_ix)), _ground(f.right, env, consts, atom_ix)))
    if isinstance(f, Xor):
        return ("xor", _ground(f.left, env, consts, atom_ix), _ground(f.right, env, consts, atom_ix))
    if isinstance(f, Iff):
        return ("iff", _ground(f.left, env, consts, atom_ix), _ground(f.right, env, consts, atom_ix))
    if isinstance(f, (ForAll, Exists)):
        domain = range(env["__domain__"])
        parts = tuple(_ground(f.body, {**env, f.var: e}, consts, atom_ix) for e in domain)
        return ("and" if isinstance(f, ForAll) else "or", parts)
    raise TypeError(f"not a formula: {f!r}")


def _eval3(node: tuple, assign: list) -> bool | None:
    kind = node[0]
    if kind == "atom":
        return assign[node[1]]
    if kind == "not":
        v = _eval3(node[1], assign)
        return None if v is None else not v
    if kind == "and":
        saw_none = False
        for child in node[1]:
            v = _eval3(child, assign)
            if v is False:
                return False
            if v is None:
                saw_none = True
        return None if saw_none else True
    if kind == "or":
        saw_none = False
        for child in node[1]:
            v = _eval3(child, assign)
            if v is True:
                return True
            if v is None:
                saw_none = True
        return None if saw_none else False
    a = _eval3(node[1], assign)
    b = _eval3(node[2], assign)
    if a is None or b is None:
        return None
    return (a != b) if kind == "xor" else (a == b)


def _atoms_of(node: tuple, acc: list, seen: set) -> None:
    kind = node[0]
    if kind == "atom":
        if node[1] not in seen:
            seen.add(node[1])
            acc.append(node[1])
    elif kind == "not":
        _atoms_of(node[1], acc, seen)
    elif kind in ("and", "or"):
        for child in node[1]:
            _atoms_of(child, acc, seen)
    else:
        _atoms_of(node[1], acc, seen)
        _atoms_of(node[2], acc, seen)


class _Budget:
    __slots__ = ("used", "cap")

    def __init__(self, cap: int):
        self.used = 0
        self.cap = cap

    def tick(self, n: int = 1) -> None:
        self.used += n
        if self.used > self.cap:
            raise BudgetExceeded(f"interpretation budget of {self.cap} exceeded")


def _satisfiable(nodes: list[tuple], n_atoms: int, budget: _Budget) -> bool:
    """Is there a truth assignment to the ground atoms satisfying every node?"""
    assign: list[bool | None] = [None] * n_atoms
    atom_lists = []
    for node in nodes:
        acc: list[int] = []
        _atoms_of(node, acc, set())
        atom_lists.append(acc)
    formulas_of: dict[int, list[int]] = {}
    for fi, atoms in enumerate(atom_lists):
        for a in atoms:
            formulas_of.setdefault(a, []).append(fi)
    status: list[bool | None] = [_eval3(n, assign) for n in nodes]
    if False in status:
        return False
    unassigned = [len(atoms) for atoms in atom_lists]

    def set_atom(atom: int, value: bool) -> tuple[list[tuple[int, bool | None]], bool]:
        assign[atom] = value
        changed: list[tuple[int, bool | None]] = []
        ok = True
        for fi in formulas_of.get(atom, ()):
            unassigned[fi] -= 1
            old = status[fi]
            if old is True:
                continue  # three-valued truth is monotone under extension
            new = _eval3(nodes[fi], assign)
            if new is not old:
                status[fi] = new
                changed.append((fi, old))
            if new is False:
                ok = False
        return changed, ok

    def undo(atom: int, changed: list[tuple[int, bool | None]]) -> None:
        assign[atom] = None
        for fi in formulas_of.get(atom, ()):
            unassigned[fi] += 1
        for fi, old in changed:
            status[fi] = old

    def dfs() -> bool:
        budget.tick()
        # Branch inside the most constrained undecided formula; one with a
        # single free atom behaves like a unit clause and fails fast.
        target = None
        best = None
        for fi, s in enumerate(status):
            if s is not True and (best is None or unassigned[fi] < best):
                target = fi
                best = unassigned[fi]
                if best <= 1:
                    break
        if target is None:
            return True
        atom = next(a for a in atom_lists[target] if assign[a] is None)
        for value in (False, True):
            changed, ok = set_atom(atom, value)
            if ok and dfs():
                return True
            undo(atom, changed)
        return False

    return dfs()


def _constant_assignments(n: int, size: int):
    """Denotations for n constants over a size-element domain, one per
    renaming class: each constant maps at most one element past the largest
    element used so far, so the first always maps to 0."""
    if n == 0:
        yield ()
        return
    stack = [0]
    while stack:
        if len(stack) == n:
            yield tuple(stack)
        else:
            stack.append(0)
            continue
        while stack:
            top = stack.pop()
            bound = min(max(stack, default=-1) + 1, size - 1)
            if top < bound:
                stack.append(top + 1)
                break


def entails(
    premises,
    hypothesis: Formula,
    max_domain: int | None = None,
    budget: int = 10_000_000,
) -> EntailmentVerdict:
    """Three-way finite-model entailment.

    TRUE: hypothesis holds in every model of the premises (all checked domain
    sizes); FALSE: its negation does; UNCERTAIN otherwise, including when the
    premises have no model at all (flagged). Deterministic for fixed inputs.
    """
    premises = list(premises)
    for f in [*premises, hypothesis]:
        fv = free_vars(f)
        if fv:
            raise ValueError(f"formula is not closed, free variables {sorted(fv)}: {f}")
    sig = collect_signature([*premises, hypothesis])
    const_names = sorted(sig.constants)
    if max_domain is None:
        max_domain = max(3, len(const_names))

    tracker = _Budget(budget)
    sat_with_hyp = False
    sat_with_neg = False
    for size in range(1, max_domain + 1):
        for combo in _constant_assignments(len(const_names), size):
            if sat_with_hyp and sat_with_neg:
                break
            tracker.tick()
            consts = dict(zip(const_names, combo))
            atom_ix: dict = {}
            env = {"__domain__": size}
            grounded = [_ground(f, env, consts, atom_ix) for f in premises]
            hyp_node = _ground(hypothesis, env, consts, atom_ix)
            n_atoms = len(atom_ix)
            if not sat_with_neg:
                if _satisfiable(grounded + [("not", hyp_node)], n_atoms, tracker):
                    sat_with_neg = True
            if not sat_with_hyp:
                if _satisfiable(grounded + [hyp_node], n_atoms, tracker):
                    sat_with_hyp = True
        if sat_with_hyp and sat_with_neg:
            break

    # Every model of the premises satisfies the hypothesis or its negation,
    # so the premises are satisfiable iff one of the two probes succeeded.
    if not sat_with_hyp and not sat_with_neg:
        result = Label.UNCERTAIN
        unsat = True
    elif not sat_with_neg:
        result, unsat = Label.TRUE, False
    elif not sat_with_hyp:
        result, unsat = Label.FALSE, False
    else:
        result, unsat = Label.UNCERTAIN, False
    return EntailmentVerdict(
        result=result,
        unsatisfiable_premises=unsat,
        max_domain=max_domain,
        interpretations_explored=tracker.used,
    )

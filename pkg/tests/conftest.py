"""Shared generators for property tests. All randomness is seeded per test."""

import random
import sys

from symtraj.fol import (
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
)

PRED_POOL = (("P", 1), ("Q", 1), ("R", 2), ("Likes", 2), ("Rain", 0), ("S", 1))
CONST_POOL = ("a", "b", "c")
VAR_POOL = ("x", "y", "z", "u")
BINARY = (And, Or, Xor, Implies, Iff)


def random_term(rng: random.Random, bound: tuple[str, ...]):
    if bound and rng.random() < 0.5:
        return Variable(rng.choice(bound))
    return Constant(rng.choice(CONST_POOL))


def random_atom(rng: random.Random, bound: tuple[str, ...]) -> Formula:
    name, arity = rng.choice(PRED_POOL)
    return Pred(name, tuple(random_term(rng, bound) for _ in range(arity)))


def random_formula(rng: random.Random, depth: int, bound: tuple[str, ...] = ()) -> Formula:
    """Random formula of nesting depth at most `depth`."""
    if depth <= 0 or rng.random() < 0.2:
        return random_atom(rng, bound)
    kind = rng.randrange(8)
    if kind == 0:
        return Not(random_formula(rng, depth - 1, bound))
    if kind <= 5:
        op = rng.choice(BINARY)
        return op(random_formula(rng, depth - 1, bound), random_formula(rng, depth - 1, bound))
    quantifier = ForAll if kind == 6 else Exists
    var = rng.choice(VAR_POOL)
    body = random_formula(rng, depth - 1, bound + (var,))
    return quantifier(var, body)


def random_closed_formula(rng: random.Random, depth: int) -> Formula:
    """Random formula with no free variables."""
    return random_formula(rng, depth, bound=())


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay acceptance verdict lines after capture ends."""
    lines = sys.modules.get("test_acceptance") and sys.modules["test_acceptance"].REPORT_LINES
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

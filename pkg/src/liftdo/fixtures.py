"""Reference models and generators for tests and benchmarks."""

from __future__ import annotations

import itertools
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .model import PPCFG, PRV, Atom, Constraint, LogVar, Parfactor
from .modelio import parse_model

EMPLOYEES = """\
# Employees, their competence and salary, and the company's revenue.
logvar E {alice, bob, charlie}
prv Comp(E) range {low, medium, high}
prv Sal(E) range {low, medium, high}
prv Rev range {low, medium, high}
parfactor g1(Comp(E), Rev) uniform
parfactor g2(Rev, ->Sal(E)) uniform
parfactor g3(Comp(E), ->Sal(E)) uniform
"""


def employee_model(seed: Optional[int] = None, size: Optional[int] = None) -> PPCFG:
    m = parse_model(EMPLOYEES)
    if size is not None:
        m = resize_domain(m, "E", size)
    if seed is not None:
        m = fill_uniform(m, seed)
    return m


def fill_uniform(m: PPCFG, seed: int, low: float = 0.1, high: float = 1.0) -> PPCFG:
    """Replace all-ones tables by seeded random potentials.

    Parfactors are visited in declaration order; each all-ones table draws
    ``rng.uniform(low, high, size)`` from ``numpy.random.default_rng(seed)``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for g in m.parfactors:
        if all(v == 1.0 for v in g.potentials):
            g = replace(g, potentials=tuple(float(x) for x in rng.uniform(low, high, len(g.potentials))))
        out.append(g)
    return replace(m, parfactors=tuple(out))


def resize_domain(m: PPCFG, logvar: str, size: int) -> PPCFG:
    """Domain of ``logvar`` truncated or padded with fresh constants to ``size``."""
    if size < 1:
        raise ValueError("domain size must be positive")
    lvs = []
    for lv in m.logvars:
        if lv.name == logvar:
            dom = list(lv.domain[:size])
            k = 0
            while len(dom) < size:
                c = f"{logvar.lower()}{k}"
                if c not in dom and c not in lv.domain:
                    dom.append(c)
                k += 1
            lv = LogVar(lv.name, tuple(dom))
        lvs.append(lv)
    keep = {lv.name: set(lv.domain) for lv in lvs}
    pfs = []
    for g in m.parfactors:
        c = g.constraint
        if c.tuples is not None and logvar in c.logvars:
            tuples = tuple(
                t for t in c.tuples if all(x in keep[lv] for lv, x in zip(c.logvars, t))
            )
            g = replace(g, constraint=Constraint(c.logvars, tuples))
        pfs.append(g)
    iso = tuple(
        replace(n, members=tuple(t for t in n.members if all(x in keep[lv] for lv, x in zip(n.params, t))))
        for n in m.isolated
    )
    iso = tuple(n for n in iso if n.members)
    return PPCFG(tuple(lvs), m.prvs, tuple(pfs), iso)


def random_fixture(rng: np.random.Generator, max_atoms: int = 10, max_ambiguous: int = 6) -> PPCFG:
    """Random model whose directed skeleton has no unshielded collider.

    Each generated model is Markov to every valid extension of itself, so
    all extensions agree with the joint on which conditionals matter.
    """
    from .grounding import ground

    for _ in range(1000):
        m = _draw(rng)
        gm = ground(m)
        amb = sum(1 for f in gm.factors if f.child is None)
        if len(gm.atoms) <= max_atoms and amb <= max_ambiguous:
            return m
    raise RuntimeError("could not draw a small enough fixture")


def _draw(rng: np.random.Generator) -> PPCFG:
    n_prv = int(rng.integers(2, 5))
    dom_size = int(rng.integers(2, 4))
    lv = LogVar("E", tuple(f"c{k}" for k in range(dom_size)))
    has_lv = [bool(rng.random() < 0.5) for _ in range(n_prv)]
    if not any(has_lv[1:]) and rng.random() < 0.5:
        has_lv = [False] * n_prv
    prvs = [
        PRV(f"R{i}", ("E",) if has_lv[i] else (), tuple(f"v{k}" for k in range(int(rng.integers(2, 4)))))
        for i in range(n_prv)
    ]
    # a DAG over PRVs in index order; a parameterised PRV may not point into a
    # propositional one (that would make every instance a co-parent)
    edges = []
    for j in range(1, n_prv):
        for i in range(j):
            if has_lv[i] and not has_lv[j]:
                continue
            if rng.random() < 0.6:
                edges.append((i, j))
    # drop edges until no child has two non-adjacent parents
    adj = set(edges)
    changed = True
    while changed:
        changed = False
        for j in range(n_prv):
            pa = sorted(i for i, k in adj if k == j)
            for a, b in itertools.combinations(pa, 2):
                if (a, b) not in adj and (b, a) not in adj:
                    adj.discard((b, j))
                    changed = True
                    break
            if changed:
                break
    used = {i for e in adj for i in e}
    pfs = []
    for i, j in sorted(adj):
        directed = rng.random() >= 0.5
        pfs.append(_pf(f"g{i}{j}", [prvs[i], prvs[j]], rng, (False, directed)))
    for i in range(n_prv):
        if i not in used or rng.random() < 0.3:
            pfs.append(_pf(f"u{i}", [prvs[i]], rng, (False,)))
    return PPCFG((lv,), tuple(prvs), tuple(pfs))


def _pf(name: str, prvs: Sequence[PRV], rng, directed) -> Parfactor:
    args = tuple(Atom(p.name, p.params) for p in prvs)
    size = int(np.prod([len(p.range) for p in prvs]))
    pots = tuple(float(x) for x in rng.uniform(0.2, 2.0, size))
    lvs = tuple(dict.fromkeys(lv for a in args for lv in a.logvars))
    return Parfactor(name, args, pots, Constraint(lvs, None), tuple(directed))

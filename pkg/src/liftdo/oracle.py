"""Brute-force reference implementations used to check the fast paths.

Everything here works on the ground model and enumerates: all fully
directed extensions, the full joint as a dense array, literal sums over all
assignments, and explicit path enumeration for d-separation.
"""

from __future__ import annotations

import itertools
from typing import Optional, Sequence

import numpy as np

from .causal import DoAnswer, DoQuery, ParentChoice, QueryTargetOverlap, UnknownAtom, dedupe
from .grounding import GroundAtom, GroundModel
from .inference import Distribution
from .model import Node

MAX_AMBIGUOUS = 12
MAX_STATES = 10**7


class TooManyAmbiguousFactors(RuntimeError):
    pass


class StateSpaceTooLarge(RuntimeError):
    pass


# -- extensions -----------------------------------------------------------------


def ambiguous_factors(gm: GroundModel) -> list[int]:
    return [fi for fi, f in enumerate(gm.factors) if f.child is None]


def is_acyclic(gm: GroundModel) -> bool:
    succ = {a: set(gm.children(a)) for a in gm.atoms}
    state = dict.fromkeys(gm.atoms, 0)

    def visit(a) -> bool:
        state[a] = 1
        for b in succ[a]:
            if state[b] == 1 or (state[b] == 0 and not visit(b)):
                return False
        state[a] = 2
        return True

    return all(state[a] or visit(a) for a in gm.atoms)


def new_unshielded_colliders(original: GroundModel, ext: GroundModel) -> list[tuple]:
    """Patterns R1 -> v <- R3 through two factors, at least one newly oriented,
    whose outer ends share no factor."""
    out = []
    for v in ext.atoms:
        into = [fi for fi in ext.factors_of[v] if ext.factors[fi].child_atom == v]
        for fi, fj in itertools.combinations(into, 2):
            if original.factors[fi].child is not None and original.factors[fj].child is not None:
                continue
            for r1 in ext.factors[fi].parents:
                for r3 in ext.factors[fj].parents:
                    if r1 != r3 and r1 != v and r3 != v and not ext.adjacent(r1, r3):
                        out.append((r1, v, r3))
    return out


def enumerate_extensions(gm: GroundModel, max_ambiguous: int = MAX_AMBIGUOUS) -> list[GroundModel]:
    """Every CHILD assignment to the undirected factors that stays acyclic and
    adds no new unshielded collider; product order over factor positions."""
    amb = ambiguous_factors(gm)
    if len(amb) > max_ambiguous:
        raise TooManyAmbiguousFactors(f"{len(amb)} ambiguous factors (limit {max_ambiguous})")
    out = []
    for combo in itertools.product(*(range(len(gm.factors[fi].atoms)) for fi in amb)):
        ext = gm.with_children(dict(zip(amb, combo)))
        if is_acyclic(ext) and not new_unshielded_colliders(gm, ext):
            out.append(ext)
    return out


# -- exhaustive joint and literal sums -----------------------------------------------


def full_joint(gm: GroundModel, max_states: int = MAX_STATES) -> np.ndarray:
    """Normalised joint as an array with one axis per atom (in ``gm.atoms`` order)."""
    n = gm.state_space()
    if n > max_states:
        raise StateSpaceTooLarge(f"{n} joint states (limit {max_states})")
    shape = tuple(len(r) for r in gm.ranges)
    joint = np.ones(shape)
    idx = np.indices(shape, sparse=True)
    for f in gm.factors:
        ids = [gm.index[a] for a in f.atoms]
        sub = np.asarray(f.table, dtype=float)
        # fancy indexing broadcasts the factor over all atoms, repeated atoms included
        joint = joint * sub[tuple(idx[i] for i in ids)]
    return joint / joint.sum()


def exhaustive_marginal(
    gm: GroundModel, query: Sequence[GroundAtom], ev: Optional[dict] = None
) -> Distribution:
    joint = full_joint(gm)
    for a, v in (ev or {}).items():
        i = gm.atom_index(a)
        mask = np.zeros(joint.shape[i])
        mask[gm.ranges[i].index(v)] = 1.0
        shape = [1] * joint.ndim
        shape[i] = -1
        joint = joint * mask.reshape(shape)
    return _project(gm, joint, query)


def _project(gm: GroundModel, joint: np.ndarray, query: Sequence[GroundAtom]) -> Distribution:
    q = [gm.atom_index(a) for a in query]
    rest = tuple(i for i in range(joint.ndim) if i not in q)
    table = joint.sum(axis=rest)
    # sum keeps remaining axes in increasing id order; reorder to query order
    kept = sorted(q)
    table = np.transpose(table, [kept.index(i) for i in q])
    table = table / table.sum()
    rngs = [gm.ranges[i] for i in q]
    if len(q) == 1:
        probs = {v: float(table[k]) for k, v in enumerate(rngs[0])}
    else:
        probs = {
            tuple(r[i] for r, i in zip(rngs, idx)): float(table[idx])
            for idx in np.ndindex(*table.shape)
        }
    return Distribution(tuple(query), probs)


def literal_do(
    gm: GroundModel, targets: dict[GroundAtom, str], query: Sequence[GroundAtom], joint=None
) -> Distribution:
    """Truncated factorisation summed over every assignment, on a fully directed ``gm``."""
    if not gm.fully_directed:
        raise ValueError("model is not fully directed")
    joint = full_joint(gm) if joint is None else joint
    n = joint.ndim
    shape = joint.shape
    prod = np.ones(shape)
    for r in gm.atoms:
        if r in targets:
            continue
        i = gm.index[r]
        pa = [gm.index[p] for p in gm.parents(r)]
        axes = sorted(pa + [i])
        fam = joint.sum(axis=tuple(k for k in range(n) if k not in axes), keepdims=True)
        cond = fam / fam.sum(axis=i, keepdims=True)
        prod = prod * cond
    for t, v in targets.items():
        i = gm.atom_index(t)
        mask = np.zeros(shape[i])
        mask[gm.ranges[i].index(v)] = 1.0
        s = [1] * n
        s[i] = -1
        prod = prod * mask.reshape(s)
    return _project(gm, prod, query)


def _expand_targets(gm: GroundModel, dq: DoQuery) -> dict[GroundAtom, str]:
    out: dict[GroundAtom, str] = {}
    for t, v in dq.targets:
        if isinstance(t, GroundAtom):
            atoms = [t]
        elif isinstance(t, Node):
            if t.members is None:
                atoms = [a for a in gm.atoms if a.prv == t.prv]
            else:
                atoms = [GroundAtom(t.prv, m) for m in t.members]
        else:
            raise TypeError(f"bad target {t!r}")
        for a in atoms:
            if a not in gm.index:
                raise UnknownAtom(f"unknown ground atom {a}")
            if v not in gm.range_of(a):
                raise ValueError(f"{v!r} not in range of {a}")
            if a in out:
                raise QueryTargetOverlap("intervention targets overlap")
            out[a] = v
    for a in dq.query:
        if a not in gm.index:
            raise UnknownAtom(f"unknown ground atom {a}")
        if a in out:
            raise QueryTargetOverlap(f"query atom {a} is also intervened on")
    return out


def brute_force_do(
    gm: GroundModel,
    dq: DoQuery,
    max_states: int = MAX_STATES,
    max_ambiguous: int = MAX_AMBIGUOUS,
) -> DoAnswer:
    """Distinct post-intervention distributions over all valid extensions."""
    targets = _expand_targets(gm, dq)
    joint = full_joint(gm, max_states)
    pairs = []
    choices = []
    for ext in enumerate_extensions(gm, max_ambiguous):
        sel = []
        for t in targets:
            ne = gm.neighbours(t)
            pa = set(ext.parents(t))
            sel.append((t, tuple(a for a in ne if a in pa)))
        choice = ParentChoice(tuple(sel))
        choices.append(choice)
        pairs.append((choice, literal_do(ext, targets, dq.query, joint)))
    ans = DoAnswer(dq, choices=choices)
    ans.results = dedupe(pairs)
    return ans


def sets_match(a: Sequence[Distribution], b: Sequence[Distribution], tol: float = 1e-9) -> bool:
    """Is there a bijection between ``a`` and ``b`` pairing distributions within ``tol``?"""
    if len(a) != len(b):
        return False
    n = len(a)
    ok = [[a[i].distance(b[j]) <= tol for j in range(n)] for i in range(n)]
    match = [-1] * n

    def augment(i, seen) -> bool:
        for j in range(n):
            if ok[i][j] and j not in seen:
                seen.add(j)
                if match[j] < 0 or augment(match[j], seen):
                    match[j] = i
                    return True
        return False

    return all(augment(i, set()) for i in range(n))


# -- d-separation by path enumeration -----------------------------------------------


def _descendants_or_self(gm: GroundModel, a: GroundAtom) -> set[GroundAtom]:
    seen = {a}
    stack = [a]
    while stack:
        for c in gm.children(stack.pop()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def d_separated_paths(gm: GroundModel, x, y, z=()) -> bool:
    """Literal check: enumerate simple atom/factor paths and test each for a block."""
    x, y, z = set(x), set(y), set(z)
    if not x or not y or x & y or x & z or y & z:
        raise ValueError("X, Y non-empty and X, Y, Z pairwise disjoint")
    opens = {a: bool(_descendants_or_self(gm, a) & z) for a in gm.atoms}

    def blocked_at_atom(a, f_in, f_out) -> bool:
        c_in = gm.factors[f_in].child_atom == a
        c_out = gm.factors[f_out].child_atom == a
        if c_in and c_out:
            return not opens[a]
        return a in z

    def blocked_at_factor(fi, a, b) -> bool:
        c = gm.factors[fi].child_atom
        if c is None or a == c or b == c:
            return False
        return not opens[c]

    def walk(a, path_atoms, path_factors) -> bool:
        # returns True if an unblocked path from here reaches y
        for fi in gm.factors_of[a]:
            if fi in path_factors:
                continue
            if path_factors and blocked_at_atom(a, path_factors[-1], fi):
                continue
            for b in dict.fromkeys(gm.factors[fi].atoms):
                if b in path_atoms or blocked_at_factor(fi, a, b):
                    continue
                if b in y:
                    return True
                if walk(b, path_atoms | {b}, path_factors + [fi]):
                    return True
        return False

    return not any(walk(a, {a}, []) for a in x)


def ci_gap(gm: GroundModel, a: GroundAtom, b: GroundAtom, z: Sequence[GroundAtom], joint=None) -> float:
    """max |P(a,b|z) - P(a|z)P(b|z)| over every z with P(z) > 0."""
    joint = full_joint(gm) if joint is None else joint
    ia, ib = gm.atom_index(a), gm.atom_index(b)
    iz = [gm.atom_index(c) for c in z]
    keep = [ia, ib] + iz
    t = joint.sum(axis=tuple(i for i in range(joint.ndim) if i not in keep))
    kept = sorted(keep)
    t = np.transpose(t, [kept.index(i) for i in keep])
    worst = 0.0
    for zi in np.ndindex(*t.shape[2:]):
        s = t[(slice(None), slice(None)) + zi]
        pz = s.sum()
        if pz <= 0:
            continue
        pab = s / pz
        gap = np.abs(pab - np.outer(pab.sum(1), pab.sum(0))).max()
        worst = max(worst, float(gap))
    return worst

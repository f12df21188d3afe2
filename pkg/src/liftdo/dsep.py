"""d-separation in partially directed factor graphs.

Paths run over the bipartite variable/factor graph regardless of edge
direction.  A path is blocked at

* a variable entered and left through two factors that both point into it
  (a collider), unless the variable or one of its descendants is given;
* any other variable that is given;
* a factor passed from one of its parents to another of its parents, unless
  the factor's child or one of its descendants is given.

Both checkers below search over directed edge states (the ball-passing
formulation), never over explicit paths.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Collection, Iterable

from .grounding import GroundAtom, GroundModel
from .model import PPCFG, ModelError


class UnsupportedLiftedQuery(ValueError):
    """The lifted check needs TOP constraints and an unsplit model."""


def _check_sets(x, y, z) -> tuple[set, set, set]:
    x, y, z = set(x), set(y), set(z)
    if not x or not y:
        raise ValueError("X and Y must be non-empty")
    if x & y or x & z or y & z:
        raise ValueError("X, Y and Z must be pairwise disjoint")
    return x, y, z


def ancestors_or_self(gm: GroundModel, z: Iterable[GroundAtom]) -> set[GroundAtom]:
    """Z together with every atom that has a directed path into Z."""
    seen = set(z)
    todo = deque(seen)
    while todo:
        a = todo.popleft()
        for p in gm.parents(a):
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return seen


def d_separated(
    gm: GroundModel,
    x: Collection[GroundAtom],
    y: Collection[GroundAtom],
    z: Collection[GroundAtom] = (),
) -> bool:
    x, y, z = _check_sets(x, y, z)
    for a in x | y | z:
        gm.atom_index(a)
    an_z = ancestors_or_self(gm, z)
    factors = gm.factors

    # states: ("v", atom, fi, pos) at atom, reached from factor fi where it sits at pos
    #         ("f", fi, pos)       at factor fi, reached from its argument at pos
    start = [("v", a, None, None) for a in x]
    seen = set(start)
    todo = deque(start)
    while todo:
        st = todo.popleft()
        if st[0] == "v":
            _, a, fi, pos = st
            if a in y:
                return False
            into = fi is not None and factors[fi].child == pos
            for gj in gm.factors_of[a]:
                f = factors[gj]
                for k, b in enumerate(f.atoms):
                    if b != a or (gj, k) == (fi, pos):
                        continue
                    if fi is not None:
                        out_into = f.child == k
                        if into and out_into:
                            if a not in an_z:
                                continue
                        elif a in z:
                            continue
                    nxt = ("f", gj, k)
                    if nxt not in seen:
                        seen.add(nxt)
                        todo.append(nxt)
        else:
            _, fi, pos = st
            f = factors[fi]
            c = f.child
            for k, b in enumerate(f.atoms):
                if k == pos:
                    continue
                if c is not None and pos != c and k != c and f.atoms[c] not in an_z:
                    continue
                nxt = ("v", b, fi, k)
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
    return True


def d_separated_lifted(
    m: PPCFG,
    x: Collection[str],
    y: Collection[str],
    z: Collection[str] = (),
) -> bool:
    """d-separation of whole PRVs, decided on the parfactor graph.

    True iff gr(X) and gr(Y) are d-separated by gr(Z) in the ground model.
    Needs TOP constraints everywhere and no isolated groups.
    """
    x, y, z = _check_sets(x, y, z)
    if m.isolated or any(not g.constraint.is_top for g in m.parfactors):
        raise UnsupportedLiftedQuery("lifted d-separation needs TOP constraints on every parfactor")
    for name in x | y | z:
        m.prv(name)
    gs = m.parfactors

    # PRV-level ancestors of Z; exact under TOP since every instance of a
    # parent PRV sits in some grounding of each of its parfactors.
    an_z = set(z)
    changed = True
    while changed:
        changed = False
        for g in gs:
            c = g.child
            if c is None or g.args[c].prv not in an_z:
                continue
            for j, a in enumerate(g.args):
                if j != c and a.prv not in an_z:
                    an_z.add(a.prv)
                    changed = True

    def repeats(gi: int, pos: int) -> bool:
        # do two groundings of g share the instance at pos?
        g = gs[gi]
        extra = set(g.logvars()) - set(g.args[pos].logvars)
        return math.prod(len(m.logvar(lv).domain) for lv in extra) > 1

    incident: dict[str, list[tuple[int, int]]] = {p.name: [] for p in m.prvs}
    for gi, g in enumerate(gs):
        for pos, a in enumerate(g.args):
            incident[a.prv].append((gi, pos))

    start = [("v", p, None, None) for p in x]
    seen = set(start)
    todo = deque(start)
    while todo:
        st = todo.popleft()
        if st[0] == "v":
            _, p, fi, pos = st
            if p in y:
                return False
            into = fi is not None and gs[fi].child == pos
            for gj, k in incident[p]:
                if (gj, k) == (fi, pos) and not repeats(gj, k):
                    continue
                if fi is not None:
                    out_into = gs[gj].child == k
                    if into and out_into:
                        if p not in an_z:
                            continue
                    elif p in z:
                        continue
                nxt = ("f", gj, k)
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        else:
            _, fi, pos = st
            g = gs[fi]
            c = g.child
            for k, a in enumerate(g.args):
                if k == pos:
                    continue
                if c is not None and pos != c and k != c and g.args[c].prv not in an_z:
                    continue
                nxt = ("v", a.prv, fi, k)
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
    return True


def lifted_groundings(m: PPCFG, names: Iterable[str]) -> set[GroundAtom]:
    """gr(A) for every named PRV."""
    out = set()
    for name in names:
        m.prv(name)
        out.update(GroundAtom(name, t) for t in m.all_groundings(name))
    if not out and names:
        raise ModelError("no groundings")
    return out

"""Splitting parfactors so that chosen ground instances become their own nodes."""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Sequence, Union

from .grounding import GroundAtom
from .model import PPCFG, Constraint, ModelError, Node, Parfactor

Target = Union[GroundAtom, Node]


def as_group(m: PPCFG, t: Target) -> Node:
    """Normalise a target to a node-like group with explicit, sorted members."""
    if isinstance(t, GroundAtom):
        prv = m.prv(t.prv)
        if len(t.args) != len(prv.params):
            raise ModelError(f"{t} has wrong arity")
        members = (t.args,)
    else:
        prv = m.prv(t.prv)
        members = m.all_groundings(t.prv) if t.members is None else t.members
    known = set(m.all_groundings(prv.name))
    unknown = [a for a in members if a not in known]
    if unknown:
        shown = GroundAtom(prv.name, unknown[0])
        raise ModelError(f"unknown ground atom {shown}")
    return Node(prv.name, m.sort_args(prv.name, members), prv.params)


def split_on_atoms(m: PPCFG, targets: Iterable[Target]) -> PPCFG:
    """Isolate every target as a dedicated variable node.

    Parfactors with a grounding that mentions a target are split into
    constrained copies sharing the original table; the grounding of the
    result equals the grounding of ``m``.
    """
    isolated = list(m.isolated)
    for t in targets:
        grp = as_group(m, t)
        isolated = _refine(m, isolated, grp.prv, set(grp.members))
    return _apply_groups(m, isolated)


def isolate_each(m: PPCFG, prv: str, members: Iterable[tuple[str, ...]]) -> PPCFG:
    """Give each listed instance of ``prv`` its own node."""
    isolated = list(m.isolated)
    for a in m.sort_args(prv, set(members)):
        isolated = _refine(m, isolated, prv, {a})
    return _apply_groups(m, isolated)


def ground_as_model(m: PPCFG) -> PPCFG:
    """Fully split model: one parfactor per grounding, one node per ground atom."""
    isolated = []
    for p in m.prvs:
        if p.params:
            isolated.extend(Node(p.name, (a,), p.params) for a in m.all_groundings(p.name))
    names = {g.name for g in m.parfactors}
    out = []
    for g in m.parfactors:
        tuples = m.constraint_tuples(g)
        if len(tuples) == 1 and g.constraint.tuples is not None:
            out.append(g)
            continue
        for tup in tuples:
            base = g.name + ("_" + "_".join(tup) if tup else "")
            name = _fresh(base, names)
            names.add(name)
            out.append(replace(g, name=name, constraint=Constraint(g.constraint.logvars, (tup,))))
    return PPCFG(m.logvars, m.prvs, tuple(out), tuple(isolated))


def _refine(m: PPCFG, isolated: list[Node], prv: str, target: set) -> list[Node]:
    params = m.prv(prv).params
    every = set(m.all_groundings(prv))
    others = [n for n in isolated if n.prv != prv]
    mine = [n for n in isolated if n.prv == prv]
    covered = set().union(*(set(n.members) for n in mine)) if mine else set()
    if not mine and target == every:
        return list(isolated)  # the PRV is already exactly this node
    parts: list[set] = []
    for n in mine:
        s = set(n.members)
        parts.extend(p for p in (s & target, s - target) if p)
    rest_hit = target - covered
    if rest_hit:
        parts.append(rest_hit)
    if rest_hit and not (every - covered - rest_hit):
        # target swallows the whole rest node; it stays the rest node
        parts.remove(rest_hit)
    groups = [Node(prv, m.sort_args(prv, p), params) for p in parts]
    return others + groups


def _fresh(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name += "'"
    return name


def _apply_groups(m: PPCFG, isolated: Sequence[Node]) -> PPCFG:
    """Re-partition parfactor constraints so each argument lands in one node."""
    order = {p.name: i for i, p in enumerate(m.prvs)}
    isolated = tuple(
        sorted(isolated, key=lambda n: (order[n.prv], m.sort_args(n.prv, n.members)[0]))
    )
    probe = PPCFG(m.logvars, m.prvs, m.parfactors, isolated)
    names = {g.name for g in m.parfactors}
    out: list[Parfactor] = []
    for g in m.parfactors:
        groups: dict[tuple, list] = {}
        lvs = g.constraint.logvars
        for tup in m.constraint_tuples(g):
            b = dict(zip(lvs, tup))
            sig = tuple(
                probe._node_of_args(a.prv, [tuple(b[lv] for lv in a.logvars)]) for a in g.args
            )
            groups.setdefault(sig, []).append(tup)
        if len(groups) == 1:
            out.append(g)
            continue
        rest_sig = tuple(probe._rest(a.prv) for a in g.args)
        sigs = sorted(groups, key=lambda s: (s != rest_sig, _sig_key(s, isolated)))
        for k, sig in enumerate(sigs):
            if k == 0:
                name = g.name
            else:
                name = _fresh(g.name + "'", names)
                names.add(name)
            out.append(replace(g, name=name, constraint=Constraint(lvs, tuple(groups[sig]))))
    return PPCFG(m.logvars, m.prvs, tuple(out), isolated)


def _sig_key(sig: tuple, isolated: Sequence[Node]) -> tuple:
    pos = {n: i for i, n in enumerate(isolated)}
    return tuple(pos.get(n, -1) for n in sig)

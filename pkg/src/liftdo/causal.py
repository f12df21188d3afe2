"""Interventional queries on partially directed models.

The pipeline for ``P(Q | do(R1=r1, ..., Rk=rk))``:

1. split the parfactors so that every target is a variable node of its own;
2. enumerate, per target, the subsets of its undirected neighbours that
   form cliques (its candidate parent sets);
3. orient the target's undirected edges accordingly and complete the rest
   of the model to some fully directed model that adds neither a directed
   cycle nor a new unshielded collider (skipping choices where none exists);
4. evaluate the truncated factorisation on that model.

Whole-PRV targets stay single lifted nodes, so the number of candidate
parent sets does not grow with domain sizes.  Where the lifted graph does
not describe every grounding of a target uniformly, the affected nodes are
split down to single instances first.
"""

from __future__ import annotations

import itertools
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .grounding import GroundAtom, GroundModel, ground
from .inference import Distribution, Factor, eliminate, family_cpt
from .model import PPCFG, Constraint, ModelError, Node, Parfactor, neighbours
from .shattering import as_group, isolate_each, split_on_atoms

DEDUP_TOL = 1e-9

Target = Union[GroundAtom, Node]


class QueryTargetOverlap(ValueError):
    pass


class UnknownAtom(ModelError):
    pass


@dataclass(frozen=True)
class DoQuery:
    query: tuple[GroundAtom, ...]
    targets: tuple[tuple[Target, str], ...] = ()

    @classmethod
    def of(cls, query, targets=()) -> "DoQuery":
        q = (query,) if isinstance(query, GroundAtom) else tuple(query)
        return cls(q, tuple(targets))

    def __str__(self) -> str:
        q = ", ".join(str(a) for a in self.query)
        if not self.targets:
            return f"P({q})"
        t = ", ".join(f"{a}={v}" for a, v in self.targets)
        return f"P({q} | do({t}))"


@dataclass(frozen=True)
class ParentChoice:
    """Chosen parents (a subset of the undirected neighbours) per target."""

    selected: tuple[tuple[object, tuple[object, ...]], ...]

    def as_dict(self) -> dict[str, str]:
        return {str(t): "{" + ", ".join(str(p) for p in ps) + "}" for t, ps in self.selected}

    def __str__(self) -> str:
        return ", ".join(f"{t} <- {s}" for t, s in self.as_dict().items()) or "{}"


@dataclass
class DoAnswer:
    query: object
    results: list[tuple[list[ParentChoice], Distribution]] = field(default_factory=list)
    choices: list[ParentChoice] = field(default_factory=list)
    infeasible: list[ParentChoice] = field(default_factory=list)

    @property
    def unique(self) -> bool:
        return len(self.results) == 1

    @property
    def distributions(self) -> list[Distribution]:
        return [d for _, d in self.results]


def dedupe(
    pairs: Iterable[tuple[ParentChoice, Distribution]], tol: float = DEDUP_TOL
) -> list[tuple[list[ParentChoice], Distribution]]:
    """Group distributions within L-infinity ``tol``; keeps the first of each class."""
    out: list[tuple[list[ParentChoice], Distribution]] = []
    for choice, dist in pairs:
        for chs, rep in out:
            if rep.distance(dist) <= tol:
                chs.append(choice)
                break
        else:
            out.append(([choice], dist))
    return out


# -- query preparation ---------------------------------------------------------


@dataclass
class Prepared:
    model: PPCFG
    targets: list[tuple[Node, str]]  # nodes of the split model
    query: tuple[GroundAtom, ...]
    gm: GroundModel

    def target_atoms(self) -> dict[GroundAtom, str]:
        out = {}
        for node, v in self.targets:
            for args in self.model.groundings_of(node):
                out[GroundAtom(node.prv, args)] = v
        return out


def _resolve(m: PPCFG, dq: DoQuery) -> tuple[list[tuple[Node, str]], tuple[GroundAtom, ...]]:
    groups: list[tuple[Node, str]] = []
    for t, v in dq.targets:
        try:
            g = as_group(m, t)
        except ModelError as exc:
            raise UnknownAtom(str(exc)) from None
        if v not in m.prv(g.prv).range:
            raise ValueError(f"{v!r} not in range of {t}")
        groups.append((g, v))
    for a in dq.query:
        try:
            if a.args not in m.all_groundings(a.prv):
                raise UnknownAtom(f"unknown ground atom {a}")
        except ModelError as exc:
            raise UnknownAtom(str(exc)) from None
    if len(set(dq.query)) != len(dq.query):
        raise ValueError("repeated query atom")
    seen: set[GroundAtom] = set()
    for g, _ in groups:
        atoms = {GroundAtom(g.prv, a) for a in g.members}
        if atoms & seen:
            raise QueryTargetOverlap("intervention targets overlap")
        seen |= atoms
    hit = [a for a in dq.query if a in seen]
    if hit:
        raise QueryTargetOverlap(f"query atom {hit[0]} is also intervened on")
    return groups, tuple(dq.query)


def _node_of(m: PPCFG, prv: str, members) -> Node:
    n = m._node_of_args(prv, members)
    if n is None:
        raise ModelError(f"{prv} instances {members} span several nodes")
    return n


def _atom_nodes(m: PPCFG, gm: GroundModel) -> dict[GroundAtom, Node]:
    return {a: _node_of(m, a.prv, [a.args]) for a in gm.atoms}


def _source_index(m: PPCFG) -> dict[str, int]:
    return {g.name: i for i, g in enumerate(m.parfactors)}


def _undirected_neighbours(gm: GroundModel, src: dict[str, int], m: PPCFG, t: GroundAtom):
    out: list[GroundAtom] = []
    for fi in gm.factors_of[t]:
        f = gm.factors[fi]
        if m.parfactors[src[f.source]].is_undirected:
            out.extend(b for b in f.atoms if b != t and b not in out)
    return out


def _regular(m: PPCFG, gm: GroundModel, node: Node) -> bool:
    """Do all instances of a multi-instance target look alike in the graph?"""
    nodes = _atom_nodes(m, gm)
    src = _source_index(m)
    members = [GroundAtom(node.prv, a) for a in m.groundings_of(node)]
    sigs = []
    for t in members:
        sig = []
        for fi in gm.factors_of[t]:
            f = gm.factors[fi]
            g = m.parfactors[src[f.source]]
            pos = tuple(i for i, b in enumerate(f.atoms) if b == t)
            sig.append((src[f.source], pos, g.child, tuple(nodes[b] for b in f.atoms)))
        sigs.append(sorted(sig, key=repr))
        per_node: dict[Node, int] = defaultdict(int)
        for b in _undirected_neighbours(gm, src, m, t):
            if nodes[b] == node:
                return False  # instances of the target are adjacent to each other
            per_node[nodes[b]] += 1
        if any(c > 1 for c in per_node.values()):
            return False
    return all(s == sigs[0] for s in sigs)


def prepare(m: PPCFG, dq: DoQuery) -> Prepared:
    """Split ``m`` until every target of ``dq`` is a node whose instances look alike."""
    groups, query = _resolve(m, dq)
    while True:
        ms = split_on_atoms(m, [g for g, _ in groups])
        gm = ground(ms)
        expanded: list[tuple[Node, str]] = []
        for g, v in groups:
            node = _node_of(ms, g.prv, g.members)
            if len(g.members) > 1 and not _regular(ms, gm, node):
                params = m.prv(g.prv).params
                expanded.extend((Node(g.prv, (a,), params), v) for a in g.members)
            else:
                expanded.append((g, v))
        if len(expanded) == len(groups):
            break
        groups = expanded

    # every undirected neighbour node must contribute one instance per target instance
    changed = True
    while changed:
        changed = False
        nodes = _atom_nodes(ms, gm)
        src = _source_index(ms)
        for g, _ in groups:
            node = _node_of(ms, g.prv, g.members)
            for args in ms.groundings_of(node):
                per_node: dict[Node, list[GroundAtom]] = defaultdict(list)
                for b in _undirected_neighbours(gm, src, ms, GroundAtom(g.prv, args)):
                    per_node[nodes[b]].append(b)
                for nb, atoms in per_node.items():
                    if len(atoms) > 1:
                        ms = isolate_each(ms, nb.prv, ms.groundings_of(nb))
                        gm = ground(ms)
                        changed = True
                        break
                if changed:
                    break
            if changed:
                break

    targets = [(_node_of(ms, g.prv, g.members), v) for g, v in groups]
    return Prepared(ms, targets, query, gm)


def uniquely_identifiable(m: PPCFG, dq: DoQuery) -> bool:
    """Sufficient condition for a unique answer: no target has undirected neighbours."""
    p = prepare(m, dq)
    return all(not neighbours(t, p.model) for t, _ in p.targets)


# -- parent choices ------------------------------------------------------------


def _ground_neighbour_in(ms: PPCFG, gm: GroundModel, t: GroundAtom, node: Node) -> list[GroundAtom]:
    src = _source_index(ms)
    return [b for b in _undirected_neighbours(gm, src, ms, t) if _node_of(ms, b.prv, [b.args]) == node]


def _is_clique(ms: PPCFG, gm: GroundModel, target: Node, chosen: Sequence[Node]) -> bool:
    if len(chosen) < 2:
        return True
    for args in ms.groundings_of(target):
        t = GroundAtom(target.prv, args)
        atoms = []
        for n in chosen:
            atoms.extend(_ground_neighbour_in(ms, gm, t, n))
        for a, b in itertools.combinations(atoms, 2):
            if not gm.adjacent(a, b):
                return False
    return True


def enumerate_parent_choices(
    ms: PPCFG, targets: Sequence[Node], gm: Optional[GroundModel] = None
) -> list[ParentChoice]:
    """All clique subsets of undirected neighbours, per target, combined.

    Order: subset bitmask order per target, lexicographic across targets.
    """
    gm = gm if gm is not None else ground(ms)
    rank = {n: i for i, n in enumerate(ms.nodes)}
    per_target = []
    for t in targets:
        ne = sorted(neighbours(t, ms), key=rank.__getitem__)
        subsets = []
        for mask in range(1 << len(ne)):
            chosen = tuple(n for i, n in enumerate(ne) if mask >> i & 1)
            if _is_clique(ms, gm, t, chosen):
                subsets.append(chosen)
        per_target.append(subsets)
    return [
        ParentChoice(tuple(zip(targets, combo))) for combo in itertools.product(*per_target)
    ]


# -- orientation and consistent extension -----------------------------------------


class _Orientation:
    """Ground-level bookkeeping for incremental orientation with undo."""

    def __init__(self, gm: GroundModel, fixed: Sequence[bool]):
        self.gm = gm
        self.fixed = fixed  # ground factor directed in the input model
        self.child: list[Optional[int]] = [f.child for f in gm.factors]
        self.succ: dict[GroundAtom, dict[GroundAtom, int]] = defaultdict(lambda: defaultdict(int))
        self.into: dict[GroundAtom, list[int]] = defaultdict(list)
        for fi, f in enumerate(gm.factors):
            if f.child is not None:
                self._add(fi, f.child)

    def _add(self, fi: int, c: int) -> None:
        f = self.gm.factors[fi]
        v = f.atoms[c]
        for j, p in enumerate(f.atoms):
            if j != c and p != v:
                self.succ[p][v] += 1
        self.into[v].append(fi)
        self.child[fi] = c

    def _remove(self, fi: int) -> None:
        f = self.gm.factors[fi]
        c = self.child[fi]
        v = f.atoms[c]
        for j, p in enumerate(f.atoms):
            if j != c and p != v:
                self.succ[p][v] -= 1
                if not self.succ[p][v]:
                    del self.succ[p][v]
        self.into[v].remove(fi)
        self.child[fi] = None

    def _reaches(self, src: GroundAtom, dst: set[GroundAtom]) -> bool:
        stack, seen = [src], {src}
        while stack:
            a = stack.pop()
            if a in dst:
                return True
            for b in self.succ.get(a, ()):
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        return False

    def _parents(self, fi: int) -> list[GroundAtom]:
        f = self.gm.factors[fi]
        c = self.child[fi]
        return [a for j, a in enumerate(f.atoms) if j != c and a != f.atoms[c]]

    def try_assign(self, fis: Sequence[int], c: int) -> Optional[list[int]]:
        """Orient every factor in ``fis`` with child position ``c``; undo on failure."""
        done: list[int] = []
        for fi in fis:
            f = self.gm.factors[fi]
            v = f.atoms[c]
            pa = {a for j, a in enumerate(f.atoms) if j != c and a != v}
            if self._reaches(v, pa) or self._collides(fi, c):
                self.undo(done)
                return None
            self._add(fi, c)
            done.append(fi)
        return done

    def _collides(self, fi: int, c: int) -> bool:
        f = self.gm.factors[fi]
        v = f.atoms[c]
        mine = [a for j, a in enumerate(f.atoms) if j != c and a != v]
        for fj in self.into[v]:
            if fj == fi or (self.fixed[fi] and self.fixed[fj]):
                continue
            for r1 in mine:
                for r3 in self._parents(fj):
                    if r1 != r3 and not self.gm.adjacent(r1, r3):
                        return True
        return False

    def undo(self, done: Sequence[int]) -> None:
        for fi in reversed(done):
            self._remove(fi)


def _search(orient: _Orientation, units: list[tuple[list[int], list[int]]]) -> Optional[list[int]]:
    """Depth-first search over units (ground factor lists, allowed child positions)."""
    picks: list[int] = []
    undo_stack: list[list[int]] = []

    def rec(k: int) -> bool:
        if k == len(units):
            return True
        fis, allowed = units[k]
        for c in allowed:
            done = orient.try_assign(fis, c)
            if done is None:
                continue
            picks.append(c)
            undo_stack.append(done)
            if rec(k + 1):
                return True
            picks.pop()
            orient.undo(undo_stack.pop())
        return False

    return picks if rec(0) else None


def _allowed_positions(ms: PPCFG, choice: ParentChoice) -> Optional[dict[int, set[int]]]:
    allowed = {
        gi: set(range(len(g.args))) for gi, g in enumerate(ms.parfactors) if g.is_undirected
    }
    for target, chosen in choice.selected:
        chosen = set(chosen)
        for gi, pos in ms.incidence[target]:
            if gi not in allowed:
                continue
            row = ms.occurrence_nodes[gi]
            others = [n for j, n in enumerate(row) if n != target]
            mine = {j for j, n in enumerate(row) if n == target}
            if not others:
                continue  # a factor over the target alone orients trivially
            if any(n in chosen for n in others):
                if not all(n in chosen for n in others):
                    return None  # a k-ary factor cannot make only some arguments parents
                allowed[gi] &= mine
            else:
                allowed[gi] -= mine
            if not allowed[gi]:
                return None
    return allowed


def orient_and_extend(
    ms: PPCFG, choice: ParentChoice, gm: Optional[GroundModel] = None
) -> Optional[PPCFG]:
    """Fully directed model with the chosen target parents, or ``None``.

    Tries orientations uniform per parfactor first; only if none exists are
    the remaining ambiguous parfactors oriented per grounding.
    """
    allowed = _allowed_positions(ms, choice)
    if allowed is None:
        return None
    gm = gm if gm is not None else ground(ms)
    src = _source_index(ms)
    fixed = [not ms.parfactors[src[f.source]].is_undirected for f in gm.factors]
    by_pf: dict[int, list[int]] = defaultdict(list)
    for fi, f in enumerate(gm.factors):
        by_pf[src[f.source]].append(fi)

    order = sorted(allowed, key=lambda gi: (len(allowed[gi]) > 1, gi))
    units = [(by_pf[gi], sorted(allowed[gi])) for gi in order]
    orient = _Orientation(gm, fixed)
    picks = _search(orient, units)
    if picks is not None:
        pfs = list(ms.parfactors)
        for gi, c in zip(order, picks):
            pfs[gi] = pfs[gi].with_child(c)
        return replace(ms, parfactors=tuple(pfs))

    ground_units = [([fi], sorted(allowed[gi])) for gi in order for fi in by_pf[gi]]
    orient = _Orientation(gm, fixed)
    picks = _search(orient, ground_units)
    if picks is None:
        return None
    child_of = {fis[0]: c for (fis, _), c in zip(ground_units, picks)}
    return _materialise(ms, gm, src, child_of)


def _materialise(ms: PPCFG, gm: GroundModel, src: dict[str, int], child_of: dict[int, int]) -> PPCFG:
    """Split ambiguous parfactors per grounding where their orientations differ."""
    per_pf: dict[int, list[tuple[tuple[str, ...], int]]] = defaultdict(list)
    for fi, c in child_of.items():
        f = gm.factors[fi]
        per_pf[src[f.source]].append((tuple(v for _, v in f.binding), c))
    names = {g.name for g in ms.parfactors}
    out: list[Parfactor] = []
    for gi, g in enumerate(ms.parfactors):
        if gi not in per_pf:
            out.append(g)
            continue
        by_child: dict[int, list[tuple[str, ...]]] = defaultdict(list)
        for tup, c in per_pf[gi]:
            by_child[c].append(tup)
        if len(by_child) == 1:
            out.append(g.with_child(next(iter(by_child))))
            continue
        for k, (c, tuples) in enumerate(sorted(by_child.items())):
            name = g.name
            if k:
                name = g.name + "'"
                while name in names:
                    name += "'"
                names.add(name)
            part = replace(g, name=name, constraint=Constraint(g.constraint.logvars, tuple(tuples)))
            out.append(part.with_child(c))
    return replace(ms, parfactors=tuple(out))


# -- post-intervention distribution -------------------------------------------


def post_intervention_distribution(
    m_full: PPCFG, targets: dict[GroundAtom, str], query: Sequence[GroundAtom]
) -> Distribution:
    """Truncated factorisation over a fully directed model.

    Targets act as clamped roots: every non-target atom contributes
    P(r | pa(r)), derived from the joint, and everything but the query is
    summed out by variable elimination.
    """
    gm = ground(m_full)
    if not gm.fully_directed:
        raise ValueError("model is not fully directed")
    query = list(query)
    if set(query) & set(targets):
        raise QueryTargetOverlap("query atom is also intervened on")
    clamp = {}
    for a, v in targets.items():
        i = gm.atom_index(a)
        clamp[i] = gm.ranges[i].index(v)
    factors = []
    for r in gm.atoms:
        if r in targets:
            continue
        pa = list(gm.parents(r))
        cpt = family_cpt(gm, r, pa)
        ids = [gm.index[a] for a in pa] + [gm.index[r]]
        idx = tuple(clamp[i] if i in clamp else slice(None) for i in ids)
        factors.append(Factor([i for i in ids if i not in clamp], cpt[idx]))
    q = [gm.atom_index(a) for a in query]
    res, _ = eliminate(factors, q)
    table = res.table / res.table.sum()
    rngs = [gm.ranges[i] for i in q]
    if len(q) == 1:
        probs = {v: float(table[k]) for k, v in enumerate(rngs[0])}
    else:
        probs = {
            tuple(r[i] for r, i in zip(rngs, idx)): float(table[idx])
            for idx in np.ndindex(*table.shape)
        }
    return Distribution(tuple(query), probs)


# -- full pipeline --------------------------------------------------------------


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LIFTDO_THREADS", "1")))
    except ValueError:
        return 1


def lifted_do_query(m: PPCFG, dq: DoQuery) -> DoAnswer:
    """Every post-intervention distribution the model admits for ``dq``."""
    p = prepare(m, dq)
    nodes = [t for t, _ in p.targets]
    choices = enumerate_parent_choices(p.model, nodes, p.gm)
    targets = p.target_atoms()

    def work(choice: ParentChoice) -> Optional[Distribution]:
        full = orient_and_extend(p.model, choice, p.gm)
        if full is None:
            return None
        return post_intervention_distribution(full, targets, p.query)

    n = _threads()
    if n > 1 and len(choices) > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            dists = list(pool.map(work, choices))
    else:
        dists = [work(c) for c in choices]

    ans = DoAnswer(dq, choices=choices)
    ok = []
    for c, d in zip(choices, dists):
        if d is None:
            ans.infeasible.append(c)
        else:
            ok.append((c, d))
    ans.results = dedupe(ok)
    return ans

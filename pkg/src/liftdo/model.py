"""Domain types for partially directed parametric causal factor graphs.

A model is a bipartite graph between variable nodes (parameterised random
variables, PRVs) and factor nodes (parfactors).  Each parfactor argument is
either undirected or marked as the factor's CHILD; a CHILD marker asserts
that all other arguments of that parfactor are causes of it.

Variable nodes are not always whole PRVs: splitting can isolate a group of
ground instances of a PRV into a node of its own (``PPCFG.isolated``).  Every
parfactor argument occurrence then belongs to exactly one :class:`Node`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np


class ModelError(Exception):
    """Raised on lookups of names or nodes a model does not contain."""


@dataclass(frozen=True)
class LogVar:
    name: str
    domain: tuple[str, ...]

    def index(self, constant: str) -> int:
        return self.domain.index(constant)


@dataclass(frozen=True)
class Constraint:
    """Restriction of a logvar tuple to a set of constant tuples.

    ``tuples is None`` stands for TOP, the full cross product.
    """

    logvars: tuple[str, ...]
    tuples: Optional[tuple[tuple[str, ...], ...]] = None

    @property
    def is_top(self) -> bool:
        return self.tuples is None


TOP = None


@dataclass(frozen=True)
class PRV:
    name: str
    params: tuple[str, ...]
    range: tuple[str, ...]

    def __str__(self) -> str:
        return _fmt_atom(self.name, self.params)


@dataclass(frozen=True)
class Atom:
    """A PRV used inside a parfactor, e.g. ``Comp(E)``."""

    prv: str
    logvars: tuple[str, ...] = ()

    def __str__(self) -> str:
        return _fmt_atom(self.prv, self.logvars)


@dataclass(frozen=True)
class Parfactor:
    name: str
    args: tuple[Atom, ...]
    potentials: tuple[float, ...]
    constraint: Constraint
    directed: tuple[bool, ...]

    @property
    def child(self) -> Optional[int]:
        """Position of the CHILD argument, ``None`` if the factor is fully undirected."""
        marked = [i for i, d in enumerate(self.directed) if d]
        if len(marked) > 1:
            raise ModelError(f"parfactor {self.name} has several CHILD arguments")
        return marked[0] if marked else None

    @property
    def is_undirected(self) -> bool:
        return not any(self.directed)

    def logvars(self) -> tuple[str, ...]:
        """lv(args) in order of first appearance."""
        seen: dict[str, None] = {}
        for a in self.args:
            for lv in a.logvars:
                seen.setdefault(lv, None)
        return tuple(seen)

    def with_child(self, pos: Optional[int]) -> "Parfactor":
        return replace(self, directed=tuple(i == pos for i in range(len(self.args))))


@dataclass(frozen=True)
class Node:
    """A variable node: a PRV, or an isolated group of its ground instances.

    ``members is None`` denotes the PRV's remaining instances (all of them if
    nothing was isolated).
    """

    prv: str
    members: Optional[tuple[tuple[str, ...], ...]] = None
    params: tuple[str, ...] = field(default=(), compare=False)

    def __str__(self) -> str:
        if self.members is None:
            return _fmt_atom(self.prv, self.params)
        if len(self.members) == 1:
            return _fmt_atom(self.prv, self.members[0])
        inner = ", ".join(
            m[0] if len(m) == 1 else "(" + ", ".join(m) + ")" for m in self.members
        )
        return f"{_fmt_atom(self.prv, self.params)}|{{{inner}}}"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Issue:
    severity: Severity
    message: str
    location: str

    def __str__(self) -> str:
        return f"{self.severity.value}: {self.location}: {self.message}"


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(i.severity is Severity.ERROR for i in self.issues)

    def error(self, message: str, location: str) -> None:
        self.issues.append(Issue(Severity.ERROR, message, location))

    def warning(self, message: str, location: str) -> None:
        self.issues.append(Issue(Severity.WARNING, message, location))

    def __str__(self) -> str:
        if not self.issues:
            return "ok"
        return "\n".join(str(i) for i in self.issues)


def _fmt_atom(name: str, args: Sequence[str]) -> str:
    return f"{name}({', '.join(args)})" if args else name


@dataclass(frozen=True)
class PPCFG:
    logvars: tuple[LogVar, ...]
    prvs: tuple[PRV, ...]
    parfactors: tuple[Parfactor, ...]
    isolated: tuple[Node, ...] = ()

    # -- lookups -----------------------------------------------------------

    @cached_property
    def _logvar_map(self) -> dict[str, LogVar]:
        return {lv.name: lv for lv in self.logvars}

    @cached_property
    def _prv_map(self) -> dict[str, PRV]:
        return {p.name: p for p in self.prvs}

    def logvar(self, name: str) -> LogVar:
        try:
            return self._logvar_map[name]
        except KeyError:
            raise ModelError(f"unknown logvar {name!r}") from None

    def prv(self, name: str) -> PRV:
        try:
            return self._prv_map[name]
        except KeyError:
            raise ModelError(f"unknown PRV {name!r}") from None

    def parfactor(self, name: str) -> Parfactor:
        for g in self.parfactors:
            if g.name == name:
                return g
        raise ModelError(f"unknown parfactor {name!r}")

    def table(self, g: Parfactor) -> np.ndarray:
        shape = tuple(len(self.prv(a.prv).range) for a in g.args)
        return np.asarray(g.potentials, dtype=float).reshape(shape)

    def constraint_tuples(self, g: Parfactor) -> tuple[tuple[str, ...], ...]:
        """Constraint tuples of ``g``, materialising TOP in domain order."""
        c = g.constraint
        if c.tuples is not None:
            return c.tuples
        domains = [self.logvar(lv).domain for lv in c.logvars]
        return tuple(itertools.product(*domains))

    def bindings(self, g: Parfactor) -> Iterator[dict[str, str]]:
        for tup in self.constraint_tuples(g):
            yield dict(zip(g.constraint.logvars, tup))

    def arg_groundings(self, g: Parfactor, pos: int) -> list[tuple[str, ...]]:
        """Ground argument tuples of argument ``pos``, one per constraint tuple."""
        lvs = g.args[pos].logvars
        return [tuple(b[lv] for lv in lvs) for b in self.bindings(g)]

    # -- node structure ----------------------------------------------------

    def _rest(self, prv: str) -> Node:
        return Node(prv, None, self.prv(prv).params)

    def _node_of_args(self, prv: str, args: Iterable[tuple[str, ...]]) -> Optional[Node]:
        args = set(args)
        groups = [n for n in self.isolated if n.prv == prv]
        hit = [n for n in groups if args & set(n.members)]
        if not hit:
            return self._rest(prv)
        if len(hit) == 1 and args <= set(hit[0].members):
            return hit[0]
        return None

    @cached_property
    def occurrence_nodes(self) -> tuple[tuple[Optional[Node], ...], ...]:
        """Node of every (parfactor, argument) occurrence; ``None`` if mixed."""
        out = []
        for g in self.parfactors:
            row = []
            for i, a in enumerate(g.args):
                row.append(self._node_of_args(a.prv, self.arg_groundings(g, i)))
            out.append(tuple(row))
        return tuple(out)

    @cached_property
    def nodes(self) -> tuple[Node, ...]:
        """All variable nodes, ordered by PRV declaration then first occurrence."""
        found: dict[Node, None] = {}
        for row in self.occurrence_nodes:
            for n in row:
                if n is not None:
                    found.setdefault(n, None)
        order = {p.name: i for i, p in enumerate(self.prvs)}
        return tuple(sorted(found, key=lambda n: order[n.prv]))

    @cached_property
    def incidence(self) -> dict[Node, tuple[tuple[int, int], ...]]:
        """Node -> ((parfactor index, argument position), ...)."""
        inc: dict[Node, list[tuple[int, int]]] = {n: [] for n in self.nodes}
        for gi, row in enumerate(self.occurrence_nodes):
            for pos, n in enumerate(row):
                if n is not None:
                    inc[n].append((gi, pos))
        return {n: tuple(v) for n, v in inc.items()}

    def resolve(self, a: Union[Node, str]) -> Node:
        """Look up a node by :class:`Node` or by its printed label."""
        if isinstance(a, Node):
            if a in self.incidence:
                return a
            raise ModelError(f"unknown node {a}")
        for n in self.nodes:
            if str(n) == a or (n.members is None and n.prv == a):
                return n
        raise ModelError(f"unknown node {a!r}")

    def groundings_of(self, n: Node) -> tuple[tuple[str, ...], ...]:
        """Ground argument tuples represented by node ``n``, in domain order."""
        if n.members is not None:
            return n.members
        taken = {m for g in self.isolated if g.prv == n.prv for m in g.members}
        seen: set[tuple[str, ...]] = set()
        for gi, pos in self.incidence.get(n, ()):
            seen.update(self.arg_groundings(self.parfactors[gi], pos))
        return self.sort_args(n.prv, seen - taken)

    def all_groundings(self, prv: str) -> tuple[tuple[str, ...], ...]:
        seen: set[tuple[str, ...]] = set()
        for g in self.parfactors:
            for pos, a in enumerate(g.args):
                if a.prv == prv:
                    seen.update(self.arg_groundings(g, pos))
        return self.sort_args(prv, seen)

    def sort_args(self, prv: str, args: Iterable[tuple[str, ...]]) -> tuple[tuple[str, ...], ...]:
        params = self.prv(prv).params
        doms = [self.logvar(p).domain for p in params]

        def key(t: tuple[str, ...]) -> tuple[int, ...]:
            return tuple(d.index(c) if c in d else len(d) for d, c in zip(doms, t))

        return tuple(sorted(args, key=key))


# -- adjacency -----------------------------------------------------------------


def parents(a: Union[Node, str], model: PPCFG) -> set[Node]:
    a = model.resolve(a)
    out: set[Node] = set()
    for gi, pos in model.incidence[a]:
        g = model.parfactors[gi]
        if g.child == pos:
            out.update(n for j, n in enumerate(model.occurrence_nodes[gi]) if j != pos)
    out.discard(a)
    return out


def children(a: Union[Node, str], model: PPCFG) -> set[Node]:
    a = model.resolve(a)
    out: set[Node] = set()
    for gi, pos in model.incidence[a]:
        c = model.parfactors[gi].child
        if c is not None and c != pos:
            out.add(model.occurrence_nodes[gi][c])
    out.discard(a)
    return out


def neighbours(a: Union[Node, str], model: PPCFG) -> set[Node]:
    """Nodes sharing a fully undirected parfactor with ``a``."""
    a = model.resolve(a)
    out: set[Node] = set()
    for gi, pos in model.incidence[a]:
        if model.parfactors[gi].is_undirected:
            out.update(n for j, n in enumerate(model.occurrence_nodes[gi]) if j != pos)
    out.discard(a)
    return out


def directed_projection(model: PPCFG) -> dict[Node, set[Node]]:
    """Node -> children over CHILD-marked parfactors (lifted level)."""
    succ: dict[Node, set[Node]] = {n: set() for n in model.nodes}
    for gi, g in enumerate(model.parfactors):
        try:
            c = g.child
        except ModelError:
            continue
        if c is None:
            continue
        row = model.occurrence_nodes[gi]
        if row[c] is None:
            continue
        for j, n in enumerate(row):
            if j != c and n is not None:
                succ[n].add(row[c])
    return succ


def find_cycle(succ: dict) -> Optional[list]:
    """Return one directed cycle as a node list, or ``None``."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in succ}
    order = list(succ)
    for root in order:
        if color[root] != WHITE:
            continue
        stack = [(root, iter(sorted(succ[root], key=order.index)))]
        path = [root]
        color[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
                path.pop()
                continue
            if color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(sorted(succ[nxt], key=order.index))))
    return None


# -- validation ----------------------------------------------------------------


def validate(model: PPCFG) -> ValidationReport:
    """Check every structural invariant of ``model``; never raises."""
    rep = ValidationReport()
    try:
        _validate(model, rep)
    except Exception as exc:  # validate is total
        rep.error(f"internal validation failure: {exc}", "model")
    return rep


def _validate(model: PPCFG, rep: ValidationReport) -> None:
    lv_names: set[str] = set()
    for lv in model.logvars:
        loc = f"logvar {lv.name}"
        if lv.name in lv_names:
            rep.error("duplicate logvar", loc)
        lv_names.add(lv.name)
        if not lv.domain:
            rep.error("empty domain", loc)
        if len(set(lv.domain)) != len(lv.domain):
            rep.error("duplicate constants in domain", loc)

    prv_names: set[str] = set()
    for p in model.prvs:
        loc = f"prv {p}"
        if p.name in prv_names:
            rep.error("duplicate PRV name", loc)
        prv_names.add(p.name)
        if not p.range:
            rep.error("empty range", loc)
        if len(set(p.range)) != len(p.range):
            rep.error("duplicate range values", loc)
        for lv in p.params:
            if lv not in lv_names:
                rep.error(f"undeclared logvar {lv}", loc)

    pf_names: set[str] = set()
    structural_ok = True
    for g in model.parfactors:
        loc = f"parfactor {g.name}"
        if g.name in pf_names:
            rep.error("duplicate parfactor name", loc)
        pf_names.add(g.name)
        if not g.args:
            rep.error("parfactor without arguments", loc)
            structural_ok = False
            continue
        if len(g.directed) != len(g.args):
            rep.error("edge direction list does not match arguments", loc)
            structural_ok = False
        elif sum(g.directed) > 1:
            rep.error("more than one argument marked CHILD", loc)
            structural_ok = False
        size = 1
        args_ok = True
        for a in g.args:
            if a.prv not in prv_names:
                rep.error(f"undeclared PRV {a.prv}", loc)
                args_ok = False
                continue
            p = model.prv(a.prv)
            size *= len(p.range)
            if len(a.logvars) != len(p.params):
                rep.error(f"{a} has arity {len(a.logvars)}, {p} expects {len(p.params)}", loc)
                args_ok = False
                continue
            for lv, param in zip(a.logvars, p.params):
                if lv not in lv_names:
                    rep.error(f"undeclared logvar {lv}", loc)
                    args_ok = False
                elif param in lv_names and not set(model.logvar(lv).domain) <= set(
                    model.logvar(param).domain
                ):
                    rep.error(f"domain of {lv} is not within domain of {param}", loc)
                    args_ok = False
        if not args_ok:
            structural_ok = False
            continue
        if len(g.potentials) != size:
            rep.error(f"table has {len(g.potentials)} entries, expected {size}", loc)
            structural_ok = False
        bad = [x for x in g.potentials if not (math.isfinite(x) and x > 0)]
        if bad:
            rep.error(f"potentials must be finite and > 0 (found {bad[0]!r})", loc)
        lvs = g.logvars()
        c = g.constraint
        if len(set(c.logvars)) != len(c.logvars) or set(c.logvars) != set(lvs):
            rep.error(
                f"constraint logvars ({', '.join(c.logvars)}) differ from lv(args) ({', '.join(lvs)})",
                loc,
            )
            structural_ok = False
        elif c.tuples is not None:
            if not c.tuples:
                rep.error("empty constraint", loc)
            for t in c.tuples:
                if len(t) != len(c.logvars):
                    rep.error(f"constraint tuple {t} has wrong arity", loc)
                    structural_ok = False
                    continue
                for lv, const in zip(c.logvars, t):
                    if lv in lv_names and const not in model.logvar(lv).domain:
                        rep.error(f"constant {const} not in domain of {lv}", loc)
                        structural_ok = False
            if len(set(c.tuples)) != len(c.tuples):
                rep.error("duplicate constraint tuples", loc)

    if not structural_ok or not rep.ok:
        return

    used = {a.prv for g in model.parfactors for a in g.args}
    for p in model.prvs:
        if p.name not in used:
            rep.error("PRV does not appear in any parfactor", f"prv {p}")

    for n in model.isolated:
        loc = f"isolated {n}"
        if n.prv not in prv_names:
            rep.error(f"undeclared PRV {n.prv}", loc)
            return
        known = set(model.all_groundings(n.prv))
        if not n.members or not set(n.members) <= known:
            rep.error("isolated group is empty or mentions unknown instances", loc)
    seen: dict[str, set] = {}
    for n in model.isolated:
        s = seen.setdefault(n.prv, set())
        if s & set(n.members or ()):
            rep.error("isolated groups overlap", f"isolated {n}")
        s.update(n.members or ())

    for g, row in zip(model.parfactors, model.occurrence_nodes):
        for a, n in zip(g.args, row):
            if n is None:
                rep.error(f"argument {a} spans several variable nodes", f"parfactor {g.name}")

    cycle = find_cycle(directed_projection(model))
    if cycle:
        rep.error("directed cycle " + " -> ".join(str(n) for n in cycle), "model")

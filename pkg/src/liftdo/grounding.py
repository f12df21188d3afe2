"""Grounding of a PPCFG and evaluation of its full joint distribution."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional

import numpy as np

from .model import PPCFG, ModelError, Parfactor


@dataclass(frozen=True, order=True)
class GroundAtom:
    prv: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.prv}({', '.join(self.args)})" if self.args else self.prv


@dataclass(frozen=True)
class GroundFactor:
    source: str
    binding: tuple[tuple[str, str], ...]
    atoms: tuple[GroundAtom, ...]
    child: Optional[int]
    table: np.ndarray  # shared with every grounding of the same parfactor

    def __hash__(self) -> int:
        return hash((self.source, self.binding))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroundFactor):
            return NotImplemented
        return (self.source, self.binding) == (other.source, other.binding)

    def __str__(self) -> str:
        parts = [("->" if i == self.child else "") + str(a) for i, a in enumerate(self.atoms)]
        return f"{self.source}({', '.join(parts)})"

    @property
    def parents(self) -> tuple[GroundAtom, ...]:
        if self.child is None:
            return ()
        return tuple(a for i, a in enumerate(self.atoms) if i != self.child)

    @property
    def child_atom(self) -> Optional[GroundAtom]:
        return None if self.child is None else self.atoms[self.child]


Assignment = Mapping[GroundAtom, str]


@dataclass(frozen=True, eq=False)
class GroundModel:
    atoms: tuple[GroundAtom, ...]
    factors: tuple[GroundFactor, ...]
    ranges: tuple[tuple[str, ...], ...]

    @cached_property
    def index(self) -> dict[GroundAtom, int]:
        return {a: i for i, a in enumerate(self.atoms)}

    def atom_index(self, atom: GroundAtom) -> int:
        try:
            return self.index[atom]
        except KeyError:
            raise ModelError(f"unknown ground atom {atom}") from None

    def range_of(self, atom: GroundAtom) -> tuple[str, ...]:
        return self.ranges[self.atom_index(atom)]

    @cached_property
    def factors_of(self) -> dict[GroundAtom, tuple[int, ...]]:
        inc: dict[GroundAtom, list[int]] = {a: [] for a in self.atoms}
        for fi, f in enumerate(self.factors):
            for a in dict.fromkeys(f.atoms):
                inc[a].append(fi)
        return {a: tuple(v) for a, v in inc.items()}

    @property
    def fully_directed(self) -> bool:
        return all(f.child is not None for f in self.factors)

    def parents(self, atom: GroundAtom) -> tuple[GroundAtom, ...]:
        out: dict[GroundAtom, None] = {}
        for fi in self.factors_of[atom]:
            f = self.factors[fi]
            if f.child_atom == atom:
                for p in f.parents:
                    out.setdefault(p, None)
        return tuple(sorted(out, key=self.atom_index))

    def children(self, atom: GroundAtom) -> tuple[GroundAtom, ...]:
        out: dict[GroundAtom, None] = {}
        for fi in self.factors_of[atom]:
            f = self.factors[fi]
            if f.child is not None and f.child_atom != atom:
                out.setdefault(f.child_atom, None)
        return tuple(sorted(out, key=self.atom_index))

    def neighbours(self, atom: GroundAtom) -> tuple[GroundAtom, ...]:
        out: dict[GroundAtom, None] = {}
        for fi in self.factors_of[atom]:
            f = self.factors[fi]
            if f.child is None:
                for b in f.atoms:
                    if b != atom:
                        out.setdefault(b, None)
        return tuple(sorted(out, key=self.atom_index))

    def adjacent(self, a: GroundAtom, b: GroundAtom) -> bool:
        """True iff some factor has both ``a`` and ``b`` as arguments."""
        fb = set(self.factors_of[b])
        return any(fi in fb for fi in self.factors_of[a])

    def with_children(self, children: Mapping[int, int]) -> "GroundModel":
        """Copy with the CHILD of factor ``i`` set to position ``children[i]``."""
        fs = list(self.factors)
        for fi, c in children.items():
            f = fs[fi]
            fs[fi] = GroundFactor(f.source, f.binding, f.atoms, c, f.table)
        return GroundModel(self.atoms, tuple(fs), self.ranges)

    def state_space(self) -> int:
        return math.prod(len(r) for r in self.ranges)

    @cached_property
    def _log_z(self) -> float:
        from .inference import log_partition

        return log_partition(self)


def ground(model: PPCFG) -> GroundModel:
    """One ground factor per (parfactor, constraint tuple); atoms in declaration/domain order."""
    factors: list[GroundFactor] = []
    seen: dict[GroundAtom, None] = {}
    for g in model.parfactors:
        table = model.table(g)
        table.setflags(write=False)
        child = g.child
        lvs = g.constraint.logvars
        for tup in model.constraint_tuples(g):
            b = dict(zip(lvs, tup))
            atoms = tuple(GroundAtom(a.prv, tuple(b[lv] for lv in a.logvars)) for a in g.args)
            for a in atoms:
                seen.setdefault(a, None)
            factors.append(GroundFactor(g.name, tuple(zip(lvs, tup)), atoms, child, table))

    order = {p.name: i for i, p in enumerate(model.prvs)}

    def key(a: GroundAtom):
        params = model.prv(a.prv).params
        return (order[a.prv],) + tuple(
            model.logvar(p).domain.index(c) for p, c in zip(params, a.args)
        )

    atoms = tuple(sorted(seen, key=key))
    ranges = tuple(model.prv(a.prv).range for a in atoms)
    return GroundModel(atoms, tuple(factors), ranges)


def ground_parfactor(model: PPCFG, g: Parfactor) -> list[GroundFactor]:
    """gr(g) as ground factors, in constraint order."""
    sub = PPCFG(model.logvars, model.prvs, (g,))
    return list(ground(sub).factors)


def normalization(gm: GroundModel) -> float:
    """Partition function Z, computed by variable elimination."""
    z = math.exp(gm._log_z)
    if not math.isfinite(z):
        raise OverflowError(f"normalisation constant exceeds double range (log Z = {gm._log_z})")
    return z


def log_normalization(gm: GroundModel) -> float:
    return gm._log_z


def unnormalized(gm: GroundModel, a: Assignment) -> float:
    idx = {atom: gm.range_of(atom).index(a[atom]) for atom in gm.atoms}
    p = 1.0
    for f in gm.factors:
        p *= float(f.table[tuple(idx[x] for x in f.atoms)])
    return p


def joint_probability(gm: GroundModel, a: Assignment) -> float:
    """P_M(a) = (1/Z) * product of all ground factors at ``a``."""
    missing = [x for x in gm.atoms if x not in a]
    if missing or len(a) != len(gm.atoms):
        raise ValueError("assignment must cover exactly the model's atoms")
    for atom, v in a.items():
        if v not in gm.range_of(atom):
            raise ValueError(f"{v!r} not in range of {atom}")
    log_p = sum(
        math.log(float(f.table[tuple(gm.range_of(x).index(a[x]) for x in f.atoms)]))
        for f in gm.factors
    )
    return math.exp(log_p - gm._log_z)


def assignments(gm: GroundModel):
    """Every total assignment, in row-major order over the atoms."""
    for values in itertools.product(*gm.ranges):
        yield dict(zip(gm.atoms, values))

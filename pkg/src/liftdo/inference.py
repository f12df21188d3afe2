"""Exact inference on ground models by variable elimination."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .grounding import Assignment, GroundAtom, GroundModel


class ZeroEvidenceProbability(ValueError):
    pass


@dataclass(frozen=True)
class Distribution:
    """Normalised distribution over one or more ground atoms.

    Keys of ``probs`` are range values for a single variable and value
    tuples for several.
    """

    variables: tuple[GroundAtom, ...]
    probs: dict

    @property
    def variable(self) -> GroundAtom:
        return self.variables[0]

    def values(self) -> np.ndarray:
        return np.array(list(self.probs.values()), dtype=float)

    def distance(self, other: "Distribution") -> float:
        """L-infinity distance."""
        if self.probs.keys() != other.probs.keys():
            raise ValueError("distributions over different supports")
        return max(abs(self.probs[k] - other.probs[k]) for k in self.probs)

    def __str__(self) -> str:
        head = ", ".join(str(v) for v in self.variables)
        body = ", ".join(f"{k}: {p:.6g}" for k, p in self.probs.items())
        return f"P({head}) = {{{body}}}"


Evidence = Mapping[GroundAtom, str]


class Factor:
    """Dense table over integer variable ids."""

    __slots__ = ("vars", "table")

    def __init__(self, vars: Sequence[int], table: np.ndarray):
        self.vars = tuple(vars)
        self.table = table

    def __repr__(self) -> str:
        return f"Factor({self.vars}, shape={self.table.shape})"


def _multiply(factors: Sequence[Factor], keep: Sequence[int]) -> np.ndarray:
    """Product of ``factors`` summed down to the variables in ``keep``."""
    ids: dict[int, int] = {}
    for f in factors:
        for v in f.vars:
            ids.setdefault(v, len(ids))
    for v in keep:
        ids.setdefault(v, len(ids))
    operands: list = []
    for f in factors:
        operands.append(f.table)
        operands.append([ids[v] for v in f.vars])
    operands.append([ids[v] for v in keep])
    return np.einsum(*operands, optimize=len(factors) > 2)


def min_degree_order(factors: Sequence[Factor], eliminate: Iterable[int]) -> list[int]:
    """Greedy min-degree order; ties broken by smallest variable id."""
    adj: dict[int, set[int]] = {}
    for f in factors:
        for v in f.vars:
            adj.setdefault(v, set()).update(w for w in f.vars if w != v)
    todo = set(eliminate)
    order = []
    while todo:
        v = min(todo, key=lambda x: (len(adj.get(x, ())), x))
        nb = adj.pop(v, set())
        for w in nb:
            adj[w].discard(v)
            adj[w].update(nb - {w})
        todo.remove(v)
        order.append(v)
    return order


def eliminate(
    factors: Sequence[Factor],
    keep: Sequence[int],
    order: Optional[Sequence[int]] = None,
    rescale: bool = True,
) -> tuple[Factor, float]:
    """Sum out every variable not in ``keep``.

    Returns the resulting factor over ``keep`` (in that order) and the log of
    the scale divided out along the way, so that the exact result is
    ``factor.table * exp(log_scale)``.
    """
    keep = list(keep)
    pool = list(factors)
    all_vars = {v for f in pool for v in f.vars}
    elim = [v for v in all_vars if v not in keep]
    if order is None:
        order = min_degree_order(pool, elim)
    else:
        order = [v for v in order if v in set(elim)]
        if set(order) != set(elim):
            raise ValueError("elimination order must cover every non-kept variable")
    log_scale = 0.0
    for v in order:
        bucket = [f for f in pool if v in f.vars]
        pool = [f for f in pool if v not in f.vars]
        scope = sorted({w for f in bucket for w in f.vars if w != v})
        table = _multiply(bucket, scope)
        if rescale:
            m = float(table.max()) if table.size else 1.0
            if m > 0 and math.isfinite(m):
                table = table / m
                log_scale += math.log(m)
        pool.append(Factor(scope, table))
    table = _multiply(pool, keep) if pool else np.ones([1] * len(keep))
    return Factor(keep, np.asarray(table, dtype=float)), log_scale


def model_factors(gm: GroundModel, evidence: Optional[Mapping[int, int]] = None) -> list[Factor]:
    """Ground factors as :class:`Factor` objects, with evidence clamped."""
    evidence = evidence or {}
    out = []
    for f in gm.factors:
        ids = [gm.index[a] for a in f.atoms]
        table = np.asarray(f.table, dtype=float)
        if len(set(ids)) != len(ids):
            # repeated atom in one factor: take the diagonal
            uniq = list(dict.fromkeys(ids))
            table = _diagonal(table, ids, uniq)
            ids = uniq
        if evidence:
            idx = tuple(evidence[i] if i in evidence else slice(None) for i in ids)
            table = table[idx]
            ids = [i for i in ids if i not in evidence]
        out.append(Factor(ids, table))
    return out


def _diagonal(table: np.ndarray, ids: list[int], uniq: list[int]) -> np.ndarray:
    return np.einsum(table, [uniq.index(i) for i in ids], list(range(len(uniq))))


def log_partition(gm: GroundModel) -> float:
    """log Z; plain products first, rescaled products if the range check fails."""
    factors = model_factors(gm)
    if _dry_run_ok(factors):
        res, _ = eliminate(factors, [], rescale=False)
        z = float(res.table)
        if math.isfinite(z) and z > 0:
            return math.log(z)
    res, log_scale = eliminate(factors, [], rescale=True)
    z = float(res.table)
    if not (math.isfinite(z) and z > 0):
        raise OverflowError("normalisation constant is not finite")
    return math.log(z) + log_scale


def _dry_run_ok(factors: Sequence[Factor]) -> bool:
    """Bound the largest intermediate product by the product of factor maxima."""
    log_max = sum(math.log(float(f.table.max())) for f in factors if f.table.size)
    log_min = sum(math.log(float(f.table.min())) for f in factors if f.table.size)
    return log_max < 700 and log_min > -700


def _ids(gm: GroundModel, atoms: Sequence[GroundAtom]) -> list[int]:
    return [gm.atom_index(a) for a in atoms]


def _evidence_ids(gm: GroundModel, ev: Evidence) -> dict[int, int]:
    out = {}
    for atom, v in ev.items():
        i = gm.atom_index(atom)
        rng = gm.ranges[i]
        if v not in rng:
            raise ValueError(f"{v!r} not in range of {atom}")
        out[i] = rng.index(v)
    return out


def joint_marginal(
    gm: GroundModel,
    atoms: Sequence[GroundAtom],
    ev: Optional[Evidence] = None,
    order: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Normalised table P(atoms | ev), axes in the given atom order."""
    ev = dict(ev or {})
    q = _ids(gm, atoms)
    if len(set(q)) != len(q):
        raise ValueError("repeated query atom")
    evi = _evidence_ids(gm, ev)
    if set(q) & set(evi):
        raise ValueError("query atom also appears in evidence")
    factors = model_factors(gm, evi)
    res, _ = eliminate(factors, q, order=order)
    table = res.table
    # atoms outside every factor cannot occur: each atom is touched by a factor
    total = float(table.sum())
    if not (total > 0 and math.isfinite(total)):
        raise ZeroEvidenceProbability(f"P(evidence) = 0 for {ev}")
    return table / total


def _to_distribution(gm: GroundModel, atoms: Sequence[GroundAtom], table: np.ndarray) -> Distribution:
    atoms = tuple(atoms)
    rngs = [gm.range_of(a) for a in atoms]
    probs: dict = {}
    if len(atoms) == 1:
        for k, v in enumerate(rngs[0]):
            probs[v] = float(table[k])
    else:
        for idx in np.ndindex(*table.shape):
            probs[tuple(r[i] for r, i in zip(rngs, idx))] = float(table[idx])
    return Distribution(atoms, probs)


def marginal(
    gm: GroundModel,
    q: Union[GroundAtom, Sequence[GroundAtom]],
    ev: Optional[Evidence] = None,
    order: Optional[Sequence[int]] = None,
) -> Distribution:
    """P(q | ev) by variable elimination."""
    atoms = (q,) if isinstance(q, GroundAtom) else tuple(q)
    return _to_distribution(gm, atoms, joint_marginal(gm, atoms, ev, order))


def family_cpt(gm: GroundModel, r: GroundAtom, pa: Sequence[GroundAtom]) -> np.ndarray:
    """Table P(r | pa) derived from the joint; axes (pa..., r)."""
    joint = joint_marginal(gm, list(pa) + [r])
    denom = joint.sum(axis=-1, keepdims=True)
    return joint / denom


def conditional_given_parents(
    gm: GroundModel, r: GroundAtom, pa: Assignment
) -> Distribution:
    """P(r | pa) for a fully directed ``gm``, where ``pa`` covers exactly Pa(r)."""
    if not gm.fully_directed:
        raise ValueError("model is not fully directed")
    expected = set(gm.parents(r))
    if set(pa) != expected:
        missing = ", ".join(str(a) for a in expected - set(pa))
        extra = ", ".join(str(a) for a in set(pa) - expected)
        raise ValueError(f"parent assignment mismatch (missing: {missing or '-'}; extra: {extra or '-'})")
    table = joint_marginal(gm, [r], pa)
    return _to_distribution(gm, (r,), table)

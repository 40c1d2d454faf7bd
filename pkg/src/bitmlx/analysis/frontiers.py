"""Frontiers, round status and stipulation status.

A frontier is an antichain of labels summarizing how far the contract
executions of a run have progressed.  Per-chain frontiers of the
intermediate semantics are combined with a join that keeps the most
advanced label of every branch.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

from ..errors import UnknownRoot
from ..isem import ISConfig, Record, STIP_REFUNDED, Status
from ..syntax import Label
from ..xsem import Universe, XConfig

ADVERTISED, INITIALIZED, ABORTED = "Advertised", "Initialized", "Aborted"
DOUBLE_SPENT, REFUNDED, TRANSIENT = "DoubleSpent", "Refunded", "Transient"


def is_antichain(labels: Iterable[Label]) -> bool:
    ls = list(labels)
    return not any(a.is_strict_ancestor_of(b) for a in ls for b in ls)


def frontier_x(conf: XConfig) -> frozenset:
    """Labels of active contracts and assignments (refunds of aborted advertisements excluded)."""
    active = {k for k, _ in conf.active}
    assigned = {k for _, _, k in conf.assigned if k.root not in conf.aborted}
    return frozenset(active | assigned)


def frontier_is(conf: ISConfig, chain: str) -> frozenset:
    return frozenset(r.label for r in conf.records if r.chain == chain and not r.status.stip)


def join_frontiers(*frontiers: Iterable[Label]) -> frozenset:
    """Least upper bound: the maximal labels of the union."""
    union = set().union(*map(set, frontiers)) if frontiers else set()
    return frozenset(k for k in union if not any(k.is_strict_ancestor_of(o) for o in union))


def joined_frontier(conf: ISConfig, chains: Iterable[str]) -> frozenset:
    return join_frontiers(*(frontier_is(conf, c) for c in chains))


class RoundStatus(NamedTuple):
    r: int
    p: int


def round_status_at(t: int, t0: int, delta: int) -> RoundStatus:
    r = (t - t0) // (2 * delta)
    p = 0 if t - t0 < (2 * r + 1) * delta else 1
    return RoundStatus(r, p)


def round_status(u: Universe, label: Label, t: int, delta: int) -> RoundStatus:
    if label.root not in u.ads:
        raise UnknownRoot(label.root)
    return round_status_at(t, u[label.root].pre.t0, delta)


# --- stipulation status ------------------------------------------------------------


def stip_status_x(conf: XConfig, root: str) -> str | None:
    if root in conf.initialized:
        return INITIALIZED
    if root in conf.aborted:
        return ABORTED
    if root in conf.ads:
        return ADVERTISED
    return None


def stip_status_is(u: Universe, conf: ISConfig, root: str, chain: str) -> str | None:
    """Advertised, DoubleSpent, Initialized, Refunded, or the stipulation record's own status."""
    if (root, chain) in conf.ads:
        adv = u[root]
        n = len(adv.participants)
        extra = adv.pre.total(chain) * max(n - 2, 0)
        full = all(
            (d.participant, chain, d.name_on(chain), d.balance[chain] + extra) in conf.deposits
            for d in adv.pre.deposits
        )
        return ADVERTISED if full else DOUBLE_SPENT
    stip = None
    for r in conf.records:
        if r.chain != chain or r.label.root != root:
            continue
        if not r.status.stip:
            return INITIALIZED
        if r.status.kind == STIP_REFUNDED:
            stip = REFUNDED
        elif stip is None:
            stip = str(r.status)
    return stip


def stip_status_es(u: Universe, conf: ISConfig, root: str) -> str | None:
    """Cross-chain status: Initialized, Aborted, Advertised, or Transient when no case applies."""
    if root not in conf.advertised:
        return None
    per = [stip_status_is(u, conf, root, c) for c in u[root].chains]
    gone = any(s in (REFUNDED, DOUBLE_SPENT) for s in per)
    if INITIALIZED in per:
        if not gone and ADVERTISED not in per:
            return INITIALIZED
        return TRANSIENT
    if gone:
        return ABORTED
    return ADVERTISED


def records_under(conf: ISConfig, label: Label, strict: bool = False) -> list[Record]:
    """Non-stipulation records at (or strictly below) ``label`` on any chain."""
    out = []
    for r in conf.records:
        if r.status.stip:
            continue
        if label.is_strict_ancestor_of(r.label) or (not strict and r.label == label):
            out.append(r)
    return out

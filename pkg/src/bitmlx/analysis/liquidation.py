"""Liquidation: driving a run to the point where every contract is settled.

The liquidation distance is a 14-component tuple compared
lexicographically.  Components that describe collections are multisets of
ranks, stored as descending tuples so that Python's tuple order coincides
with the multiset order.  Every honest step must make it strictly smaller,
which is what guarantees termination of :func:`liquidate`.
"""

from __future__ import annotations

from ..errors import DistanceNotDecreasing, Stuck
from ..isem import (
    CHOICE,
    LEFT,
    RIGHT,
    SLASHED,
    STIP_CHOICE,
    STIP_RIGHT,
    STIP_SLASHED,
    TERMINAL_KINDS,
    ISConfig,
    ISSemantics,
)
from ..syntax import Auth, Contract, Guarded, Label, PriorityChoice, Reveal, Split, Withdraw, strip_auth
from ..xsem import XAbort, XConfig, x_step

STIP_RANK = {STIP_CHOICE: 3, STIP_RIGHT: 2, STIP_SLASHED: 1}
STATUS_RANK = {CHOICE: 3, LEFT: 2, RIGHT: 2, SLASHED: 1}


def contract_depth(c: Contract) -> int:
    """Upper bound on the moves needed to finish a contract."""
    if isinstance(c, PriorityChoice):
        return guarded_depth(c.left) + contract_depth(c.right) + 1
    return 1


def guarded_depth(d: Guarded) -> int:
    if isinstance(d, Auth):
        return guarded_depth(d.inner)
    if isinstance(d, Split):
        return sum(contract_depth(ci) for _, ci in d.branches) + 1
    if isinstance(d, Reveal):
        return contract_depth(d.continuation) + 1
    return 1


def liquidated(conf: ISConfig) -> bool:
    return all(r.status.kind in TERMINAL_KINDS for r in conf.records)


def _desc(values) -> tuple:
    return tuple(sorted(values, reverse=True))


def liquidation_distance(sem: ISSemantics, conf: ISConfig, honest: str, bound) -> tuple:
    u = sem.universe
    t = conf.t
    mine = {adv.root for adv in u if honest in adv.participants}
    pending = {root for root, _ in conf.ads}

    missing_ads = len(set(bound) - conf.advertised)
    missing_commits = sum(1 for r in pending & mine if (honest, r) not in conf.committed)
    missing_init_auths = sum(1 for r, c in conf.ads if r in mine and (honest, r, c) not in conf.init_auths)
    unpublished = []
    for root, chain in conf.ads:
        if root not in mine:
            continue
        adv = u[root]
        extra = adv.pre.total(chain) * max(len(adv.participants) - 2, 0)
        d = adv.pre.deposit_of(honest, chain)
        if any(e[0] == honest and e[1] == chain and e[3] == d + extra for e in conf.deposits):
            unpublished.append(1 + max(adv.pre.t0 - t, 0))

    stip = [r for r in conf.records if r.status.stip]
    live = [r for r in conf.records if not r.status.stip and r.status.kind not in TERMINAL_KINDS]
    stip_roots = {r.label.root for r in stip} & mine
    missing_stip_secrets = 0
    for root in stip_roots:
        if (honest, root) not in conf.init_revealed:
            missing_stip_secrets += 1
        if (honest, Label(root)) not in conf.step_revealed and any(
            r.label.root == root and r.status.kind == STIP_CHOICE for r in stip
        ):
            missing_stip_secrets += 1
    stip_status = _desc(STIP_RANK[r.status.kind] for r in stip if r.status.kind in STIP_RANK)
    stip_time = _desc(max(r.time - t, 0) for r in stip if r.status.kind not in TERMINAL_KINDS)

    depths = _desc(contract_depth(u.contract_at(r.label)) for r in live)
    missing_steps = len({
        r.label for r in live
        if r.status.kind == CHOICE
        and isinstance(u.contract_at(r.label), PriorityChoice)
        and (honest, r.label.child("L")) not in conf.step_revealed
    })
    all_labels = [r.label for r in conf.records if not r.status.stip]
    sync = _desc(
        max((o.depth - r.label.depth for o in all_labels if r.label.is_ancestor_of(o)), default=0) for r in live
    )
    missing_auths = 0
    for r in live:
        c = u.contract_at(r.label)
        if r.status.kind == CHOICE and isinstance(c, PriorityChoice):
            signers, _ = strip_auth(c.left)
            if honest in signers and (honest, r.label, r.chain) not in conf.control_auths:
                missing_auths += 1
    revealed = {(a, s) for a, s, _ in conf.revealed}
    missing_secrets = sum(1 for a, s, n in conf.commits if a == honest and n is not None and (a, s) not in revealed)
    statuses = _desc(STATUS_RANK[r.status.kind] for r in conf.records if r.status.kind in STATUS_RANK)
    times = _desc(max(r.time - t, 0) for r in live)
    return (
        missing_ads,
        missing_commits,
        missing_init_auths,
        _desc(unpublished),
        missing_stip_secrets,
        stip_status,
        stip_time,
        depths,
        missing_steps,
        sync,
        missing_auths,
        missing_secrets,
        statuses,
        times,
    )


def liquidate(sem: ISSemantics, strategy, mirror, conf: ISConfig, xconf: XConfig, max_steps: int = 100_000):
    """Extend with honest actions only (first in canonical order) until liquidated.

    Returns ``(configs, xconfs, actions)`` of the extension, the starting
    configuration excluded.  Raises :class:`DistanceNotDecreasing` on any
    step that fails to shrink the liquidation distance.
    """
    from ..strategy import _sort_key

    honest = strategy.participant
    bound = strategy.xs.bound
    configs, xconfs, actions = [], [], []
    dist = liquidation_distance(sem, conf, honest, bound)
    for _ in range(max_steps):
        if liquidated(conf):
            return configs, xconfs, actions
        out = sorted(strategy(conf, xconf), key=_sort_key)
        if not out:
            raise Stuck(f"honest strategy idle in a non-liquidated configuration at t={conf.t}")
        a = out[0]
        nxt = sem.step(conf, a)
        xconf, _ = mirror.advance(xconf, conf, a, nxt)
        new = liquidation_distance(sem, nxt, honest, bound)
        if not new < dist:
            raise DistanceNotDecreasing(a, dist, new)
        conf, dist = nxt, new
        configs.append(conf)
        xconfs.append(xconf)
        actions.append(a)
    raise Stuck("liquidation did not finish within the step limit")


def x_liquidate(xs, xconf: XConfig) -> tuple[XConfig, list]:
    """Finish a BitMLx run: abort pending advertisements, then settle every active contract."""
    u = xs.universe
    steps = []
    while True:
        if xconf.ads:
            a = XAbort(sorted(xconf.ads)[0])
        elif xconf.active:
            label = min((k for k, _ in xconf.active), key=str)
            a = xs.liquidation_move(xconf, label)
        else:
            return xconf, steps
        xconf = x_step(u, xconf, a)
        steps.append(a)

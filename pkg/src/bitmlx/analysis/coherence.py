"""Coherence between an intermediate run and a BitMLx run.

The builder replays an intermediate run and extends a BitMLx run so that
both stay coherent: contract moves are mirrored the first time any chain
performs them, the honest user's authorizations count as soon as they
appear on one chain, and a dishonest user's only once they are present on
every chain that still matters.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import IncoherentInput, NotEnabled
from ..isem import COMPENSATED, SLASHED, Act, ISConfig, ISSemantics
from ..syntax import Label, PriorityChoice, strip_auth
from ..xsem import (
    XAbort,
    XAdvertise,
    XAuth,
    XCommit,
    XConfig,
    XInit,
    XMove,
    XRevealSecret,
    XRun,
    XSign,
    Universe,
    x_is_enabled,
    x_step,
)
from .frontiers import (
    ABORTED,
    TRANSIENT,
    frontier_x,
    joined_frontier,
    stip_status_es,
    stip_status_x,
)

#: intermediate moves that extend a frontier, with their BitMLx counterpart
MIRRORED = {"reveal": "reveal", "right": "skip", "dwithdraw": "dwithdraw", "split": "split", "cwithdraw": "cwithdraw"}


def compensated_for(conf: ISConfig, label: Label, chain: str) -> bool:
    """The chain settled ``label`` (or an ancestor) through compensation."""
    for r in conf.records:
        if r.chain == chain and r.status.kind in (SLASHED, COMPENSATED) and r.label.is_ancestor_of(label):
            return True
    return False


def finished_auths(u: Universe, conf: ISConfig, label: Label, honest: str) -> frozenset:
    """Dishonest signers of the option at ``label`` who authorized it on every chain not compensated for it."""
    c = u.contract_at(label)
    if not isinstance(c, PriorityChoice):
        return frozenset()
    signers, _ = strip_auth(c.left)
    chains = [ch for ch in u[label.root].chains if not compensated_for(conf, label, ch)]
    return frozenset(
        a for a in signers if a != honest and all((a, label, ch) in conf.control_auths for ch in chains)
    )


def finished_init_auths(u: Universe, conf: ISConfig, root: str) -> frozenset:
    adv = u[root]
    return frozenset(a for a in adv.participants if all((a, root, c) in conf.init_auths for c in adv.chains))


def expected_auths(u: Universe, conf: ISConfig, label: Label, honest: str) -> frozenset:
    own = frozenset(a for a, k, _ in conf.control_auths if a == honest and k == label)
    return finished_auths(u, conf, label, honest) | own


@dataclass(frozen=True)
class CoherenceVerdict:
    ok: bool
    clause: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_coherence_config(u: Universe, xconf: XConfig, conf: ISConfig, honest: str) -> CoherenceVerdict:
    chains = sorted({c for adv in u for c in adv.chains})
    fx = frontier_x(xconf)
    fi = joined_frontier(conf, chains)
    if fx != fi:
        return CoherenceVerdict(
            False, "frontier", f"x frontier {sorted(map(str, fx))} != joined frontier {sorted(map(str, fi))}"
        )
    for label, _ in xconf.active:
        if not isinstance(u.contract_at(label), PriorityChoice):
            continue
        want = expected_auths(u, conf, label, honest)
        have = xconf.authorized(label)
        if want != have:
            return CoherenceVerdict(False, "authorizations", f"at {label}: x has {sorted(have)}, expected {sorted(want)}")
    for adv in u:
        es = stip_status_es(u, conf, adv.root)
        if es is None or es == TRANSIENT:
            continue
        xs = stip_status_x(xconf, adv.root)
        if xs != es:
            return CoherenceVerdict(False, "stipulation", f"{adv.root}: x status {xs}, eventual status {es}")
    return CoherenceVerdict(True)


def check_coherence(xrun: XRun, isrun, honest: str) -> CoherenceVerdict:
    """Coherence of the final configurations of both runs."""
    return check_coherence_config(xrun.universe, xrun.last, isrun.last, honest)


class CoherentMirror:
    """Incremental construction of the coherent BitMLx run, one intermediate step at a time."""

    def __init__(self, sem: ISSemantics, honest: str):
        self.sem = sem
        self.u = sem.universe
        self.honest = honest
        self._cache: dict = {}

    def advance(self, xconf: XConfig, before: ISConfig, act: Act, after: ISConfig) -> tuple[XConfig, tuple]:
        key = (xconf, before, act)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._advance(xconf, act, after)
            self._cache[key] = hit
        return hit

    def _advance(self, xconf: XConfig, act: Act, after: ISConfig) -> tuple[XConfig, tuple]:
        steps: list = []

        def do(a) -> None:
            nonlocal xconf
            try:
                xconf = x_step(self.u, xconf, a)
            except NotEnabled as e:
                raise IncoherentInput(f"cannot mirror {act}: {a} is not enabled") from e
            steps.append(a)

        k = act.kind
        root = act.label.root if act.label is not None else None
        if k == "advertise" and XAdvertise(root) not in steps and root not in xconf.used:
            do(XAdvertise(root))
        elif k == "commit" and root in xconf.ads and (act.who, root) not in xconf.committed:
            do(XCommit(act.who, root, tuple(act.arg)))
        elif k == "revealSecret":
            a = XRevealSecret(act.who, act.arg)
            if x_is_enabled(self.u, xconf, a):
                do(a)
        elif k == "authInit" and act.who == self.honest:
            a = XSign(act.who, root)
            if root in xconf.ads and (act.who, root) not in xconf.signed and x_is_enabled(self.u, xconf, a):
                do(a)
        elif k == "authControl" and act.who == self.honest:
            a = XAuth(act.who, act.label)
            if xconf.active_at(act.label) is not None and x_is_enabled(self.u, xconf, a):
                do(a)
        self_sync = self._sync(xconf, after)
        for a in self_sync:
            do(a)
        if k in ("doubleSpend", "abort") and root in xconf.ads:
            if k == "doubleSpend" or stip_status_es(self.u, after, root) == ABORTED:
                do(XAbort(root))
        elif k == "init" and root in xconf.ads:
            do(XInit(root))
        elif k in MIRRORED and xconf.active_at(act.label) is not None:
            if k in ("reveal", "dwithdraw", "split"):
                # the move on this chain proves the signatures; the x-run needs them before moving
                signers, _ = strip_auth(self.u.contract_at(act.label).left)
                for a in signers:
                    if a not in xconf.authorized(act.label):
                        do(XAuth(a, act.label))
            do(XMove(MIRRORED[k], act.label))
        for a in self._sync(xconf, after):
            do(a)
        return xconf, tuple(steps)

    def _sync(self, xconf: XConfig, conf: ISConfig) -> list:
        """Dishonest signatures and authorizations that are complete on the intermediate side."""
        out = []
        for root in sorted(xconf.ads):
            adv = self.u[root]
            committed = {a for a, r in xconf.committed if r == root}
            if committed >= set(adv.participants):
                for a in sorted(finished_init_auths(self.u, conf, root)):
                    if a != self.honest and (a, root) not in xconf.signed:
                        out.append(XSign(a, root))
        for label, _ in sorted(xconf.active, key=lambda p: str(p[0])):
            for a in sorted(finished_auths(self.u, conf, label, self.honest) - xconf.authorized(label)):
                out.append(XAuth(a, label))
        return out


def build_coherent_xrun(isrun, honest: str) -> XRun:
    """BitMLx run coherent with ``isrun`` at every prefix."""
    mirror = CoherentMirror(isrun.sem, honest)
    xrun = XRun(isrun.sem.universe)
    xconf = xrun.last
    configs, actions = [xconf], []
    for i, act in enumerate(isrun.actions):
        xconf, steps = mirror.advance(xconf, isrun.configs[i], act, isrun.configs[i + 1])
        cur = configs[-1]
        for a in steps:
            cur = x_step(isrun.sem.universe, cur, a)
            configs.append(cur)
            actions.append(a)
    return XRun(isrun.sem.universe, tuple(configs), tuple(actions))

"""Honest strategies at both levels and the adversarial schedulers.

The BitMLx strategy of the honest user is an eager, deterministic function
of the current x-configuration, driven by a choice policy.  The compiled
strategy reads that x-strategy through the coherent x-configuration kept
alongside the intermediate run.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InvalidBaseStrategy, Stuck, UnboundSecret
from .isem import (
    CHOICE,
    LEFT,
    RIGHT,
    SLASHED,
    STIP_CHOICE,
    STIP_RIGHT,
    STIP_SLASHED,
    FINAL_KINDS,
    TERMINAL_KINDS,
    Act,
    ISConfig,
    ISSemantics,
)
from .surface import SourceFile, _Parser
from .syntax import Label, Predicate, PriorityChoice, Withdraw, eval_predicate
from .xsem import (
    Universe,
    XAdvertise,
    XAuth,
    XCommit,
    XConfig,
    XInit,
    XMove,
    XRevealSecret,
    XSign,
    left_kind,
    left_prerequisites,
)

LEFT_INTENT, SKIP_INTENT = "left", "skip"


@dataclass(frozen=True)
class Rule:
    """Choose ``intent`` at ``label`` (or anywhere when ``None``) once ``condition`` holds."""

    label: Label | None
    condition: Predicate
    intent: str


@dataclass(frozen=True)
class ChoicePolicy:
    default: str = LEFT_INTENT
    overrides: tuple = ()  # ((Label, intent), ...)
    rules: tuple = ()  # (Rule, ...), first match wins
    lengths: tuple = ()  # ((secret, length), ...) for the honest user's commitments

    def intent(self, label: Label, env: dict) -> str:
        for rule in self.rules:
            if rule.label is not None and rule.label != label:
                continue
            try:
                if eval_predicate(rule.condition, env):
                    return rule.intent
            except UnboundSecret:
                continue
        for k, intent in self.overrides:
            if k == label:
                return intent
        return self.default

    def length_of(self, secret: str) -> int:
        return dict(self.lengths).get(secret, 0)

    @classmethod
    def parse(cls, text: str) -> "ChoicePolicy":
        """Parse ``left``, ``skip``, or ``;``-separated entries such as
        ``skip; [k0,L]=left; x=1; [k0,L] if |y| = 1 then left``."""
        default = LEFT_INTENT
        overrides, rules, lengths = [], [], []
        for raw in filter(None, (p.strip() for p in text.split(";"))):
            m = re.fullmatch(r"(\[[^\]]*\]|\*)\s+if\s+(.+)\s+then\s+(left|skip)", raw)
            if m:
                label = None if m.group(1) == "*" else Label.parse(m.group(1))
                p = _Parser(SourceFile(m.group(2), "<policy>"))
                cond = p.predicate()
                if p.tok.kind != "eof":
                    raise ValueError(f"trailing input in policy rule {raw!r}")
                rules.append(Rule(label, cond, m.group(3)))
                continue
            if raw in (LEFT_INTENT, SKIP_INTENT):
                default = raw
                continue
            m = re.fullmatch(r"(\[[^\]]*\])\s*=\s*(left|skip)", raw)
            if m:
                overrides.append((Label.parse(m.group(1)), m.group(2)))
                continue
            m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_']*)\s*=\s*(\d+)", raw)
            if m:
                lengths.append((m.group(1), int(m.group(2))))
                continue
            raise ValueError(f"cannot parse policy entry {raw!r}")
        return cls(default, tuple(overrides), tuple(rules), tuple(lengths))


@dataclass
class XStrategy:
    """Eager deterministic BitMLx strategy of one honest participant."""

    universe: Universe
    participant: str
    policy: ChoicePolicy = field(default_factory=ChoicePolicy)
    bound: frozenset | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.bound is None:
            self.bound = frozenset(a.root for a in self.universe if self.participant in a.participants)

    def __call__(self, conf: XConfig) -> frozenset:
        out = self._cache.get(conf)
        if out is None:
            out = frozenset(self._outputs(conf))
            self._cache[conf] = out
        return out

    def commit_lengths(self, root: str) -> tuple:
        adv = self.universe[root]
        return tuple((s, self.policy.length_of(s)) for s in adv.pre.secrets_of(self.participant))

    def left_intent(self, conf: XConfig, label: Label) -> bool:
        return self.policy.intent(label, conf.lengths()) == LEFT_INTENT

    def _outputs(self, conf: XConfig):
        me = self.participant
        u = self.universe
        for root in sorted(self.bound):
            adv = u[root]
            if root not in conf.used:
                yield XAdvertise(root)
            if root not in conf.ads:
                continue
            committed = {a for a, r in conf.committed if r == root}
            if me not in committed:
                yield XCommit(me, root, self.commit_lengths(root))
            elif committed >= set(adv.participants):
                signed = {a for a, r in conf.signed if r == root}
                if me not in signed:
                    yield XSign(me, root)
                elif signed >= set(adv.participants):
                    yield XInit(root)
        for label, _ in conf.active:
            if label.root not in self.bound:
                continue
            c = u.contract_at(label)
            if isinstance(c, Withdraw):
                yield XMove("cwithdraw", label)
                continue
            acts = []
            if self.left_intent(conf, label):
                miss_auth, miss_sec, ok = left_prerequisites(u, conf, label)
                if me in miss_auth:
                    acts.append(XAuth(me, label))
                own = {s for s in u[label.root].pre.secrets_of(me)}
                revealed_names = {s for _, s, _ in conf.revealed}
                for s in sorted(miss_sec & own):
                    if s not in revealed_names:
                        acts.append(XRevealSecret(me, s))
                if not miss_auth and not miss_sec and ok:
                    acts.append(XMove(left_kind(u, label), label))
            yield from acts or [XMove("skip", label)]

    def liquidation_move(self, conf: XConfig, label: Label) -> XMove:
        """Deterministic move used to finish the x-run: the left move if wanted and enabled, else skip."""
        c = self.universe.contract_at(label)
        if isinstance(c, Withdraw):
            return XMove("cwithdraw", label)
        if self.left_intent(conf, label):
            miss_auth, miss_sec, ok = left_prerequisites(self.universe, conf, label)
            if not miss_auth and not miss_sec and ok:
                return XMove(left_kind(self.universe, label), label)
        return XMove("skip", label)


def eager_x_strategy(xs: XStrategy, conf: XConfig) -> frozenset:
    return xs(conf)


def check_x_strategy_output(xs: XStrategy, conf: XConfig, out: Iterable) -> None:
    """Raise if an output breaks validity or determinism."""
    from .xsem import x_is_enabled

    moves: dict[Label, str] = {}
    for a in out:
        if not x_is_enabled(xs.universe, conf, a):
            raise InvalidBaseStrategy(f"{a} is not enabled")
        who = getattr(a, "participant", None)
        if who is not None and who != xs.participant:
            raise InvalidBaseStrategy(f"{a} is not attributable to {xs.participant}")
        if isinstance(a, XMove):
            if a.label in moves and moves[a.label] != a.kind:
                raise InvalidBaseStrategy(f"two moves on {a.label}")
            moves[a.label] = a.kind


# --- compiled strategy -------------------------------------------------------------


@dataclass
class CompiledStrategy:
    """Intermediate strategy of the honest user, derived from its x-strategy."""

    xs: XStrategy
    sem: ISSemantics
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def participant(self) -> str:
        return self.xs.participant

    def __call__(self, conf: ISConfig, xconf: XConfig) -> frozenset:
        key = (conf, xconf)
        out = self._cache.get(key)
        if out is None:
            untimed = frozenset(self.untimed(conf, xconf))
            if untimed:
                out = untimed
            else:
                d = self.next_deadline(conf)
                out = frozenset() if d is None else frozenset({Act("delay", arg=d)})
            self._cache[key] = out
        return out

    def next_deadline(self, conf: ISConfig) -> int | None:
        t = conf.t
        waits = [r.time - t for r in conf.records if r.status.kind not in TERMINAL_KINDS and r.time > t]
        for root, _ in conf.ads:
            t0 = self.sem.universe[root].pre.t0
            if t0 > t:
                waits.append(t0 - t)
        return min(waits) if waits else None

    def untimed(self, conf: ISConfig, xconf: XConfig):
        me = self.participant
        sem = self.sem
        u = sem.universe
        enabled = sem.enabled(conf)
        xout = self.xs(xconf)
        t = conf.t

        # stipulation
        for root in sorted(self.xs.bound):
            adv = u[root]
            t0 = adv.pre.t0
            lab = Label(root)
            if XAdvertise(root) in xout and Act("advertise", lab) in enabled:
                yield Act("advertise", lab)
            if root not in conf.advertised:
                continue
            for a in xout:
                if isinstance(a, XCommit) and a.root == root and Act("commit", lab, who=me) in enabled:
                    yield Act("commit", lab, who=me, arg=self.xs.commit_lengths(root))
            started = any((me, root, c) in conf.init_auths for c in adv.chains)
            for c in adv.chains:
                act = Act("authInit", lab, c, me)
                if act in enabled and ((XSign(me, root) in xout and t < t0) or started):
                    yield act
                if XInit(root) in xout and t < t0 and Act("publish", lab, c) in enabled:
                    yield Act("publish", lab, c)
                if (root, c) in conf.ads and t >= t0 and Act("doubleSpend", lab, c, me) in enabled:
                    yield Act("doubleSpend", lab, c, me)
            all_published = all((root, c) in conf.published for c in adv.chains)
            if XInit(root) in xout and t < t0:
                if all_published and (me, root) not in conf.init_revealed:
                    yield Act("revealInit", lab, who=me)
                if all((p, root) in conf.init_revealed for p in adv.participants) and (me, lab) not in conf.step_revealed:
                    yield Act("revealStep", lab, who=me)

        for a in xout:
            if isinstance(a, XRevealSecret):
                act = Act("revealSecret", who=me, arg=a.name)
                if act in enabled:
                    yield act

        for r in conf.records:
            kind = r.status.kind
            if kind in FINAL_KINDS or r.label.root not in self.xs.bound:
                continue
            label, chain = r.label, r.chain
            if kind == STIP_CHOICE:
                for k in ("init", "sright"):
                    if Act(k, label, chain) in enabled:
                        yield Act(k, label, chain)
            elif kind == STIP_RIGHT:
                if Act("abort", label, chain) in enabled:
                    yield Act("abort", label, chain)
                for b in conf.step_secret_owners(label):
                    if b != me:
                        yield Act("sslash", label, chain, b)
            elif kind == STIP_SLASHED:
                yield Act("scompensate", label, chain, r.status.who)
            elif kind == SLASHED:
                yield Act("compensate", label, chain, r.status.who)
            elif kind == CHOICE:
                c = u.contract_at(label)
                if isinstance(c, Withdraw):
                    if Act("cwithdraw", label, chain) in enabled:
                        yield Act("cwithdraw", label, chain)
                    continue
                node = label.child("L")
                move = XMove(left_kind(u, label), label)
                if move in xout and (me, node) not in conf.step_revealed and t < r.time:
                    yield Act("revealStep", node, who=me)
                for k in ("ileft", "reveal", "iright"):
                    if Act(k, label, chain) in enabled:
                        yield Act(k, label, chain)
                auth = Act("authControl", label, chain, me)
                if auth in enabled:
                    started = any(w == me and k == label for w, k, _ in conf.control_auths)
                    if XAuth(me, label) in xout or started:
                        yield auth
            elif kind == LEFT:
                for k in ("dwithdraw", "split"):
                    if Act(k, label, chain) in enabled:
                        yield Act(k, label, chain)
            elif kind == RIGHT:
                if Act("right", label, chain) in enabled:
                    yield Act("right", label, chain)
                for b in conf.step_secret_owners(label.child("L")):
                    if b != me:
                        yield Act("slash", label, chain, b)


def compile_strategy(xs: XStrategy, sem: ISSemantics) -> CompiledStrategy:
    return CompiledStrategy(xs, sem)


# --- adversaries ---------------------------------------------------------------------

#: actions needing the honest user's consent
CONSENT = frozenset({"iright", "right", "sright", "abort", "delay"})
#: actions that anybody may perform
UNATTRIBUTED = frozenset({
    "advertise", "publish", "init", "ileft", "reveal", "dwithdraw", "split", "cwithdraw",
    "slash", "compensate", "sslash", "scompensate",
})
#: actions performed by (and attributed to) a participant
ATTRIBUTED = frozenset({"commit", "authInit", "doubleSpend", "revealInit", "revealStep", "revealSecret", "authControl"})

DISHONEST_LENGTHS = (0, 1, None)


def _sort_key(a: Act):
    return (a.kind, str(a.label), a.chain or "", a.who or "", repr(a.arg))


def allowed_actions(sem: ISSemantics, conf: ISConfig, honest: str, honest_out: frozenset) -> list[Act]:
    """Every action a conforming scheduler may pick, in canonical order."""
    out = set(honest_out)
    for a in sem.enabled(conf):
        if a.kind in CONSENT:
            continue
        if a.kind in UNATTRIBUTED:
            out.add(a)
        elif a.kind in ATTRIBUTED and a.who != honest:
            if a.kind == "commit":
                own = sem.universe[a.label.root].pre.secrets_of(a.who)
                for combo in _length_combos(len(own)):
                    out.add(a._replace(arg=tuple(zip(own, combo))))
            else:
                out.add(a)
    return sorted(out, key=_sort_key)


def _length_combos(k: int):
    if k == 0:
        yield ()
        return
    for head in DISHONEST_LENGTHS:
        for rest in _length_combos(k - 1):
            yield (head, *rest)


#: sampling profile that keeps stipulations alive long enough to reach contract moves
DEEP_PROFILE = (("doubleSpend", 0.02), ("delay", 0.15))


@dataclass
class RandomAdversary:
    """Seeded scheduler sampling among all conforming actions.

    Without ``weights`` the choice is uniform.  ``weights`` maps action kinds
    to relative weights (default 1), which lets campaigns steer away from
    early aborts without excluding any action.
    """

    seed: int = 0
    weights: tuple = ()

    def __post_init__(self):
        self.rng = random.Random(self.seed)
        self._w = dict(self.weights)

    def choose(self, allowed: Sequence[Act], honest_out: frozenset, conf: ISConfig) -> Act:
        if not allowed:
            raise Stuck("no conforming action")
        if not self._w:
            return allowed[self.rng.randrange(len(allowed))]
        w = [self._w.get(a.kind, 1.0) for a in allowed]
        return self.rng.choices(allowed, weights=w)[0]


def campaign_adversary(seed: int) -> RandomAdversary:
    """Every third seed is fully uniform; the others use :data:`DEEP_PROFILE`."""
    return RandomAdversary(seed, () if seed % 3 == 0 else DEEP_PROFILE)


@dataclass(frozen=True)
class ScriptEntry:
    action: Act
    after: int | None = None


@dataclass
class ScriptedAdversary:
    """Plays its script in order; an entry is played once it is allowed (and its time has come),
    meanwhile the first honest action is played.  After the script it only cooperates."""

    script: tuple
    position: int = 0

    def choose(self, allowed: Sequence[Act], honest_out: frozenset, conf: ISConfig) -> Act:
        while self.position < len(self.script):
            entry = self.script[self.position]
            if (entry.after is None or conf.t >= entry.after) and _matches(entry.action, allowed):
                self.position += 1
                return _matches(entry.action, allowed)
            break
        honest = sorted(honest_out, key=_sort_key)
        if honest:
            return honest[0]
        if self.position < len(self.script):
            # honest user idle but the next entry is not yet allowed: nothing conforming to do
            raise Stuck(f"script entry {self.script[self.position].action} is not allowed")
        raise Stuck("nothing left to do")


def _matches(want: Act, allowed: Sequence[Act]) -> Act | None:
    for a in allowed:
        if a == want:
            return a
        if want.kind == "commit" and want.arg is None and a.kind == "commit" and a.label == want.label and a.who == want.who:
            return a
    return None


def load_script(doc: list) -> tuple:
    entries = []
    for item in doc:
        after = item.get("after")
        body = {k: v for k, v in item.items() if k != "after"}
        entries.append(ScriptEntry(Act.from_json(body), after))
    return tuple(entries)


def partial_move_bob(root: str = "k0", cheater: str = "B", t_reveal: int | None = None) -> tuple:
    """The swap attack: the cheater moves left on BTC only and lets DGC time out."""
    k0 = Label(root)
    return (
        ScriptEntry(Act("commit", k0, who=cheater, arg=None)),
        ScriptEntry(Act("authInit", k0, "BTC", cheater)),
        ScriptEntry(Act("authInit", k0, "DGC", cheater)),
        ScriptEntry(Act("revealInit", k0, who=cheater)),
        ScriptEntry(Act("revealStep", k0.child("L"), who=cheater), after=t_reveal),
        ScriptEntry(Act("ileft", k0, "BTC")),
        ScriptEntry(Act("dwithdraw", k0, "BTC")),
        ScriptEntry(Act("iright", k0, "DGC")),
    )

"""Abstract syntax of BitMLx advertisements and of the per-chain BitML target.

Labels name nodes of a contract tree.  A priority choice living at label
``k`` keeps its guarded option at ``k|L`` and its fallback at ``k|R``;
split branches hang below the guarded node as ``k|L|i`` and withdraw
leaves are ``...|L_i``.  Labels only ever grow by appending, so ancestry
is a prefix test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Union

from .errors import UnboundSecret


class Label(tuple):
    """Path identifier of a contract node: ``(root, seg, seg, ...)``.

    Segments are ``"L"``, ``"R"``, a 1-based branch index ``int``, or a
    terminal index ``"L_i"``.
    """

    __slots__ = ()

    def __new__(cls, root: str, *segments):
        return tuple.__new__(cls, (root, *segments))

    @classmethod
    def of(cls, path: Iterable) -> "Label":
        path = tuple(path)
        if not path:
            raise ValueError("the empty path is not a label")
        return tuple.__new__(cls, path)

    @property
    def root(self) -> str:
        return self[0]

    @property
    def segments(self) -> tuple:
        return self[1:]

    def child(self, segment) -> "Label":
        return tuple.__new__(Label, (*self, segment))

    __truediv__ = child

    @property
    def depth(self) -> int:
        """Number of left/right steps on the path (branch indices and leaves excluded)."""
        return sum(1 for s in self[1:] if s == "L" or s == "R")

    @property
    def parent(self) -> "Label | None":
        return tuple.__new__(Label, self[:-1]) if len(self) > 1 else None

    def is_ancestor_of(self, other: "Label") -> bool:
        n = len(self)
        return len(other) >= n and other[:n] == tuple(self)

    def is_strict_ancestor_of(self, other: "Label") -> bool:
        return len(other) > len(self) and other[: len(self)] == tuple(self)

    def __str__(self) -> str:
        return "[" + ",".join(str(s) for s in self) + "]"

    def __repr__(self) -> str:
        return f"Label{str(self)}"

    @classmethod
    def parse(cls, text: str) -> "Label":
        body = text.strip()
        if body.startswith("[") and body.endswith("]"):
            body = body[1:-1]
        parts = [p.strip() for p in body.split(",") if p.strip()]
        if not parts:
            raise ValueError(f"bad label {text!r}")
        return cls.of([parts[0], *(int(p) if p.isdigit() else p for p in parts[1:])])


def terminal(i: int) -> str:
    """Segment naming the i-th (1-based) withdraw leaf."""
    return f"L_{i}"


def label_append(parent: Label, segment) -> Label:
    return parent.child(segment)


def is_ancestor(a: Label, b: Label) -> bool:
    """Reflexive prefix test."""
    return a.is_ancestor_of(b)


@dataclass(frozen=True)
class Participant:
    name: str
    honest: bool = False

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Chain:
    name: str

    def __str__(self) -> str:
        return self.name


class Balance(tuple):
    """Immutable per-chain amounts, stored as sorted ``(chain, amount)`` pairs."""

    __slots__ = ()

    def __new__(cls, amounts: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = dict(amounts.items() if isinstance(amounts, Mapping) else amounts)
        for chain, value in items.items():
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"amount on {chain} must be a nonnegative integer, got {value!r}")
        return tuple.__new__(cls, tuple(sorted(items.items())))

    def __getitem__(self, chain):
        if isinstance(chain, (int, slice)):
            return tuple.__getitem__(self, chain)
        for c, v in self:
            if c == chain:
                return v
        return 0

    @property
    def chains(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self)

    def as_dict(self) -> dict[str, int]:
        return dict(self)

    def __add__(self, other: "Balance") -> "Balance":
        out = dict(self)
        for c, v in other:
            out[c] = out.get(c, 0) + v
        return Balance(out)

    def __sub__(self, other: "Balance") -> "Balance":
        out = dict(self)
        for c, v in other:
            out[c] = out.get(c, 0) - v
        return Balance(out)

    def on(self, chains: Iterable[str]) -> "Balance":
        """Restate over exactly ``chains``, filling absent entries with zero."""
        d = dict(self)
        return Balance({c: d.get(c, 0) for c in chains})

    def is_zero(self) -> bool:
        return all(v == 0 for _, v in self)

    def __str__(self) -> str:
        return " + ".join(f"{v} {c}" for c, v in self) or "0"

    def __repr__(self) -> str:
        return f"Balance({dict(self)!r})"


def balance_sum(balances: Iterable[Balance], chains: Iterable[str] = ()) -> Balance:
    total = Balance({c: 0 for c in chains})
    for b in balances:
        total = total + b
    return total


# --- reveal conditions -------------------------------------------------------


@dataclass(frozen=True)
class EConst:
    value: int


@dataclass(frozen=True)
class ELen:
    secret: str


@dataclass(frozen=True)
class EAdd:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class ESub:
    left: "Expr"
    right: "Expr"


Expr = Union[EConst, ELen, EAdd, ESub]


@dataclass(frozen=True)
class PTrue:
    pass


@dataclass(frozen=True)
class PAnd:
    left: "Predicate"
    right: "Predicate"


@dataclass(frozen=True)
class PNot:
    inner: "Predicate"


@dataclass(frozen=True)
class PEq:
    left: Expr
    right: Expr


@dataclass(frozen=True)
class PLt:
    left: Expr
    right: Expr


Predicate = Union[PTrue, PAnd, PNot, PEq, PLt]


def eval_expr(e: Expr, env: Mapping[str, int]) -> int:
    if isinstance(e, EConst):
        return e.value
    if isinstance(e, ELen):
        if e.secret not in env or env[e.secret] is None:
            raise UnboundSecret(e.secret)
        return env[e.secret]
    if isinstance(e, EAdd):
        return eval_expr(e.left, env) + eval_expr(e.right, env)
    if isinstance(e, ESub):
        return eval_expr(e.left, env) - eval_expr(e.right, env)
    raise TypeError(f"not an expression: {e!r}")


def eval_predicate(p: Predicate, env: Mapping[str, int]) -> bool:
    if isinstance(p, PTrue):
        return True
    if isinstance(p, PAnd):
        # both sides are evaluated so an unbound secret is reported regardless of order
        left = eval_predicate(p.left, env)
        right = eval_predicate(p.right, env)
        return left and right
    if isinstance(p, PNot):
        return not eval_predicate(p.inner, env)
    if isinstance(p, PEq):
        return eval_expr(p.left, env) == eval_expr(p.right, env)
    if isinstance(p, PLt):
        return eval_expr(p.left, env) < eval_expr(p.right, env)
    raise TypeError(f"not a predicate: {p!r}")


def expr_secrets(e: Expr) -> Iterator[str]:
    if isinstance(e, ELen):
        yield e.secret
    elif isinstance(e, (EAdd, ESub)):
        yield from expr_secrets(e.left)
        yield from expr_secrets(e.right)


def predicate_secrets(p: Predicate) -> Iterator[str]:
    if isinstance(p, PAnd):
        yield from predicate_secrets(p.left)
        yield from predicate_secrets(p.right)
    elif isinstance(p, PNot):
        yield from predicate_secrets(p.inner)
    elif isinstance(p, (PEq, PLt)):
        yield from expr_secrets(p.left)
        yield from expr_secrets(p.right)


def conjunction(parts: Iterable[Predicate]) -> Predicate:
    parts = [p for p in parts if not isinstance(p, PTrue)]
    if not parts:
        return PTrue()
    out = parts[0]
    for p in parts[1:]:
        out = PAnd(out, p)
    return out


# --- BitMLx contracts --------------------------------------------------------


@dataclass(frozen=True)
class Withdraw:
    """Distribution of the governed funds; used both as a guarded option and as the final fallback."""

    assignments: tuple[tuple[str, Balance], ...]


@dataclass(frozen=True)
class PriorityChoice:
    left: "Guarded"
    right: "Contract"


@dataclass(frozen=True)
class Split:
    branches: tuple[tuple[Balance, "Contract"], ...]


@dataclass(frozen=True)
class Auth:
    signers: tuple[str, ...]
    inner: "Guarded"


@dataclass(frozen=True)
class Reveal:
    secrets: tuple[str, ...]
    predicate: Predicate
    continuation: "Contract"


Contract = Union[PriorityChoice, Withdraw]
Guarded = Union[Withdraw, Split, Auth, Reveal]


def strip_auth(d: Guarded) -> tuple[tuple[str, ...], Guarded]:
    """Split a guarded contract into its required signers and the underlying move."""
    if isinstance(d, Auth):
        return d.signers, d.inner
    return (), d


def has_rightmost_withdraw(c: Contract) -> bool:
    while isinstance(c, PriorityChoice):
        c = c.right
    return isinstance(c, Withdraw)


def choice_options(c: Contract) -> tuple[list[Guarded], Withdraw]:
    """Flatten ``D1 >> D2 >> ... >> W`` into its guarded options and final withdraw."""
    options = []
    while isinstance(c, PriorityChoice):
        options.append(c.left)
        c = c.right
    return options, c


# --- preconditions and advertisements ----------------------------------------


@dataclass(frozen=True)
class Deposit:
    participant: str
    balance: Balance
    names: tuple[tuple[str, str], ...]

    def name_on(self, chain: str) -> str:
        for c, n in self.names:
            if c == chain:
                return n
        return f"{self.participant}.{chain}"


@dataclass(frozen=True)
class Precondition:
    deposits: tuple[Deposit, ...]
    secrets: tuple[tuple[str, str], ...]
    t0: int
    root: str
    chains: tuple[str, ...]
    declared: tuple[str, ...] = ()

    @property
    def participants(self) -> tuple[str, ...]:
        """Participants holding a deposit entry, in declaration order."""
        seen: list[str] = []
        for d in self.deposits:
            if d.participant not in seen:
                seen.append(d.participant)
        return tuple(seen)

    def deposit_of(self, participant: str, chain: str) -> int:
        return sum(d.balance[chain] for d in self.deposits if d.participant == participant)

    def total(self, chain: str) -> int:
        return sum(d.balance[chain] for d in self.deposits)

    def secret_owner(self, name: str) -> str | None:
        for owner, s in self.secrets:
            if s == name:
                return owner
        return None

    def secrets_of(self, participant: str) -> tuple[str, ...]:
        return tuple(s for owner, s in self.secrets if owner == participant)


@dataclass(frozen=True)
class Advertisement:
    pre: Precondition
    contract: Contract
    definitions: tuple[str, ...] = field(default=(), compare=False)

    @property
    def root(self) -> str:
        return self.pre.root

    @property
    def chains(self) -> tuple[str, ...]:
        return self.pre.chains

    @property
    def participants(self) -> tuple[str, ...]:
        return self.pre.participants

    def with_timing(self, t0: int | None = None, root: str | None = None) -> "Advertisement":
        from dataclasses import replace

        pre = replace(self.pre, t0=self.pre.t0 if t0 is None else t0, root=self.pre.root if root is None else root)
        return replace(self, pre=pre)


# --- BitML target ------------------------------------------------------------


class StepSecret(NamedTuple):
    owner: str
    label: Label

    def __str__(self) -> str:
        return f"s^{self.owner}_{self.label}"


class InitSecret(NamedTuple):
    owner: str
    root: str

    def __str__(self) -> str:
        return f"IS^{self.owner}_{self.root}"


SecretRef = Union[str, StepSecret, InitSecret]


@dataclass(frozen=True)
class BChoice:
    branches: tuple["BGuarded", ...]


@dataclass(frozen=True)
class BReveal:
    secrets: tuple[SecretRef, ...]
    predicate: Predicate
    continuation: BChoice


@dataclass(frozen=True)
class BSplit:
    branches: tuple[tuple[int, BChoice], ...]


@dataclass(frozen=True)
class BAuth:
    signers: tuple[str, ...]
    inner: "BGuarded"


@dataclass(frozen=True)
class BAfter:
    time: int
    inner: "BGuarded"


@dataclass(frozen=True)
class BWithdraw:
    participant: str


@dataclass(frozen=True)
class BTau:
    """Reveal of no secrets: a step that only consumes the enclosing choice."""

    continuation: BChoice


BGuarded = Union[BReveal, BSplit, BAuth, BAfter, BWithdraw, BTau]

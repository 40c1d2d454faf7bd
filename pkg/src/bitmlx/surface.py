"""Concrete syntax for BitMLx advertisements: tokenizer, parser, macro expander, printer.

A source file is a sequence of ``;``-terminated statements::

    participants A, B;
    chains BTC, DGC;
    deposit A: 1 BTC;
    deposit B: 1 DGC;
    start 0 as k0;
    contract Pay >> Abort;
    Pay = withdraw(1 DGC -> A, 1 BTC -> B);
    Abort = withdraw(1 BTC -> A, 1 DGC -> B);

``>>`` is the priority choice.  Definitions are inlined at parse time;
indexed definitions ``Name[i] = ...`` may refer to strictly smaller
indices and may be given explicit base cases such as ``Name[0] = ...``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .errors import MacroRecursionError, ParseError
from .syntax import (
    Advertisement,
    Auth,
    Balance,
    Contract,
    Deposit,
    EAdd,
    EConst,
    ELen,
    ESub,
    Guarded,
    PAnd,
    PEq,
    PLt,
    PNot,
    Precondition,
    Predicate,
    PriorityChoice,
    PTrue,
    Reveal,
    Split,
    Withdraw,
    conjunction,
)

DEFAULT_MACRO_BOUND = 64

KEYWORDS = {
    "participants", "chains", "deposit", "secret", "start", "as", "contract",
    "withdraw", "split", "auth", "reveal", "reveal*", "if", "then", "true", "and", "not",
}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<int>\d+)
  | (?P<word>reveal\*|[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>->|>>|!=|<=|>=|[;,:()\[\]+\-*|=<>])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class SourceFile:
    text: str
    origin: str = "<string>"

    @classmethod
    def from_path(cls, path: str | Path) -> "SourceFile":
        p = Path(path)
        return cls(p.read_text(encoding="utf-8"), str(p))


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "word", "kw", "sym", "eof"
    text: str
    line: int
    col: int


def tokenize(src: SourceFile) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    text = src.text
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, src.origin)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            if kind == "word" and value in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --- unresolved terms produced by the parser ----------------------------------


@dataclass(frozen=True)
class IConst:
    value: int


@dataclass(frozen=True)
class IVar:
    name: str
    tok: Token


@dataclass(frozen=True)
class IBin:
    op: str
    left: "IExpr"
    right: "IExpr"


IExpr = Union[IConst, IVar, IBin]


@dataclass(frozen=True)
class BalanceT:
    parts: tuple[tuple[IExpr, str], ...]
    tok: Token


@dataclass(frozen=True)
class WithdrawT:
    assignments: tuple[tuple[BalanceT, str], ...]
    tok: Token


@dataclass(frozen=True)
class SplitT:
    branches: tuple[tuple[BalanceT, "Term"], ...]
    tok: Token


@dataclass(frozen=True)
class AuthT:
    signers: tuple[str, ...]
    inner: "Term"
    tok: Token


@dataclass(frozen=True)
class RevealT:
    secrets: tuple[str, ...]
    predicate: Predicate
    continuation: "Term"
    tok: Token


@dataclass(frozen=True)
class RefT:
    name: str
    index: IExpr | None
    tok: Token


@dataclass(frozen=True)
class ChoiceT:
    items: tuple["Term", ...]
    tok: Token


Term = Union[WithdrawT, SplitT, AuthT, RevealT, RefT, ChoiceT]


@dataclass
class _Definition:
    name: str
    param: str | None
    literal: int | None
    body: Term
    tok: Token


class _Parser:
    def __init__(self, src: SourceFile):
        self.src = src
        self.toks = tokenize(src)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, expected: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        found = tok.text or "end of input"
        return ParseError(f"expected {expected}, found {found!r}", tok.line, tok.col, self.src.origin)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("kw", "sym")

    def eat(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(repr(text))
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "word":
            raise self.error(what)
        t = self.tok
        self.i += 1
        return t

    def integer(self) -> int:
        if self.tok.kind != "int":
            raise self.error("integer")
        v = int(self.tok.text)
        self.i += 1
        return v

    def names(self) -> list[Token]:
        out = [self.ident()]
        while self.at(","):
            self.i += 1
            out.append(self.ident())
        return out

    # statements
    def parse_file(self):
        participants: list[str] = []
        chains: list[str] = []
        deposits: list[tuple[Token, BalanceT, list[Token]]] = []
        secrets: list[tuple[Token, Token]] = []
        start: tuple[int, str] | None = None
        main: Term | None = None
        defs: dict[str, list[_Definition]] = {}
        while self.tok.kind != "eof":
            t = self.tok
            if self.at("participants"):
                self.i += 1
                participants.extend(n.text for n in self.names())
            elif self.at("chains"):
                self.i += 1
                chains.extend(n.text for n in self.names())
            elif self.at("deposit"):
                self.i += 1
                who = self.ident("participant")
                self.eat(":")
                bal = self.balance()
                names: list[Token] = []
                if self.at("as"):
                    self.i += 1
                    names = self.names()
                deposits.append((who, bal, names))
            elif self.at("secret"):
                self.i += 1
                who = self.ident("participant")
                self.eat(":")
                secrets.append((who, self.ident("secret name")))
            elif self.at("start"):
                self.i += 1
                if start is not None:
                    raise ParseError("duplicate start declaration", t.line, t.col, self.src.origin)
                t0 = self.integer()
                root = "k0"
                if self.at("as"):
                    self.i += 1
                    root = self.ident("stipulation identifier").text
                start = (t0, root)
            elif self.at("contract"):
                self.i += 1
                if main is not None:
                    raise ParseError("duplicate contract declaration", t.line, t.col, self.src.origin)
                main = self.choice()
            elif t.kind == "word":
                self.i += 1
                param = literal = None
                if self.at("["):
                    self.i += 1
                    if self.tok.kind == "int":
                        literal = self.integer()
                    else:
                        param = self.ident("index variable").text
                    self.eat("]")
                self.eat("=")
                body = self.choice()
                defs.setdefault(t.text, []).append(_Definition(t.text, param, literal, body, t))
            else:
                raise self.error("a declaration")
            self.eat(";")
        return participants, chains, deposits, secrets, start, main, defs

    # balances and index arithmetic
    def amount(self) -> IExpr:
        if self.tok.kind == "int":
            return IConst(self.integer())
        if self.tok.kind == "word":
            t = self.ident()
            return IVar(t.text, t)
        if self.at("("):
            self.i += 1
            e = self.iexpr()
            self.eat(")")
            return e
        raise self.error("amount")

    def iexpr(self) -> IExpr:
        e = self.iterm()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            e = IBin(op, e, self.iterm())
        return e

    def iterm(self) -> IExpr:
        e = self.amount()
        while self.at("*"):
            self.i += 1
            e = IBin("*", e, self.amount())
        return e

    def balance(self) -> BalanceT:
        tok = self.tok
        parts = [(self.amount(), self.ident("chain name").text)]
        while self.at("+"):
            self.i += 1
            parts.append((self.amount(), self.ident("chain name").text))
        return BalanceT(tuple(parts), tok)

    # contracts
    def choice(self) -> Term:
        tok = self.tok
        items = [self.item()]
        while self.at(">>"):
            self.i += 1
            items.append(self.item())
        return items[0] if len(items) == 1 else ChoiceT(tuple(items), tok)

    def item(self) -> Term:
        tok = self.tok
        if self.at("withdraw"):
            self.i += 1
            self.eat("(")
            assigns = [self.assignment()]
            while self.at(","):
                self.i += 1
                assigns.append(self.assignment())
            self.eat(")")
            return WithdrawT(tuple(assigns), tok)
        if self.at("split"):
            self.i += 1
            self.eat("(")
            branches = [self.branch()]
            while self.at(","):
                self.i += 1
                branches.append(self.branch())
            self.eat(")")
            return SplitT(tuple(branches), tok)
        if self.at("auth"):
            self.i += 1
            self.eat("(")
            signers = tuple(n.text for n in self.names())
            self.eat(")")
            return AuthT(signers, self.item(), tok)
        if self.at("reveal") or self.at("reveal*"):
            starred = self.tok.text == "reveal*"
            self.i += 1
            secrets = tuple(n.text for n in self.names())
            pred: Predicate = PTrue()
            if self.at("if"):
                self.i += 1
                pred = self.predicate()
            if starred:
                pred = conjunction([*(bit_range(s) for s in secrets), pred])
            self.eat("then")
            return RevealT(secrets, pred, self.item(), tok)
        if self.at("("):
            self.i += 1
            c = self.choice()
            self.eat(")")
            return c
        if self.tok.kind == "word":
            name = self.ident()
            index = None
            if self.at("["):
                self.i += 1
                index = self.iexpr()
                self.eat("]")
            return RefT(name.text, index, tok)
        raise self.error("a contract")

    def assignment(self) -> tuple[BalanceT, str]:
        bal = self.balance()
        self.eat("->")
        return bal, self.ident("participant").text

    def branch(self) -> tuple[BalanceT, Term]:
        bal = self.balance()
        self.eat("->")
        return bal, self.item()

    # predicates
    def predicate(self) -> Predicate:
        p = self.punary()
        while self.at("and"):
            self.i += 1
            p = PAnd(p, self.punary())
        return p

    def punary(self) -> Predicate:
        if self.at("not"):
            self.i += 1
            return PNot(self.punary())
        if self.at("true"):
            self.i += 1
            return PTrue()
        if self.at("("):
            saved = self.i
            try:
                self.i += 1
                p = self.predicate()
                self.eat(")")
                if not self.tok.text in ("=", "!=", "<", "<=", ">", ">=", "+", "-"):
                    return p
            except ParseError:
                pass
            self.i = saved
        left = self.expr()
        op = self.tok
        if op.text not in ("=", "!=", "<", "<=", ">", ">=") or op.kind != "sym":
            raise self.error("comparison operator")
        self.i += 1
        right = self.expr()
        return {
            "=": lambda: PEq(left, right),
            "!=": lambda: PNot(PEq(left, right)),
            "<": lambda: PLt(left, right),
            "<=": lambda: PNot(PLt(right, left)),
            ">": lambda: PLt(right, left),
            ">=": lambda: PNot(PLt(left, right)),
        }[op.text]()

    def expr(self):
        e = self.eterm()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            r = self.eterm()
            e = EAdd(e, r) if op == "+" else ESub(e, r)
        return e

    def eterm(self):
        if self.tok.kind == "int":
            return EConst(self.integer())
        if self.at("|"):
            self.i += 1
            name = self.ident("secret name").text
            self.eat("|")
            return ELen(name)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.eat(")")
            return e
        raise self.error("expression")


def bit_range(secret: str) -> Predicate:
    """``0 <= |s| <= 1``, the condition attached by ``reveal*``."""
    return PAnd(PNot(PLt(ELen(secret), EConst(0))), PNot(PLt(EConst(1), ELen(secret))))


# --- resolution ----------------------------------------------------------------


class _Expander:
    def __init__(self, src: SourceFile, defs: dict[str, list[_Definition]], chains: list[str], bound: int):
        self.src = src
        self.defs = defs
        self.chains = chains
        self.bound = bound
        self.stack: list[tuple[str, int | None]] = []

    def fail(self, msg: str, tok: Token) -> ParseError:
        return ParseError(msg, tok.line, tok.col, self.src.origin)

    def ival(self, e: IExpr, env: dict[str, int]) -> int:
        if isinstance(e, IConst):
            return e.value
        if isinstance(e, IVar):
            if e.name not in env:
                raise self.fail(f"unknown index variable {e.name!r}", e.tok)
            return env[e.name]
        a, b = self.ival(e.left, env), self.ival(e.right, env)
        return a + b if e.op == "+" else a - b if e.op == "-" else a * b

    def balance(self, b: BalanceT, env: dict[str, int]) -> Balance:
        amounts = {c: 0 for c in self.chains}
        for e, chain in b.parts:
            if chain not in amounts:
                raise self.fail(f"unknown chain {chain!r}", b.tok)
            v = self.ival(e, env)
            if v < 0:
                raise self.fail(f"negative amount {v} on {chain}", b.tok)
            amounts[chain] += v
        return Balance(amounts)

    def expand_ref(self, ref: RefT, env: dict[str, int]) -> tuple[Term, dict[str, int]]:
        if ref.name not in self.defs:
            raise self.fail(f"undefined contract {ref.name!r}", ref.tok)
        index = None if ref.index is None else self.ival(ref.index, env)
        candidates = self.defs[ref.name]
        chosen = None
        if index is not None:
            chosen = next((d for d in candidates if d.literal == index), None)
            if chosen is None:
                chosen = next((d for d in candidates if d.param is not None), None)
        else:
            chosen = next((d for d in candidates if d.param is None and d.literal is None), None)
        if chosen is None:
            raise self.fail(f"no definition of {ref.name!r} matches index {index}", ref.tok)
        for name, idx in self.stack:
            if name == ref.name and (index is None or idx is None or index >= idx):
                raise MacroRecursionError(
                    f"recursive use of {ref.name!r} without a strictly decreasing index",
                    ref.tok.line, ref.tok.col, self.src.origin,
                )
        if len(self.stack) >= self.bound:
            raise MacroRecursionError(
                f"macro expansion exceeded the bound of {self.bound}", ref.tok.line, ref.tok.col, self.src.origin
            )
        inner_env = dict(env)
        if chosen.param is not None:
            inner_env[chosen.param] = index
        return chosen.body, inner_env

    def contract(self, t: Term, env: dict[str, int]) -> Contract:
        if isinstance(t, RefT):
            body, inner = self.expand_ref(t, env)
            self.stack.append((t.name, None if t.index is None else self.ival(t.index, env)))
            try:
                return self.contract(body, inner)
            finally:
                self.stack.pop()
        if isinstance(t, WithdrawT):
            return self.withdraw(t, env)
        if isinstance(t, ChoiceT):
            options: list[Guarded] = []
            for item in t.items[:-1]:
                options.extend(self.options(item, env))
            tail = self.contract(t.items[-1], env)
            for d in reversed(options):
                tail = PriorityChoice(d, tail)
            return tail
        raise self.fail("a contract must end with a withdraw", t.tok)

    def options(self, t: Term, env: dict[str, int]) -> list[Guarded]:
        """Guarded options contributed by a non-final item of a priority choice."""
        if isinstance(t, RefT):
            body, inner = self.expand_ref(t, env)
            idx = None if t.index is None else self.ival(t.index, env)
            self.stack.append((t.name, idx))
            try:
                return self.options(body, inner)
            finally:
                self.stack.pop()
        if isinstance(t, ChoiceT):
            out: list[Guarded] = []
            for item in t.items:
                out.extend(self.options(item, env))
            return out
        return [self.guarded(t, env)]

    def guarded(self, t: Term, env: dict[str, int]) -> Guarded:
        if isinstance(t, WithdrawT):
            return self.withdraw(t, env)
        if isinstance(t, SplitT):
            return Split(tuple((self.balance(b, env), self.contract(c, env)) for b, c in t.branches))
        if isinstance(t, AuthT):
            return Auth(t.signers, self.guarded(t.inner, env))
        if isinstance(t, RevealT):
            return Reveal(t.secrets, t.predicate, self.contract(t.continuation, env))
        if isinstance(t, RefT):
            opts = self.options(t, env)
            if len(opts) != 1:
                raise self.fail(f"{t.name!r} is a priority choice, not a single guarded contract", t.tok)
            return opts[0]
        raise self.fail("a guarded contract", t.tok)

    def withdraw(self, t: WithdrawT, env: dict[str, int]) -> Withdraw:
        return Withdraw(tuple((who, self.balance(b, env)) for b, who in t.assignments))


def parse_advertisement(src: SourceFile | str, macro_bound: int = DEFAULT_MACRO_BOUND) -> Advertisement:
    """Parse a ``.bx`` source into an advertisement with every definition inlined."""
    if isinstance(src, str):
        src = SourceFile(src)
    parser = _Parser(src)
    participants, chains, deposits, secrets, start, main, defs = parser.parse_file()
    eof = parser.tok

    def fail(msg: str, tok: Token = eof) -> ParseError:
        return ParseError(msg, tok.line, tok.col, src.origin)

    if not chains:
        raise fail("missing 'chains' declaration")
    if len(set(chains)) != len(chains):
        raise fail("duplicate chain names")
    if main is None:
        raise fail("missing 'contract' declaration")
    expander = _Expander(src, defs, chains, macro_bound)

    deps: list[Deposit] = []
    used_names: set[str] = set()
    per_owner: dict[str, int] = {}
    for who, bal, names in deposits:
        if participants and who.text not in participants:
            raise fail(f"undeclared participant {who.text!r}", who)
        balance = expander.balance(bal, {})
        if names and len(names) != len(chains):
            raise fail(f"deposit of {who.text} needs one name per chain", names[0])
        k = per_owner.get(who.text, 0)
        per_owner[who.text] = k + 1
        suffix = f"_{k}" if k else ""
        chain_names = tuple(
            (c, names[i].text if names else f"{who.text}_{c}{suffix}") for i, c in enumerate(chains)
        )
        for _, n in chain_names:
            if n in used_names:
                raise fail(f"duplicate deposit name {n!r}", who)
            used_names.add(n)
        deps.append(Deposit(who.text, balance, chain_names))
    secret_pairs: list[tuple[str, str]] = []
    for who, name in secrets:
        if any(name.text == s for _, s in secret_pairs):
            raise fail(f"duplicate secret name {name.text!r}", name)
        secret_pairs.append((who.text, name.text))
    t0, root = start if start is not None else (0, "k0")
    contract = expander.contract(main, {})
    pre = Precondition(tuple(deps), tuple(secret_pairs), t0, root, tuple(chains), tuple(participants))
    return Advertisement(pre, contract, tuple(defs))


def parse_file(path: str | Path, macro_bound: int = DEFAULT_MACRO_BOUND) -> Advertisement:
    return parse_advertisement(SourceFile.from_path(path), macro_bound)


# --- pretty printing -------------------------------------------------------------


def _balance(b: Balance) -> str:
    return " + ".join(f"{v} {c}" for c, v in b)


def _expr(e, nested: bool = False) -> str:
    if isinstance(e, EConst):
        return str(e.value) if e.value >= 0 else f"(0 - {-e.value})"
    if isinstance(e, ELen):
        return f"|{e.secret}|"
    op = "+" if isinstance(e, EAdd) else "-"
    text = f"{_expr(e.left)} {op} {_expr(e.right, True)}"
    return f"({text})" if nested else text


def print_predicate(p: Predicate) -> str:
    if isinstance(p, PTrue):
        return "true"
    if isinstance(p, PAnd):
        right = print_predicate(p.right)
        if isinstance(p.right, PAnd):
            right = f"({right})"
        return f"{print_predicate(p.left)} and {right}"
    if isinstance(p, PNot):
        inner = print_predicate(p.inner)
        return f"not ({inner})" if isinstance(p.inner, PAnd) else f"not {inner}"
    op = "=" if isinstance(p, PEq) else "<"
    return f"{_expr(p.left)} {op} {_expr(p.right)}"


def print_contract(c: Contract) -> str:
    parts = []
    while isinstance(c, PriorityChoice):
        parts.append(print_guarded(c.left))
        c = c.right
    parts.append(_withdraw(c))
    return " >> ".join(parts)


def _item(c: Contract) -> str:
    return _withdraw(c) if isinstance(c, Withdraw) else f"({print_contract(c)})"


def _withdraw(w: Withdraw) -> str:
    return "withdraw(" + ", ".join(f"{_balance(b)} -> {who}" for who, b in w.assignments) + ")"


def print_guarded(d: Guarded) -> str:
    if isinstance(d, Withdraw):
        return _withdraw(d)
    if isinstance(d, Split):
        return "split(" + ", ".join(f"{_balance(b)} -> {_item(c)}" for b, c in d.branches) + ")"
    if isinstance(d, Auth):
        return f"auth({', '.join(d.signers)}) {print_guarded(d.inner)}"
    if isinstance(d, Reveal):
        cond = "" if isinstance(d.predicate, PTrue) else f" if {print_predicate(d.predicate)}"
        return f"reveal {', '.join(d.secrets)}{cond} then {_item(d.continuation)}"
    raise TypeError(f"not a guarded contract: {d!r}")


def pretty_print(adv: Advertisement) -> str:
    pre = adv.pre
    lines = []
    names = list(pre.declared) or list(pre.participants)
    for _, owner in ((None, o) for o, _ in pre.secrets):
        if owner not in names:
            names.append(owner)
    if names:
        lines.append(f"participants {', '.join(names)};")
    lines.append(f"chains {', '.join(pre.chains)};")
    for d in pre.deposits:
        lines.append(f"deposit {d.participant}: {_balance(d.balance)} as {', '.join(n for _, n in d.names)};")
    for owner, s in pre.secrets:
        lines.append(f"secret {owner}: {s};")
    lines.append(f"start {pre.t0} as {pre.root};")
    lines.append(f"contract {print_contract(adv.contract)};")
    return "\n".join(lines) + "\n"

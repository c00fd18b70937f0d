"""Core language for the PCFG SET string-edit task.

Sequences are prefix-notation programs over ten string-edit functions and
uppercase literal symbols, e.g. ``append swap F G H , repeat I J``.  This
module owns tokenisation, parsing, rendering, per-sequence statistics, and
the ground-truth interpreter.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence, Union

SEPARATOR = ","

# One uppercase letter, optionally suffixed by an integer 1..19.
_LITERAL_RE = re.compile(r"[A-Z](?:1[0-9]|[1-9])?")


class LanguageError(Exception):
    """Base class for tokenisation, parsing and interpretation errors."""


class UnknownToken(LanguageError):
    """A piece of input is neither a function, a separator, nor a literal."""

    def __init__(self, piece: str, position: int | None = None):
        self.piece = piece
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown token {piece!r}{where}")


class UnexpectedEnd(LanguageError):
    """Input ended while a function still expected an argument."""

    def __init__(self, position: int):
        self.position = position
        super().__init__(f"unexpected end of input at position {position}")


class UnexpectedToken(LanguageError):
    """A token that cannot start or continue a constituent at this point."""

    def __init__(self, token: "Token", position: int):
        self.token = token
        self.position = position
        super().__init__(f"unexpected token {token.text!r} at position {position}")


class ArityMismatch(LanguageError):
    """A function was applied to the wrong number of arguments."""

    def __init__(self, name: str, expected: int, got: int):
        self.name = name
        self.expected = expected
        self.got = got
        super().__init__(f"{name} expects {expected} argument(s), got {got}")


class EmptyArgument(LanguageError):
    """A function received an empty string argument."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"{name} received an empty argument")


class TokenKind(Enum):
    FUNCTION = "function"
    LITERAL = "literal"
    SEPARATOR = "separator"


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokenKind
    text: str

    def __str__(self) -> str:
        return self.text


Symbols = tuple[str, ...]


@dataclass(frozen=True)
class FunctionSymbol:
    """A named string-edit function with fixed arity.

    Equality and hashing go by (name, arity) so that a synonym registered
    with the same underlying behaviour still compares as a distinct symbol.
    """

    name: str
    arity: int
    fn: Callable[..., Symbols] = field(compare=False, repr=False)

    def __call__(self, *args: Symbols) -> Symbols:
        return self.fn(*args)


# --- interpretation functions -------------------------------------------
#
# All operate on non-empty tuples of literal symbols and return tuples.

def _copy(x: Symbols) -> Symbols:
    return x


def _reverse(x: Symbols) -> Symbols:
    return tuple(reversed(x))


def _shift(x: Symbols) -> Symbols:
    # First symbol moves to the end; identity on single symbols.
    return x[1:] + x[:1]


def _swap(x: Symbols) -> Symbols:
    # First and last symbols trade places; identity on single symbols.
    if len(x) == 1:
        return x
    return (x[-1],) + x[1:-1] + (x[0],)


def _repeat(x: Symbols) -> Symbols:
    return x + x


def _echo(x: Symbols) -> Symbols:
    return x + (x[-1],)


def _append(x: Symbols, y: Symbols) -> Symbols:
    return x + y


def _prepend(x: Symbols, y: Symbols) -> Symbols:
    return y + x


def _remove_first(x: Symbols, y: Symbols) -> Symbols:
    return y


def _remove_second(x: Symbols, y: Symbols) -> Symbols:
    return x


UNARY_FUNCTIONS = ("copy", "reverse", "shift", "echo", "swap", "repeat")
BINARY_FUNCTIONS = ("append", "prepend", "remove_first", "remove_second")

_SEMANTICS: dict[str, tuple[int, Callable[..., Symbols]]] = {
    "copy": (1, _copy),
    "reverse": (1, _reverse),
    "shift": (1, _shift),
    "echo": (1, _echo),
    "swap": (1, _swap),
    "repeat": (1, _repeat),
    "append": (2, _append),
    "prepend": (2, _prepend),
    "remove_first": (2, _remove_first),
    "remove_second": (2, _remove_second),
}


class FunctionRegistry:
    """Closed set of function symbols known to the tokeniser and parser.

    Immutable; ``with_synonyms`` returns an extended copy so concurrent
    users of the default registry never observe mutation.
    """

    def __init__(self, symbols: Iterable[FunctionSymbol]):
        self._by_name: dict[str, FunctionSymbol] = {}
        for sym in symbols:
            if sym.name in self._by_name:
                raise ValueError(f"duplicate function name {sym.name!r}")
            self._by_name[sym.name] = sym

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self) -> Iterator[FunctionSymbol]:
        return iter(self._by_name.values())

    def lookup(self, name: str) -> FunctionSymbol:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"no function named {name!r}") from None

    def names(self) -> tuple[str, ...]:
        return tuple(self._by_name)

    def unary_names(self) -> tuple[str, ...]:
        return tuple(n for n, s in self._by_name.items() if s.arity == 1)

    def binary_names(self) -> tuple[str, ...]:
        return tuple(n for n, s in self._by_name.items() if s.arity == 2)

    def with_synonyms(self, synonym_map: dict[str, str]) -> "FunctionRegistry":
        """Extend with synonyms sharing the base function's behaviour.

        ``synonym_map`` maps base name -> synonym name.  Synonym names must
        be fresh and must not collide with literals or the separator.
        """
        extra = []
        for base, syn in synonym_map.items():
            original = self.lookup(base)
            if syn in self or _LITERAL_RE.fullmatch(syn) or syn == SEPARATOR:
                raise ValueError(f"invalid synonym name {syn!r}")
            extra.append(FunctionSymbol(syn, original.arity, original.fn))
        return FunctionRegistry(list(self._by_name.values()) + extra)


DEFAULT_REGISTRY = FunctionRegistry(
    FunctionSymbol(name, arity, fn) for name, (arity, fn) in _SEMANTICS.items()
)


# --- syntax trees --------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    """A maximal run of literal symbols (a string argument)."""

    symbols: Symbols

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("leaf must hold at least one symbol")


@dataclass(frozen=True)
class Apply:
    function: FunctionSymbol
    args: tuple["SyntaxTree", ...]

    def __post_init__(self):
        if len(self.args) != self.function.arity:
            raise ArityMismatch(self.function.name, self.function.arity, len(self.args))


SyntaxTree = Union[Leaf, Apply]


@dataclass(frozen=True, slots=True)
class SequenceStats:
    length: int
    depth: int
    num_functions: int


# --- tokenisation and parsing --------------------------------------------

def classify(piece: str, registry: FunctionRegistry = DEFAULT_REGISTRY,
             position: int | None = None) -> Token:
    """Classify one whitespace-delimited piece into a Token."""
    if piece == SEPARATOR:
        return Token(TokenKind.SEPARATOR, piece)
    if piece in registry:
        return Token(TokenKind.FUNCTION, piece)
    if _LITERAL_RE.fullmatch(piece):
        return Token(TokenKind.LITERAL, piece)
    raise UnknownToken(piece, position)


def is_literal_symbol(piece: str) -> bool:
    """True for pieces shaped like alphabet symbols (A, Q7, Z19, ...)."""
    return _LITERAL_RE.fullmatch(piece) is not None


def tokenize(text: str, registry: FunctionRegistry = DEFAULT_REGISTRY) -> list[Token]:
    """Split on whitespace and classify each piece.

    >>> [t.text for t in tokenize("append A B , C")]
    ['append', 'A', 'B', ',', 'C']
    """
    return [classify(piece, registry, i) for i, piece in enumerate(text.split())]


def _coerce_tokens(tokens: Sequence[Token | str],
                   registry: FunctionRegistry) -> list[Token]:
    out = []
    for i, tok in enumerate(tokens):
        if isinstance(tok, Token):
            out.append(tok)
        else:
            out.append(classify(tok, registry, i))
    return out


def parse(tokens: Sequence[Token | str],
          registry: FunctionRegistry = DEFAULT_REGISTRY) -> SyntaxTree:
    """Parse a token sequence into a syntax tree.

    Accepts Token objects or raw strings.  Literal runs are greedy: a run
    of adjacent literals forms a single Leaf, terminated only by a
    separator or the end of input.  The entire sequence must form exactly
    one constituent.
    """
    toks = _coerce_tokens(tokens, registry)
    pos = 0

    def peek() -> Token | None:
        return toks[pos] if pos < len(toks) else None

    def parse_s() -> SyntaxTree:
        nonlocal pos
        tok = peek()
        if tok is None:
            raise UnexpectedEnd(pos)
        if tok.kind is TokenKind.FUNCTION:
            fn = registry.lookup(tok.text)
            pos += 1
            first = parse_s()
            if fn.arity == 1:
                return Apply(fn, (first,))
            sep = peek()
            if sep is None:
                raise UnexpectedEnd(pos)
            if sep.kind is not TokenKind.SEPARATOR:
                raise UnexpectedToken(sep, pos)
            pos += 1
            second = parse_s()
            return Apply(fn, (first, second))
        if tok.kind is TokenKind.LITERAL:
            run = [tok.text]
            pos += 1
            while (nxt := peek()) is not None and nxt.kind is TokenKind.LITERAL:
                run.append(nxt.text)
                pos += 1
            return Leaf(tuple(run))
        raise UnexpectedToken(tok, pos)

    tree = parse_s()
    if pos != len(toks):
        raise UnexpectedToken(toks[pos], pos)
    return tree


def parse_text(text: str, registry: FunctionRegistry = DEFAULT_REGISTRY) -> SyntaxTree:
    return parse(tokenize(text, registry), registry)


def render(tree: SyntaxTree) -> list[Token]:
    """Emit the prefix-notation token sequence of a tree.

    ``parse(render(t))`` reproduces ``t`` for every valid tree.
    """
    out: list[Token] = []

    def walk(node: SyntaxTree) -> None:
        if isinstance(node, Leaf):
            out.extend(Token(TokenKind.LITERAL, s) for s in node.symbols)
            return
        out.append(Token(TokenKind.FUNCTION, node.function.name))
        walk(node.args[0])
        if len(node.args) == 2:
            out.append(Token(TokenKind.SEPARATOR, SEPARATOR))
            walk(node.args[1])

    walk(tree)
    return out


def render_text(tree: SyntaxTree) -> str:
    return " ".join(t.text for t in render(tree))


def stats(tree: SyntaxTree) -> SequenceStats:
    """Length (all rendered tokens), depth (nested applications on the
    deepest path), and total number of function applications.

    A pure string has depth 0; a single function application has depth 1.
    """

    def walk(node: SyntaxTree) -> tuple[int, int, int]:
        if isinstance(node, Leaf):
            return len(node.symbols), 0, 0
        length, depth, count = 1, 0, 1
        for i, arg in enumerate(node.args):
            al, ad, ac = walk(arg)
            length += al + (1 if i else 0)  # separator before the second arg
            depth = max(depth, ad)
            count += ac
        return length, depth + 1, count

    length, depth, count = walk(tree)
    return SequenceStats(length=length, depth=depth, num_functions=count)


def apply_function(fn: FunctionSymbol, args: Sequence[Sequence[str]]) -> Symbols:
    """Apply one function to already-evaluated string arguments."""
    if len(args) != fn.arity:
        raise ArityMismatch(fn.name, fn.arity, len(args))
    coerced = []
    for a in args:
        t = tuple(a)
        if not t:
            raise EmptyArgument(fn.name)
        coerced.append(t)
    return fn(*coerced)


def evaluate(tree: SyntaxTree) -> Symbols:
    """Ground-truth interpretation of a tree as a symbol tuple.

    >>> " ".join(evaluate(parse_text("repeat A B C")))
    'A B C A B C'
    """
    if isinstance(tree, Leaf):
        return tree.symbols
    return apply_function(tree.function, [evaluate(a) for a in tree.args])


def evaluate_text(text: str, registry: FunctionRegistry = DEFAULT_REGISTRY) -> str:
    return " ".join(evaluate(parse_text(text, registry)))

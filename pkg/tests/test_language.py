"""Interpreter and parser ground truth.

Expected strings in this file were derived by hand from the function
definitions and are frozen here as the oracle for the implementation.
"""

import pytest
from hypothesis import given, strategies as st

from pcfgset.language import (
    DEFAULT_REGISTRY,
    Apply,
    ArityMismatch,
    EmptyArgument,
    Leaf,
    SequenceStats,
    Token,
    TokenKind,
    UnexpectedEnd,
    UnexpectedToken,
    UnknownToken,
    apply_function,
    evaluate,
    evaluate_text,
    parse,
    parse_text,
    render,
    render_text,
    stats,
    tokenize,
)


# --- single-function semantics, hand-derived ------------------------------

@pytest.mark.parametrize(
    "src,expected",
    [
        ("copy A B C", "A B C"),
        ("reverse A B C", "C B A"),
        ("shift A B C", "B C A"),
        ("swap A B C", "C B A"),
        ("swap A B C D", "D B C A"),
        ("repeat A B", "A B A B"),
        ("echo A B C", "A B C C"),
        ("append A B , C", "A B C"),
        ("prepend A B , C", "C A B"),
        ("remove_first A B , C D", "C D"),
        ("remove_second A B , C D", "A B"),
    ],
)
def test_single_function(src, expected):
    assert evaluate_text(src) == expected


@pytest.mark.parametrize(
    "src,expected",
    [
        # identity collapses on single-symbol arguments
        ("swap A", "A"),
        ("shift A", "A"),
        ("copy A", "A"),
        ("reverse A", "A"),
        # doubling functions still double
        ("echo A", "A A"),
        ("repeat A", "A A"),
    ],
)
def test_degenerate_single_symbol(src, expected):
    assert evaluate_text(src) == expected


# --- composed sequences ----------------------------------------------------

@pytest.mark.parametrize(
    "src,expected",
    [
        ("repeat A B C", "A B C A B C"),
        ("echo remove_first D K , E F", "E F F"),
        ("append swap F G H , repeat I J", "H G F I J I J"),
        # nested compositions, worked out by hand
        ("reverse echo A B C", "C C B A"),
        ("prepend remove_first A , B , C", "C B"),
        ("echo remove_first A , B C", "B C C"),
        ("prepend reverse A B , C", "C B A"),
        ("echo append C , prepend B , A", "C A B B"),
        ("swap repeat A B", "B B A A"),
        ("append remove_second A , B , C", "A C"),
    ],
)
def test_composed(src, expected):
    assert evaluate_text(src) == expected


# --- tokenisation ----------------------------------------------------------

def test_tokenize_kinds():
    toks = tokenize("append A19 B , copy C1")
    assert [t.kind for t in toks] == [
        TokenKind.FUNCTION,
        TokenKind.LITERAL,
        TokenKind.LITERAL,
        TokenKind.SEPARATOR,
        TokenKind.FUNCTION,
        TokenKind.LITERAL,
    ]
    assert [t.text for t in toks] == ["append", "A19", "B", ",", "copy", "C1"]


@pytest.mark.parametrize("piece", ["A", "Z", "A1", "Q7", "Z19", "B10"])
def test_tokenize_valid_literals(piece):
    (tok,) = tokenize(piece)
    assert tok.kind is TokenKind.LITERAL


@pytest.mark.parametrize("piece", ["A0", "A20", "a", "AB", "1A", "Copy", "append_", "Z99"])
def test_tokenize_rejects(piece):
    with pytest.raises(UnknownToken):
        tokenize(piece)


# --- parsing ---------------------------------------------------------------

def test_parse_greedy_literal_run():
    tree = parse_text("copy A B C")
    assert tree == Apply(DEFAULT_REGISTRY.lookup("copy"), (Leaf(("A", "B", "C")),))


def test_parse_binary_structure():
    tree = parse_text("append swap F G H , repeat I J")
    swap = DEFAULT_REGISTRY.lookup("swap")
    rep = DEFAULT_REGISTRY.lookup("repeat")
    app = DEFAULT_REGISTRY.lookup("append")
    assert tree == Apply(
        app,
        (Apply(swap, (Leaf(("F", "G", "H")),)), Apply(rep, (Leaf(("I", "J")),))),
    )


def test_parse_accepts_plain_strings():
    assert parse(["copy", "A"]) == parse_text("copy A")


@pytest.mark.parametrize(
    "src,exc",
    [
        ("append A", UnexpectedEnd),          # missing separator and second arg
        ("copy", UnexpectedEnd),
        ("copy copy", UnexpectedEnd),
        ("A , B", UnexpectedToken),           # separator outside any binary call
        (", A", UnexpectedToken),
        ("append A , B C copy D", UnexpectedToken),  # literal run cannot touch a call
        ("append A , , B", UnexpectedToken),
        ("copy A copy B", UnexpectedToken),   # trailing second constituent
    ],
)
def test_parse_errors(src, exc):
    with pytest.raises(exc):
        parse_text(src)


def test_parse_error_positions():
    with pytest.raises(UnexpectedToken) as ei:
        parse_text("A , B")
    assert ei.value.position == 1
    with pytest.raises(UnexpectedEnd) as ei2:
        parse_text("append A")
    assert ei2.value.position == 2


# --- rendering and stats ---------------------------------------------------

def test_render_text_round_trip_examples():
    for src in ["copy A", "append swap F G H , repeat I J", "A B C"]:
        assert render_text(parse_text(src)) == src


@pytest.mark.parametrize(
    "src,length,depth,nfn",
    [
        ("A B", 2, 0, 0),
        ("copy A", 2, 1, 1),
        ("append A , B", 4, 1, 1),
        ("echo remove_first D K , E F", 7, 2, 2),
        ("append swap F G H , repeat I J", 9, 2, 3),
        ("prepend remove_first A , B , C", 7, 2, 2),
        ("echo append C , prepend B , A", 8, 3, 3),
    ],
)
def test_stats(src, length, depth, nfn):
    s = stats(parse_text(src))
    assert s == SequenceStats(length=length, depth=depth, num_functions=nfn)
    assert s.length == len(tokenize(src))


# --- apply_function validation --------------------------------------------

def test_apply_function_arity():
    app = DEFAULT_REGISTRY.lookup("append")
    with pytest.raises(ArityMismatch):
        apply_function(app, [("A",)])
    cp = DEFAULT_REGISTRY.lookup("copy")
    with pytest.raises(ArityMismatch):
        apply_function(cp, [("A",), ("B",)])


def test_apply_function_empty_argument():
    cp = DEFAULT_REGISTRY.lookup("copy")
    with pytest.raises(EmptyArgument):
        apply_function(cp, [()])


# --- synonym registry ------------------------------------------------------

def test_synonyms_share_semantics():
    reg = DEFAULT_REGISTRY.with_synonyms({"swap": "swap_syn", "append": "append_syn"})
    assert evaluate_text("swap_syn A B C", reg) == "C B A"
    assert evaluate_text("append_syn A , B", reg) == "A B"
    # the default registry is untouched
    with pytest.raises(UnknownToken):
        tokenize("swap_syn A")


def test_synonym_name_collisions_rejected():
    with pytest.raises(ValueError):
        DEFAULT_REGISTRY.with_synonyms({"swap": "copy"})
    with pytest.raises(ValueError):
        DEFAULT_REGISTRY.with_synonyms({"swap": "A1"})
    with pytest.raises(KeyError):
        DEFAULT_REGISTRY.with_synonyms({"nope": "nope_syn"})


# --- properties ------------------------------------------------------------

_SYMBOLS = [c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ"] + ["A1", "B3", "Q17", "Z19"]

_leaves = st.builds(
    lambda syms: Leaf(tuple(syms)),
    st.lists(st.sampled_from(_SYMBOLS), min_size=1, max_size=5),
)


def _apply_nodes(children):
    unary = st.builds(
        lambda name, a: Apply(DEFAULT_REGISTRY.lookup(name), (a,)),
        st.sampled_from(["copy", "reverse", "shift", "echo", "swap", "repeat"]),
        children,
    )
    binary = st.builds(
        lambda name, a, b: Apply(DEFAULT_REGISTRY.lookup(name), (a, b)),
        st.sampled_from(["append", "prepend", "remove_first", "remove_second"]),
        children,
        children,
    )
    return unary | binary


_trees = st.recursive(_leaves, _apply_nodes, max_leaves=12)


@given(_trees)
def test_parse_render_round_trip(tree):
    assert parse(render(tree)) == tree


@given(_trees)
def test_render_as_text_round_trip(tree):
    text = render_text(tree)
    assert parse_text(text) == tree
    assert render_text(parse_text(text)) == text


@given(_trees)
def test_evaluate_emits_only_input_symbols(tree):
    out = evaluate(tree)
    assert len(out) >= 1
    leaf_symbols = set()

    def collect(node):
        if isinstance(node, Leaf):
            leaf_symbols.update(node.symbols)
        else:
            for a in node.args:
                collect(a)

    collect(tree)
    assert set(out) <= leaf_symbols


_args = st.lists(st.sampled_from(_SYMBOLS), min_size=1, max_size=8).map(tuple)


@given(_args)
def test_unary_length_laws(x):
    e = evaluate
    assert e(Apply(DEFAULT_REGISTRY.lookup("copy"), (Leaf(x),))) == x
    assert len(e(Apply(DEFAULT_REGISTRY.lookup("reverse"), (Leaf(x),)))) == len(x)
    assert len(e(Apply(DEFAULT_REGISTRY.lookup("shift"), (Leaf(x),)))) == len(x)
    assert len(e(Apply(DEFAULT_REGISTRY.lookup("swap"), (Leaf(x),)))) == len(x)
    assert len(e(Apply(DEFAULT_REGISTRY.lookup("repeat"), (Leaf(x),)))) == 2 * len(x)
    assert len(e(Apply(DEFAULT_REGISTRY.lookup("echo"), (Leaf(x),)))) == len(x) + 1


@given(_args)
def test_permutations_preserve_multiset(x):
    for name in ("reverse", "shift", "swap"):
        out = evaluate(Apply(DEFAULT_REGISTRY.lookup(name), (Leaf(x),)))
        assert sorted(out) == sorted(x)


@given(_args)
def test_reverse_involution(x):
    rev = DEFAULT_REGISTRY.lookup("reverse")
    assert evaluate(Apply(rev, (Apply(rev, (Leaf(x),)),))) == x


@given(_args)
def test_swap_involution(x):
    sw = DEFAULT_REGISTRY.lookup("swap")
    assert evaluate(Apply(sw, (Apply(sw, (Leaf(x),)),))) == x


@given(_args, _args)
def test_binary_length_laws(x, y):
    e = evaluate
    reg = DEFAULT_REGISTRY
    assert e(Apply(reg.lookup("append"), (Leaf(x), Leaf(y)))) == x + y
    assert e(Apply(reg.lookup("prepend"), (Leaf(x), Leaf(y)))) == y + x
    assert e(Apply(reg.lookup("remove_first"), (Leaf(x), Leaf(y)))) == y
    assert e(Apply(reg.lookup("remove_second"), (Leaf(x), Leaf(y)))) == x


def test_token_str():
    assert str(Token(TokenKind.FUNCTION, "copy")) == "copy"

import numpy as np
import pytest

from gvo.expr import (
    COORD_NAMES,
    AddressOverflowError,
    BaseRef,
    BinOp,
    BlockDimRef,
    CoordRef,
    ExprError,
    ExprSyntaxError,
    IntConstant,
    ThreadCoord,
    affine_parts,
    evaluate,
    evaluate_bulk,
    fold,
    parse,
    render,
)

BLOCK = (32, 4, 2)


def ev1(expr, coord, bases=None):
    return evaluate(expr, [coord], BLOCK, bases or {})[0]


def test_identity_map_over_tidx():
    expr = parse("tidx")
    coords = [ThreadCoord(tidx=t) for t in range(4)]
    assert evaluate(expr, coords, BLOCK, {}) == [0, 1, 2, 3]


def test_constant_fold_example():
    expr = parse("A + (tidx + 1) * 8")
    assert ev1(expr, ThreadCoord(tidx=0), {"A": 0}) == 8


def test_cache_line_index_with_negative_alignment():
    # address -1 + tidx + (tidy+1)*100 at (5, 2), then element floor-div 4
    addr = parse("A + tidx + (tidy + 1) * 100", fields=["A"])
    assert ev1(addr, ThreadCoord(tidx=5, tidy=2), {"A": -1}) == 305 - 1
    line = fold("//", addr, IntConstant(4))
    assert ev1(line, ThreadCoord(tidx=5, tidy=2), {"A": -1}) == 76


def test_parse_field_base_and_structure():
    expr = parse("A + (tidx + bidx*BX)*8")
    assert isinstance(expr, BinOp) and expr.op == "+"
    assert expr.left == BaseRef("A")


def test_parse_scalar_hand_evaluation():
    expr = parse("phi + ((tidx+1) + tidy*642)*8")
    assert ev1(expr, ThreadCoord(), {"phi": 0}) == 8


def test_round_trip_examples():
    for text in (
        "A + (tidx + bidx*BX)*8",
        "src + ((tidx + 4) + (tidy - 3) * 640 + tidz * 327680) * 8",
        "a % 7 + b // 32 - -5",
        "(tidx + tidy) * (bidx + 1)",
    ):
        tree = parse(text)
        assert parse(render(tree)) == tree


def test_division_by_zero_rejected_at_construction():
    with pytest.raises(ExprError):
        parse("tidx // 0")
    with pytest.raises(ExprError):
        parse("tidx % -3")
    with pytest.raises(ExprError):
        BinOp("//", CoordRef("tidx"), IntConstant(0))
    with pytest.raises(ExprError):
        BinOp("%", CoordRef("tidx"), CoordRef("tidy"))


def test_syntax_error_has_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse("tidx + + 3")
    assert err.value.position == 7
    with pytest.raises(ExprSyntaxError):
        parse("tidx + (tidy * 2")
    with pytest.raises(ExprSyntaxError):
        parse("")


def test_unknown_identifier_with_known_fields():
    parse("A + tidx", fields=["A"])
    with pytest.raises(ExprSyntaxError):
        parse("B + tidx", fields=["A"])


def test_unknown_base_at_evaluation():
    expr = parse("A + tidx")
    with pytest.raises(ExprError):
        evaluate(expr, [ThreadCoord()], BLOCK, {})


def test_block_dim_bound_at_evaluation_time():
    expr = parse("tidx + bidx * BX")
    c = ThreadCoord(tidx=3, bidx=2)
    assert evaluate(expr, [c], (16, 1, 1), {}) == [35]
    assert evaluate(expr, [c], (64, 1, 1), {}) == [131]


def test_purity_repeated_evaluation():
    expr = parse("src + (tidx % 5) * 8 + tidy * 100", fields=["src"])
    coords = [ThreadCoord(tidx=t, tidy=t % 3) for t in range(20)]
    first = evaluate(expr, coords, BLOCK, {"src": 64})
    for _ in range(3):
        assert evaluate(expr, coords, BLOCK, {"src": 64}) == first


def test_overflow_is_error():
    expr = fold("*", IntConstant(2**40), IntConstant(2**22))  # folds fine
    assert isinstance(expr, IntConstant)
    with pytest.raises(AddressOverflowError):
        fold("*", IntConstant(2**40), IntConstant(2**40))
    big = BinOp("*", CoordRef("tidx"), IntConstant(2**60))
    with pytest.raises(AddressOverflowError):
        evaluate(big, [ThreadCoord(tidx=9)], BLOCK, {})
    env = {name: np.array([9], dtype=np.int64) for name in COORD_NAMES}
    with pytest.raises(AddressOverflowError):
        evaluate_bulk(big, env, BLOCK, {})


def test_empty_coords():
    assert evaluate(parse("tidx"), [], BLOCK, {}) == []


def _random_tree(rng, depth=0):
    roll = rng.integers(0, 10)
    if depth >= 4 or roll < 3:
        choice = rng.integers(0, 3)
        if choice == 0:
            return IntConstant(int(rng.integers(-1000, 1000)))
        if choice == 1:
            return CoordRef(COORD_NAMES[rng.integers(0, 6)])
        return BlockDimRef(("BX", "BY", "BZ")[rng.integers(0, 3)])
    op = ("+", "-", "*", "//", "%")[rng.integers(0, 5)]
    left = _random_tree(rng, depth + 1)
    if op in ("//", "%"):
        return fold(op, left, IntConstant(int(rng.integers(1, 64))))
    if op == "*":
        # keep magnitudes bounded: one side constant
        return fold(op, left, IntConstant(int(rng.integers(-32, 33))))
    return fold(op, left, _random_tree(rng, depth + 1))


def test_bulk_equals_scalar_on_random_trees(rng):
    for _ in range(1000):
        tree = _random_tree(rng)
        n = int(rng.integers(1, 12))
        coords = [
            ThreadCoord(*(int(rng.integers(0, 64)) for _ in range(6))) for _ in range(n)
        ]
        env = {
            name: np.array([c.get(name) for c in coords], dtype=np.int64)
            for name in COORD_NAMES
        }
        scalar = evaluate(tree, coords, BLOCK, {})
        bulk = evaluate_bulk(tree, env, BLOCK, {})
        assert scalar == bulk.tolist()


def test_affine_superposition_against_numeric_extractor(rng):
    for _ in range(300):
        # build a random affine tree, then recover its coefficients
        # numerically: unit-coordinate evaluations are an independent oracle
        terms = []
        for name in COORD_NAMES:
            if rng.integers(0, 2):
                terms.append(fold("*", CoordRef(name), IntConstant(int(rng.integers(-50, 51)))))
        tree = IntConstant(int(rng.integers(-500, 501)))
        for term in terms:
            tree = fold("+", tree, term) if rng.integers(0, 2) else fold("-", tree, term)
        const = ev1(tree, ThreadCoord())
        coeffs = {}
        for name in COORD_NAMES:
            coeffs[name] = ev1(tree, ThreadCoord(**{name: 1})) - const
        parts = affine_parts(tree, BLOCK, {})
        assert parts is not None
        p_const, p_coeffs = parts
        assert p_const == const
        for name in COORD_NAMES:
            assert p_coeffs.get(name, 0) == coeffs[name]
        # superposition in each single coordinate
        for name in COORD_NAMES:
            a, b = int(rng.integers(0, 40)), int(rng.integers(0, 40))
            va = ev1(tree, ThreadCoord(**{name: a}))
            vb = ev1(tree, ThreadCoord(**{name: b}))
            vab = ev1(tree, ThreadCoord(**{name: a + b}))
            assert vab - const == (va - const) + (vb - const)


def test_affine_parts_refuses_div_mod_and_products():
    assert affine_parts(parse("tidx // 4"), BLOCK, {}) is None
    assert affine_parts(parse("tidx % 4"), BLOCK, {}) is None
    assert affine_parts(parse("tidx * tidy"), BLOCK, {}) is None
    parts = affine_parts(parse("3 * (tidx + 2) * 4"), BLOCK, {})
    assert parts == (24, {"tidx": 12})

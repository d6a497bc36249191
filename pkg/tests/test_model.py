"""Concrete tables, the table evaluator, model building, and DB emission.

The evaluator is checked two ways: against per-element count formulas
for the pointwise operators, and against a listwise reference that
expands every multiset into an explicit row list, operates on the
list, and recounts.  The two routes share no code with the evaluator.
"""

import json
import random

from tablesolve import elements
from tablesolve.congruence import CongruenceClosure
from tablesolve.model import (
    ConcreteTable,
    CounterexampleDB,
    EVAL_ROW_CEILING,
    EvalError,
    Interpretation,
    ModelFailure,
    UnsupportedValue,
    build_model,
    emit_counterexample_db,
    eval_table,
    verify_model,
)
from tablesolve.nullable import NULL, Some
from tablesolve.terms import (
    BOOL,
    INT,
    ElemFun,
    add,
    bag_sort,
    elem_sort,
    eq,
    leq,
    mcount,
    mk,
    neg,
    nullable_sort,
    num,
    set_sort,
    tuple_proj_fun,
    tuple_sort,
    var,
)

import pytest

X = var("x", INT)
SUCC = ElemFun((("x", INT),), add(X, num(1)))
ABS = ElemFun((("x", INT),), mk("max", X, neg(X)))
POS = ElemFun((("x", INT),), leq(num(1), X))

PAIR = tuple_sort(INT, INT)
SWAP = tuple_proj_fun(PAIR, (1, 0))
FST = tuple_proj_fun(PAIR, (0,))

BI = bag_sort(INT)
BP = bag_sort(PAIR)
SI = set_sort(INT)
SP = set_sort(PAIR)


def rand_table(rng, elem=INT, dom=range(-3, 4), maxn=3):
    rows = {}
    for v in dom:
        n = rng.randint(-2, maxn)
        if n > 0:
            rows[v] = n
    return ConcreteTable(elem, rows)


def rand_pairs(rng, maxn=2):
    rows = {}
    for a in range(-1, 2):
        for b in range(-1, 2):
            n = rng.randint(-1, maxn)
            if n > 0:
                rows[(a, b)] = n
    return ConcreteTable(PAIR, rows)


def expand(t):
    out = []
    for v, n in t.items():
        out.extend([v] * n)
    return out


def recount(elem, rows):
    return ConcreteTable(elem, [(v, 1) for v in rows])


# -- canonical form ------------------------------------------------------------


def test_constructor_normalizes():
    t = ConcreteTable(INT, [(3, 1), (3, 2), (5, 0), (7, -4)])
    assert t.rows == {3: 3}
    assert t.count(3) == 3 and t.count(5) == 0
    assert t.total() == 3
    assert t.columns == (INT,)
    assert ConcreteTable(BP.elem).columns == (INT, INT)


def test_equality_ignores_construction_order():
    a = ConcreteTable(INT, [(1, 2), (4, 1)])
    b = ConcreteTable(INT, [(4, 1), (1, 1), (1, 1)])
    assert a == b
    assert a.canonical() == b.canonical()


def test_canonical_text_agrees_with_equality():
    rng = random.Random(7)
    for _ in range(300):
        a = rand_table(rng)
        b = rand_table(rng)
        assert (a == b) == (a.canonical() == b.canonical())


def test_canonical_orders_mixed_values():
    t = ConcreteTable(nullable_sort(INT), [(Some(2), 1), (NULL, 2), (Some(-1), 1)])
    assert t.canonical() == "{(null . 2) ((some -1) . 1) ((some 2) . 1)}"


# -- the evaluator vs frozen values ---------------------------------------------


def _db(**tables):
    return dict(tables)


S = var("s", BI)
T = var("t", BI)


def test_map_injective_preserves_counts():
    out = eval_table(_db(s=ConcreteTable(INT, {1: 2})), mk("bag.map", S, fun=SUCC))
    assert out == ConcreteTable(INT, {2: 2})


def test_map_noninjective_sums_counts():
    # abs sends -1 and 1 to the same row, so the counts add
    src = ConcreteTable(INT, {-1: 1, 1: 1})
    out = eval_table(_db(s=src), mk("bag.map", S, fun=ABS))
    assert out == ConcreteTable(INT, {1: 2})


def test_union_distribution_identity():
    # A ⊎ B and (A ⊔ B) ⊎ (A ⊓ B) agree everywhere
    rng = random.Random(20260819)
    lhs = mk("bag.union_disjoint", S, T)
    rhs = mk("bag.union_disjoint", mk("bag.union_max", S, T),
             mk("bag.inter_min", S, T))
    for _ in range(1000):
        db = _db(s=rand_table(rng), t=rand_table(rng))
        assert eval_table(db, lhs) == eval_table(db, rhs)


def test_pointwise_count_formulas():
    rng = random.Random(99)
    ops = {
        "bag.union_max": lambda n, k: max(n, k),
        "bag.union_disjoint": lambda n, k: n + k,
        "bag.inter_min": lambda n, k: min(n, k),
        "bag.diff_subtract": lambda n, k: max(n - k, 0),
        "bag.diff_remove": lambda n, k: 0 if k >= 1 else n,
    }
    for _ in range(300):
        a, b = rand_table(rng), rand_table(rng)
        db = _db(s=a, t=b)
        for op, f in ops.items():
            out = eval_table(db, mk(op, S, T))
            for e in range(-4, 5):
                assert out.count(e) == f(a.count(e), b.count(e))


def test_setof_and_bag_literal():
    rng = random.Random(3)
    for _ in range(100):
        a = rand_table(rng)
        out = eval_table(_db(s=a), mk("bag.setof", S))
        assert out.rows == {v: 1 for v in a.rows}
    assert eval_table({}, mk("bag", num(5), num(3))) == ConcreteTable(INT, {5: 3})
    assert eval_table({}, mk("bag", num(5), num(0))).rows == {}
    assert eval_table({}, mk("bag", num(5), num(-2))).rows == {}


SP_ = var("p", BP)
TP_ = var("q", BP)


def test_product_join_filter_map_against_listwise():
    rng = random.Random(41)
    prod = mk("table.product", SP_, TP_)
    join = mk("table.join", SP_, TP_, idx=(0, 1))
    filt = mk("bag.filter", S, fun=POS)
    mapped = mk("bag.map", SP_, fun=SWAP)
    proj = mk("table.proj", SP_, idx=(1,))
    for _ in range(200):
        a, b, c = rand_pairs(rng), rand_pairs(rng), rand_table(rng)
        db = _db(p=a, q=b, s=c)
        ea, eb, ec = expand(a), expand(b), expand(c)
        assert eval_table(db, prod) == recount(
            prod.sort.elem, [v + w for v in ea for w in eb])
        assert eval_table(db, join) == recount(
            join.sort.elem, [v + w for v in ea for w in eb if v[0] == w[1]])
        assert eval_table(db, filt) == recount(INT, [v for v in ec if v >= 1])
        assert eval_table(db, mapped) == recount(
            PAIR, [(v[1], v[0]) for v in ea])
        assert eval_table(db, proj) == recount(
            tuple_sort(INT), [(v[1],) for v in ea])


RS = var("rs", SI)
RT = var("rt", SI)
RP = var("rp", SP)


def test_set_operators_stay_flat():
    rng = random.Random(8)
    terms = [
        mk("set.union", RS, RT),
        mk("set.inter", RS, RT),
        mk("set.minus", RS, RT),
        mk("set.map", RS, fun=ABS),
        mk("set.filter", RS, fun=POS),
        mk("rel.proj", RP, idx=(0,)),
        mk("rel.product", RP, RP),
    ]
    for _ in range(150):
        a = ConcreteTable(INT, {v: 1 for v in rand_table(rng).rows})
        b = ConcreteTable(INT, {v: 1 for v in rand_table(rng).rows})
        p = ConcreteTable(PAIR, {v: 1 for v in rand_pairs(rng).rows})
        db = {"rs": a, "rt": b, "rp": p}
        for tm in terms:
            out = eval_table(db, tm)
            assert all(n == 1 for n in out.rows.values()), tm.op
        assert eval_table(db, mk("set.union", RS, RT)).rows.keys() \
            == a.rows.keys() | b.rows.keys()
        assert eval_table(db, mk("set.inter", RS, RT)).rows.keys() \
            == a.rows.keys() & b.rows.keys()
        assert eval_table(db, mk("set.minus", RS, RT)).rows.keys() \
            == a.rows.keys() - b.rows.keys()
        assert eval_table(db, mk("set.map", RS, fun=ABS)).rows.keys() \
            == {abs(v) for v in a.rows}


def test_membership_count_and_inclusion():
    a = ConcreteTable(INT, {4: 2, 9: 1})
    b = ConcreteTable(INT, {4: 3, 9: 1, 0: 5})
    interp = Interpretation(bags={"s": a, "t": b})
    assert interp.eval(mcount(num(4), S)) == 2
    assert interp.eval(mcount(num(7), S)) == 0
    assert interp.eval(mk("bag.member", num(9), S)) is True
    assert interp.eval(mk("bag.member", num(7), S)) is False
    assert interp.eval(mk("bag.subbag", S, T)) is True
    assert interp.eval(mk("bag.subbag", T, S)) is False


def test_eval_errors():
    with pytest.raises(EvalError):
        eval_table({}, S)
    with pytest.raises(EvalError):
        eval_table(_db(s=ConcreteTable(INT)), num(3))
    wide = ConcreteTable(PAIR, {(i, 0): 1 for i in range(40)})
    with pytest.raises(EvalError):
        eval_table(_db(p=wide, q=wide), mk("table.product", SP_, TP_),
                   ceiling=100)
    # the default ceiling leaves ordinary inputs alone
    small = eval_table(_db(p=wide, q=wide), mk("table.product", SP_, TP_))
    assert small.total() == 1600 and EVAL_ROW_CEILING == 10 ** 6


def test_nested_query_evaluation():
    # σ(pos) over π(swap) over a product, all in one tree
    db = _db(p=ConcreteTable(PAIR, {(1, -1): 2}),
             q=ConcreteTable(PAIR, {(5, 1): 1}))
    t = mk("bag.filter",
           mk("bag.map", mk("table.join", SP_, TP_, idx=(0, 1)),
              fun=tuple_proj_fun(tuple_sort(INT, INT, INT, INT), (2,))),
           fun=ElemFun((("r", tuple_sort(INT)),),
                       leq(num(1), mk("tuple.select", var("r", tuple_sort(INT)), idx=(0,)))))
    out = eval_table(db, t)
    assert out == ConcreteTable(tuple_sort(INT), {(5,): 2})


# -- model construction ----------------------------------------------------------


class StubConfig:
    def __init__(self, cc, ints=None, elems=None, funs=None):
        self.cc = cc
        self.ints = ints or {}
        self.elems = elems or {}
        self.funs = funs or {}

    def int_value(self, t):
        return self.ints[t]

    def elem_value(self, t):
        return self.elems.get(t)


def test_build_model_empty_config():
    interp = build_model(StubConfig(CongruenceClosure()))
    assert interp.vars == {} and interp.bags == {}


def test_build_model_bag_without_counts_is_empty():
    cc = CongruenceClosure()
    cc.merge(S, S)
    interp = build_model(StubConfig(cc))
    assert interp.bags["s"] == ConcreteTable(INT)


def test_build_model_successor_projection():
    # two one-row tables linked by a map; read the model off the classes
    y = var("y", INT)
    w = var("w", INT)
    q = var("q", BI)
    cc = CongruenceClosure()
    assert cc.assert_literal(eq(mcount(X, S), mcount(y, q))) is None
    assert cc.assert_literal(eq(X, w)) is None
    assert cc.assert_literal(eq(y, add(X, num(1)))) is None
    ints = {X: 10, w: 10, y: 11, add(X, num(1)): 11, num(1): 1,
            mcount(X, S): 1, mcount(y, q): 1}
    interp = build_model(StubConfig(cc, ints=ints))
    assert interp.vars["x"] == 10 and interp.vars["w"] == 10
    assert interp.vars["y"] == 11
    assert interp.bags["s"] == ConcreteTable(INT, {10: 1})
    assert interp.bags["q"] == ConcreteTable(INT, {11: 1})
    lits = [
        leq(num(1), mcount(X, S)),
        eq(mcount(y, q), mcount(X, S)),
        eq(y, add(X, num(1))),
        eq(q, mk("bag.map", S, fun=SUCC)),
    ]
    assert verify_model(interp, lits) is True


def test_build_model_distinct_carriers():
    E = elem_sort("E")
    a, b, c = var("a", E), var("b", E), var("c", E)
    cc = CongruenceClosure()
    cc.assert_diseq(a, b)
    cc.merge(c, c)
    interp = build_model(StubConfig(cc))
    vals = [interp.vars[n] for n in ("a", "b", "c")]
    assert len(set(vals)) == 3
    assert all(v.startswith("elem!E!") for v in vals)
    assert sorted(interp.domains[E]) == sorted(vals)


def test_build_model_finite_sort_reuses_values():
    # three unconstrained Bool classes cannot all be distinct; only
    # an explicit disequality forces separation
    b1, b2, b3 = (var(n, BOOL) for n in ("b1", "b2", "b3"))
    cc = CongruenceClosure()
    cc.assert_diseq(b1, b2)
    cc.merge(b3, b3)
    interp = build_model(StubConfig(cc))
    assert interp.vars["b1"] != interp.vars["b2"]
    assert interp.vars["b3"] in (True, False)


def test_build_model_count_clash_fails():
    E = elem_sort("E")
    a, b = var("a", E), var("b", E)
    sv = var("s", bag_sort(E))
    cc = CongruenceClosure()
    assert cc.assert_literal(eq(mcount(a, sv), num(1))) is None
    assert cc.assert_literal(eq(mcount(b, sv), num(2))) is None
    ints = {mcount(a, sv): 1, mcount(b, sv): 2, num(1): 1, num(2): 2}
    elems = {}
    for r in cc.roots():
        if r.sort == E:
            elems[r] = "dup"
    with pytest.raises(ModelFailure):
        build_model(StubConfig(cc, ints=ints, elems=elems))


def test_build_model_set_membership():
    E = elem_sort("E")
    a, b = var("a", E), var("b", E)
    rv = var("r", set_sort(E))
    cc = CongruenceClosure()
    assert cc.assert_member(a, rv, True) is None
    assert cc.assert_member(b, rv, False) is None
    interp = build_model(StubConfig(cc))
    table = interp.bags["r"]
    assert table.rows == {interp.vars["a"]: 1}
    assert interp.vars["b"] not in table.rows


def test_verify_model_rejects():
    interp = Interpretation(bags={"s": ConcreteTable(INT)})
    assert verify_model(interp, [leq(num(1), mcount(num(3), S))]) is False
    interp2 = Interpretation(vars={"x": 2},
                             bags={"s": ConcreteTable(INT, {2: 1}),
                                   "t": ConcreteTable(INT, {2: 4})})
    lit = eq(mcount(X, mk("bag.union_max", S, T)),
             mk("max", mcount(X, S), mcount(X, T)))
    assert verify_model(interp2, [lit]) is True
    bad = eq(mcount(X, mk("bag.union_max", S, T)), num(1))
    assert verify_model(interp2, [bad]) is False


# -- counterexample emission -------------------------------------------------------


def test_emit_single_insert():
    interp = Interpretation(bags={"s": ConcreteTable(INT, {10: 1})})
    out = emit_counterexample_db(interp, {"s": BI})
    assert isinstance(out, CounterexampleDB)
    assert out.sql_text == "CREATE TABLE s (c0 INT);\nINSERT INTO s VALUES (10);\n"
    doc = json.loads(out.json_text)
    assert doc == {"tables": {"s": {"columns": ["Int"], "rows": [[10]]}}}


def test_emit_empty_table_is_create_only():
    out = emit_counterexample_db(Interpretation(), {"emp": BP})
    assert out.sql_text == "CREATE TABLE emp (c0 INT, c1 INT);\n"
    assert json.loads(out.json_text)["tables"]["emp"]["rows"] == []


def test_emit_nulls_and_multiplicities():
    row_sort = tuple_sort(nullable_sort(INT), BOOL, elem_sort("E"))
    table = ConcreteTable(row_sort, {(NULL, True, "elem!E!0"): 2,
                                     (Some(7), False, "elem!E!1"): 1})
    out = emit_counterexample_db(Interpretation(bags={"t": table}),
                                 {"t": bag_sort(row_sort)})
    assert "CREATE TABLE t (c0 INT, c1 BOOLEAN, c2 VARCHAR);" in out.sql_text
    assert out.sql_text.count("INSERT INTO t VALUES (NULL, TRUE, 'elem!E!0');") == 2
    assert "INSERT INTO t VALUES (7, FALSE, 'elem!E!1');" in out.sql_text
    rows = json.loads(out.json_text)["tables"]["t"]["rows"]
    assert rows.count([None, True, "elem!E!0"]) == 2
    assert [7, False, "elem!E!1"] in rows


def test_emit_json_is_canonical():
    a = Interpretation(bags={"s": ConcreteTable(INT, [(2, 1), (1, 1)])})
    b = Interpretation(bags={"s": ConcreteTable(INT, [(1, 1), (2, 1)])})
    sch = {"s": BI}
    assert emit_counterexample_db(a, sch).json_text \
        == emit_counterexample_db(b, sch).json_text


def test_emit_rejects_values_without_sql_form():
    # a tuple value in a scalar column has no SQL literal
    table = ConcreteTable(elem_sort("E"), {(1, 2): 1})
    with pytest.raises(UnsupportedValue):
        emit_counterexample_db(Interpretation(bags={"t": table}),
                               {"t": bag_sort(elem_sort("E"))})


def test_sql_string_quoting():
    table = ConcreteTable(elem_sort("E"), {"it's": 1})
    out = emit_counterexample_db(Interpretation(bags={"s": table}),
                                 {"s": bag_sort(elem_sort("E"))})
    assert "INSERT INTO s VALUES ('it''s');" in out.sql_text

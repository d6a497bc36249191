import random

import pytest
from hypothesis import given, settings, strategies as st

from tablesolve.elements import (
    INJECTIVE, NOT_PROVEN_INJECTIVE, Assignment, EvalError, check_E,
    eval as fun_eval, eval_term, find_collision, injectivity_check,
)
from tablesolve.nullable import NULL, Some
from tablesolve.terms import (
    BOOL, INT, STRING, ElemFun, FunSym, add, apply_fun, boolean, elem_sort,
    eq, identity_fun, ite, leq, mk, mul, neg, neq, null_of, num,
    nullable_sort, select, some, string, tup, tuple_proj_fun, tuple_sort,
    var,
)


X = var("x", INT)
ADD1 = ElemFun((("x", INT),), add(X, num(1)))
CLAMP = ElemFun((("x", INT),), ite(leq(X, num(0)), num(0), X))


# -- evaluation --


def test_eval_arithmetic():
    f = ElemFun((("x", INT), ("y", INT)),
                add(mul(var("x", INT), num(3)), neg(var("y", INT))))
    assert fun_eval(f, [4, 5]) == 7


def test_eval_comparisons_and_connectives():
    f = ElemFun((("x", INT),),
                mk("and", leq(num(0), X), mk("not", eq(X, num(3)))))
    assert fun_eval(f, [2]) is True
    assert fun_eval(f, [3]) is False
    assert fun_eval(f, [-1]) is False


def test_eval_tuple_ops():
    t = var("t", tuple_sort(INT, STRING, INT))
    f = ElemFun((("t", t.sort),), select(2, t))
    assert fun_eval(f, [(7, "a", 9)]) == 9
    g = ElemFun((("t", t.sort),), mk("tuple.proj", t, idx=(2, 0)))
    assert fun_eval(g, [(7, "a", 9)]) == (9, 7)


def test_eval_nullable_ops():
    x = var("x", nullable_sort(INT))
    f = ElemFun((("x", x.sort),),
                ite(mk("nullable.is_some", x), mk("nullable.val", x), num(0)))
    assert fun_eval(f, [Some(8)]) == 8
    assert fun_eval(f, [NULL]) == 0


def test_eval_connectives_are_lazy():
    x = var("x", nullable_sort(INT))
    # the unguarded selector is never reached
    f = ElemFun((("x", x.sort),),
                mk("and", boolean(False), leq(mk("nullable.val", x), num(1))))
    assert fun_eval(f, [NULL]) is False
    g = ElemFun((("x", x.sort),),
                mk("or", boolean(True), leq(mk("nullable.val", x), num(1))))
    assert fun_eval(g, [NULL]) is True


def test_eval_errors():
    with pytest.raises(EvalError):
        eval_term(var("z", INT), {})
    with pytest.raises(EvalError):
        eval_term(mk("nullable.val", var("x", nullable_sort(INT))), {"x": NULL})
    with pytest.raises(EvalError):
        fun_eval(ADD1, [1, 2])
    p = FunSym("p", (INT,), BOOL)
    with pytest.raises(EvalError):
        eval_term(apply_fun(p, num(1)), {})


def test_eval_uninterpreted_through_table():
    p = FunSym("p", (INT,), BOOL)
    t = apply_fun(p, add(num(1), num(1)))
    assert eval_term(t, {}, funs={("p", (2,)): True}) is True
    asg = Assignment(vars={"x": 2}, funs={("p", (2,)): False})
    assert asg.eval(apply_fun(p, var("x", INT))) is False


def test_eval_is_pure():
    # same function and arguments always give the same answer
    rng = random.Random(20240817)
    funs = [ADD1, CLAMP,
            ElemFun((("x", INT), ("y", INT)),
                    ite(leq(var("x", INT), var("y", INT)),
                        var("y", INT), var("x", INT)))]
    for _ in range(10000):
        f = rng.choice(funs)
        args = [rng.randint(-50, 50) for _ in range(f.arity)]
        assert fun_eval(f, args) == fun_eval(f, args)


# -- satisfiability --


def test_check_chain_equalities_sat():
    x, y, w = var("x", INT), var("y", INT), var("w", INT)
    lits = [eq(y, add(x, num(1))), eq(y, add(w, num(1)))]
    verdict, asg = check_E(lits)
    assert verdict == "sat"
    assert asg.vars["x"] == asg.vars["w"]
    for lit in lits:
        assert asg.eval(lit) is True
    # and the merge is forced, not incidental
    verdict2, _ = check_E(lits + [neq(x, w)])
    assert verdict2 == "unsat"


def test_check_diseq_chain_unsat():
    E = elem_sort("E")
    a, b, c = var("a", E), var("b", E), var("c", E)
    verdict, _ = check_E([eq(a, b), eq(b, c), neq(a, c)])
    assert verdict == "unsat"


def test_check_predicate_polarity_unsat():
    E = elem_sort("E")
    p = FunSym("p", (E,), BOOL)
    e = var("e", E)
    verdict, _ = check_E([apply_fun(p, e), mk("not", apply_fun(p, e))])
    assert verdict == "unsat"


def test_check_predicate_congruence():
    E = elem_sort("E")
    p = FunSym("p", (E,), BOOL)
    a, b = var("a", E), var("b", E)
    verdict, _ = check_E([apply_fun(p, a), eq(a, b),
                          mk("not", apply_fun(p, b))])
    assert verdict == "unsat"
    verdict2, asg = check_E([apply_fun(p, a), mk("not", apply_fun(p, b))])
    assert verdict2 == "sat"
    assert asg.eval(apply_fun(p, a)) is True
    assert asg.eval(apply_fun(p, b)) is False


def test_check_arithmetic_and_congruence_cooperate():
    x, y = var("x", INT), var("y", INT)
    f = FunSym("f", (INT,), INT)
    # x = y forced arithmetically, so f(x) = f(y)
    lits = [leq(x, y), leq(y, x), neq(apply_fun(f, x), apply_fun(f, y))]
    verdict, _ = check_E(lits)
    assert verdict == "unsat"


def test_check_nullable_guards():
    x = var("x", nullable_sort(INT))
    y = var("y", nullable_sort(INT))
    verdict, _ = check_E([mk("nullable.is_some", x), eq(x, y),
                          mk("nullable.is_null", y)])
    assert verdict == "unsat"
    verdict2, asg = check_E([mk("nullable.is_some", x),
                             eq(mk("nullable.val", x), num(5)), eq(x, y)])
    assert verdict2 == "sat"
    assert asg.vars["x"] == Some(5)
    assert asg.vars["y"] == Some(5)


def test_check_tuple_structure():
    t = var("t", tuple_sort(INT, INT))
    verdict, _ = check_E([neq(t, tup(num(1), num(2))),
                          eq(select(0, t), num(1)),
                          eq(select(1, t), num(2))])
    assert verdict == "unsat"
    u = var("u", tuple_sort(INT, INT))
    verdict2, asg = check_E([neq(t, u)])
    assert verdict2 == "sat"
    assert asg.vars["t"] != asg.vars["u"]


def test_check_shared_component_tuples():
    a, b = var("a", INT), var("b", INT)
    verdict, asg = check_E([neq(tup(a, num(3)), tup(b, num(3)))])
    assert verdict == "sat"
    assert asg.vars["a"] != asg.vars["b"]


def test_check_finite_domains():
    p, q, r = var("p", BOOL), var("q", BOOL), var("r", BOOL)
    verdict, _ = check_E([neq(p, q), neq(q, r), neq(p, r)])
    assert verdict == "unsat"
    NB = nullable_sort(BOOL)
    ns = [var("n%d" % i, NB) for i in range(4)]
    lits = [neq(ns[i], ns[j]) for i in range(4) for j in range(i + 1, 4)]
    verdict2, _ = check_E(lits)
    assert verdict2 == "unsat"
    verdict3, asg = check_E(lits[:3])
    assert verdict3 == "sat"


def test_check_string_literals():
    s = var("s", STRING)
    verdict, _ = check_E([eq(s, string("a")), eq(s, string("b"))])
    assert verdict == "unsat"
    verdict2, asg = check_E([eq(s, string("a")), neq(s, string("b"))])
    assert verdict2 == "sat"
    assert asg.vars["s"] == "a"


def test_check_bool_equality_between_atoms():
    x, y = var("x", INT), var("y", INT)
    b = var("b", BOOL)
    lits = [eq(b, leq(x, y)), b, leq(add(y, num(1)), x)]
    verdict, _ = check_E(lits)
    assert verdict == "unsat"


def test_check_ite_operand_positions():
    x, y = var("x", INT), var("y", INT)
    t = ite(leq(x, num(0)), num(0), x)
    verdict, asg = check_E([eq(y, t), leq(num(5), y), leq(x, num(3))])
    # y = clamp(x) >= 5 forces x >= 5, contradicting x <= 3
    assert verdict == "unsat"
    verdict2, asg2 = check_E([eq(y, t), leq(num(2), y), leq(x, num(3))])
    assert verdict2 == "sat"
    assert asg2.eval(eq(y, t)) is True


# -- assignments re-evaluate, cross-checked against enumeration --


def _atom(spec, x, y, b):
    kind, c = spec
    if kind == 0:
        return leq(x, num(c))
    if kind == 1:
        return eq(x, add(y, num(c)))
    if kind == 2:
        return neq(y, num(c))
    if kind == 3:
        return b if c % 2 == 0 else mk("not", b)
    return leq(num(c), y)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(-3, 3)),
                min_size=1, max_size=5))
def test_check_agrees_with_enumeration(specs):
    x, y, b = var("x", INT), var("y", INT), var("b", BOOL)
    lits = [_atom(s, x, y, b) for s in specs]
    verdict, asg = check_E(lits)
    assert verdict in ("sat", "unsat")
    found = None
    for xv in range(-6, 7):
        for yv in range(-6, 7):
            for bv in (False, True):
                env = {"x": xv, "y": yv, "b": bv}
                if all(eval_term(l, env) for l in lits):
                    found = env
                    break
    if verdict == "sat":
        for lit in lits:
            assert asg.eval(lit) is True
    else:
        assert found is None, (specs, found)


# -- injectivity --


def test_injectivity_whitelist():
    assert injectivity_check(ADD1) == INJECTIVE
    assert injectivity_check(identity_fun(INT)) == INJECTIVE
    assert injectivity_check(ElemFun((("x", INT),), neg(X))) == INJECTIVE
    # c - x arrives as c + neg(x)
    sub = ElemFun((("x", INT),), add(num(7), neg(X)))
    assert injectivity_check(sub) == INJECTIVE
    T2 = tuple_sort(INT, INT)
    assert injectivity_check(tuple_proj_fun(T2, (1, 0))) == INJECTIVE
    t = var("t", T2)
    pad = ElemFun((("t", T2),), tup(select(1, t), num(0), select(0, t)))
    assert injectivity_check(pad) == INJECTIVE


def test_injectivity_conservative_cases():
    assert injectivity_check(CLAMP) == NOT_PROVEN_INJECTIVE
    a, b = find_collision(CLAMP)
    assert a != b and fun_eval(CLAMP, [a]) == fun_eval(CLAMP, [b])
    const = ElemFun((("x", INT),), num(0))
    assert injectivity_check(const) == NOT_PROVEN_INJECTIVE
    # injective in truth but outside the recognized shapes
    dbl = ElemFun((("x", INT),), mul(X, num(2)))
    assert injectivity_check(dbl) == NOT_PROVEN_INJECTIVE
    T2 = tuple_sort(INT, INT)
    drop = tuple_proj_fun(T2, (0,))
    assert injectivity_check(drop) == NOT_PROVEN_INJECTIVE
    t1, t2 = find_collision(drop)
    assert t1 != t2 and fun_eval(drop, [t1]) == fun_eval(drop, [t2])


def test_injective_verdicts_have_no_collisions():
    rng = random.Random(99)
    funs = [ADD1, identity_fun(INT),
            ElemFun((("x", INT),), add(num(7), neg(X)))]
    for f in funs:
        assert injectivity_check(f) == INJECTIVE
        for _ in range(10000):
            a, b = rng.randint(-1000, 1000), rng.randint(-1000, 1000)
            if fun_eval(f, [a]) == fun_eval(f, [b]):
                assert a == b

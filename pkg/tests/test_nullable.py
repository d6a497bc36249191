import pytest

from tablesolve.nullable import (
    NULL, LowerError, Some, beta, is_nullable_value, kleene_and, kleene_not,
    kleene_or, lift_apply, lower, three_valued, unguarded_vals,
)
from tablesolve.elements import eval_term
from tablesolve.terms import (
    BOOL, INT, ElemFun, SortError, add, boolean, eq, ite, leq, lift, mk,
    null_of, num, nullable_sort, select, some, tup, tuple_sort, var,
)


ADD1 = ElemFun((("x", INT),), add(var("x", INT), num(1)))
IS_POS = ElemFun((("x", INT),), leq(num(1), var("x", INT)))
EQ2 = ElemFun((("x", INT), ("y", INT)), eq(var("x", INT), var("y", INT)))
SUM3 = ElemFun(
    (("x", INT), ("y", INT), ("z", INT)),
    add(var("x", INT), add(var("y", INT), var("z", INT))),
)

T = Some(True)
F = Some(False)
N = NULL

AND_TABLE = {
    (T, T): T, (T, F): F, (T, N): N,
    (F, T): F, (F, F): F, (F, N): F,
    (N, T): N, (N, F): F, (N, N): N,
}
OR_TABLE = {
    (T, T): T, (T, F): T, (T, N): T,
    (F, T): T, (F, F): F, (F, N): N,
    (N, T): T, (N, F): N, (N, N): N,
}
NOT_TABLE = {T: F, F: T, N: N}


def test_some_rejects_nesting():
    with pytest.raises(ValueError):
        Some(Some(1))
    with pytest.raises(ValueError):
        Some(NULL)


def test_is_nullable_value():
    assert is_nullable_value(NULL)
    assert is_nullable_value(Some(3))
    assert not is_nullable_value(3)
    assert not is_nullable_value(None)


def test_lift_apply_absorbs_null():
    assert lift_apply(ADD1, [NULL]) is NULL
    assert lift_apply(EQ2, [NULL, Some(1)]) is NULL
    assert lift_apply(EQ2, [Some(1), NULL]) is NULL
    # both arguments null still absorbs; equality is not consulted
    assert lift_apply(EQ2, [NULL, NULL]) is NULL
    assert lift_apply(SUM3, [Some(1), NULL, Some(2)]) is NULL


def test_lift_apply_some_path():
    assert lift_apply(ADD1, [Some(4)]) == Some(5)
    assert lift_apply(EQ2, [Some(2), Some(2)]) == Some(True)
    assert lift_apply(EQ2, [Some(2), Some(3)]) == Some(False)
    assert lift_apply(SUM3, [Some(1), Some(2), Some(3)]) == Some(6)


def test_lift_apply_arity():
    with pytest.raises(ValueError):
        lift_apply(EQ2, [Some(1)])


def test_three_valued_and():
    for (a, b), want in AND_TABLE.items():
        assert three_valued("AND", a, b) == want, (a, b)


def test_three_valued_or():
    for (a, b), want in OR_TABLE.items():
        assert three_valued("OR", a, b) == want, (a, b)


def test_three_valued_rejects_unknown_op():
    with pytest.raises(ValueError):
        three_valued("XOR", T, F)


def _value_term(v):
    if v is NULL:
        return null_of(BOOL)
    return some(boolean(v.value))


def test_kleene_term_encodings_match_tables():
    # the connectives are terms; evaluating their lowering reproduces
    # the same tables as the value-level entry point
    for (a, b), want in AND_TABLE.items():
        t = kleene_and(_value_term(a), _value_term(b))
        assert eval_term(lower(t), {}) == want
    for (a, b), want in OR_TABLE.items():
        t = kleene_or(_value_term(a), _value_term(b))
        assert eval_term(lower(t), {}) == want
    for a, want in NOT_TABLE.items():
        t = kleene_not(_value_term(a))
        assert eval_term(lower(t), {}) == want


def test_lower_selectors_on_constructors():
    assert lower(mk("nullable.val", some(num(5)))) == num(5)
    assert lower(mk("nullable.is_null", null_of(INT))) == boolean(True)
    assert lower(mk("nullable.is_null", some(num(1)))) == boolean(False)
    assert lower(mk("nullable.is_some", some(num(1)))) == boolean(True)
    assert lower(mk("nullable.is_some", null_of(INT))) == boolean(False)


def test_lower_rejects_val_on_null():
    with pytest.raises(LowerError):
        lower(mk("nullable.val", null_of(INT)))


def test_lower_expands_lift():
    x = var("x", nullable_sort(INT))
    t = lower(lift(ADD1, x))
    # guarded: evaluating at a some and at null follows the absorption rule
    assert eval_term(t, {"x": Some(3)}) == Some(4)
    assert eval_term(t, {"x": NULL}) is NULL
    assert unguarded_vals(t) == []


def test_lower_beta_reduces_apply():
    x = var("x", INT)
    t = mk("apply", num(3), fun=ADD1)
    assert lower(t) == add(num(3), num(1))
    swap = ElemFun(
        (("t", tuple_sort(INT, INT)),),
        tup(select(1, var("t", tuple_sort(INT, INT))),
            select(0, var("t", tuple_sort(INT, INT)))),
    )
    got = lower(mk("apply", tup(num(1), num(2)), fun=swap))
    assert eval_term(got, {}) == (2, 1)


def test_lower_matches_lift_apply():
    # every corpus function, every argument vector with at most one null
    cases = [
        (ADD1, [[Some(k)] for k in range(-3, 4)] + [[NULL]]),
        (IS_POS, [[Some(k)] for k in (-1, 0, 1, 2)] + [[NULL]]),
        (EQ2, [[Some(a), Some(b)] for a in (0, 1) for b in (0, 1)]
         + [[NULL, Some(1)], [Some(1), NULL]]),
        (SUM3, [[Some(1), Some(2), Some(3)], [NULL, Some(2), Some(3)],
                [Some(1), NULL, Some(3)], [Some(1), Some(2), NULL]]),
    ]
    for f, vectors in cases:
        for vec in vectors:
            args = [null_of(INT) if v is NULL else some(num(v.value))
                    for v in vec]
            t = lower(lift(f, *args))
            assert eval_term(t, {}) == lift_apply(f, vec), (f, vec)


def test_lift_requires_arguments():
    f0 = ElemFun((), num(1))
    with pytest.raises(SortError):
        mk("nullable.lift", fun=f0)


def test_beta_arity_mismatch():
    with pytest.raises(ValueError):
        beta(EQ2, [num(1)])


def test_unguarded_vals_flags_raw_selector():
    x = var("x", nullable_sort(INT))
    raw = leq(mk("nullable.val", x), num(3))
    assert unguarded_vals(raw) == [mk("nullable.val", x)]


def test_unguarded_vals_accepts_guarded_selector():
    x = var("x", nullable_sort(INT))
    guarded = ite(mk("nullable.is_some", x),
                  leq(mk("nullable.val", x), num(3)),
                  boolean(False))
    assert unguarded_vals(guarded) == []
    # guard only covers the then-branch
    leaky = ite(mk("nullable.is_some", x),
                boolean(True),
                leq(mk("nullable.val", x), num(3)))
    assert len(unguarded_vals(leaky)) == 1


def test_unguarded_vals_conjunction_guard():
    x = var("x", nullable_sort(INT))
    y = var("y", nullable_sort(INT))
    both = mk("and", mk("nullable.is_some", x), mk("nullable.is_some", y))
    t = ite(both, eq(mk("nullable.val", x), mk("nullable.val", y)),
            boolean(False))
    assert unguarded_vals(t) == []

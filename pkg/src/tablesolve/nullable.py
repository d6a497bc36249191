"""Nullable sorts: ground values, Kleene connectives, and lowering.

A nullable value is either the distinguished ``NULL`` or ``Some(base)``.
SQL's three-valued AND/OR are realized by building the if-then-else
encoding as a term and evaluating it, so the connectives and the lowering
share one definition.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Union

from .terms import (
    BOOL,
    ElemFun,
    FALSE,
    Sort,
    TRUE,
    Term,
    boolean,
    conj,
    ite,
    lift,
    mk,
    null_of,
    num,
    some,
    string,
    var,
)


class LowerError(Exception):
    """Raised when lowering meets a selector applied to a bare null."""


class _Null:
    __slots__ = ()

    def __repr__(self) -> str:
        return "null"


NULL = _Null()


@dataclass(frozen=True)
class Some:
    value: object

    def __post_init__(self):
        # no nesting: mirrors the sort-level restriction
        if isinstance(self.value, (_Null, Some)):
            raise ValueError("Some must wrap a base value, got %r" % (self.value,))

    def __repr__(self) -> str:
        return "some(%r)" % (self.value,)


NullableValue = Union[_Null, Some]


def is_nullable_value(v: object) -> bool:
    return v is NULL or isinstance(v, Some)


def lift_apply(f: ElemFun, args: List[NullableValue]) -> NullableValue:
    """Eager lift: null if any argument is null, else apply under some."""
    if len(args) != f.arity:
        raise ValueError("lift_apply: %d args for arity %d" % (len(args), f.arity))
    vals = []
    for a in args:
        if a is NULL:
            return NULL
        if not isinstance(a, Some):
            raise TypeError("lift_apply: not a nullable value: %r" % (a,))
        vals.append(a.value)
    from . import elements

    return Some(elements.eval(f, vals))


# -- Kleene connectives as term builders -------------------------------------
#
# and:  a=true -> b | a=false -> false | a null -> (b=false -> false | null)
# or mirrors it with the roles of true and false swapped.

NBOOL_NULL = null_of(BOOL)


def kleene_and(a: Term, b: Term) -> Term:
    return ite(
        mk("nullable.is_some", a),
        ite(mk("nullable.val", a), b, some(FALSE)),
        ite(
            mk("nullable.is_some", b),
            ite(mk("nullable.val", b), NBOOL_NULL, some(FALSE)),
            NBOOL_NULL,
        ),
    )


def kleene_or(a: Term, b: Term) -> Term:
    return ite(
        mk("nullable.is_some", a),
        ite(mk("nullable.val", a), some(TRUE), b),
        ite(
            mk("nullable.is_some", b),
            ite(mk("nullable.val", b), some(TRUE), NBOOL_NULL),
            NBOOL_NULL,
        ),
    )


_NOT_FUN = ElemFun((("b", BOOL),), mk("not", var("b", BOOL)))


def kleene_not(a: Term) -> Term:
    # negation lifts pointwise: null stays null
    return lift(_NOT_FUN, a)


def _value_to_term(v: NullableValue) -> Term:
    if v is NULL:
        return NBOOL_NULL
    assert isinstance(v.value, bool)
    return some(boolean(v.value))


def three_valued(op: str, a: NullableValue, b: NullableValue) -> NullableValue:
    """Three-valued AND/OR on Boolean nullables via the ite encoding."""
    if op not in ("AND", "OR"):
        raise ValueError("three_valued: op must be AND or OR, got %r" % (op,))
    build = kleene_and if op == "AND" else kleene_or
    term = build(_value_to_term(a), _value_to_term(b))
    from . import elements

    return elements.eval_term(lower(term), {})


# -- lowering -----------------------------------------------------------------


def _subst(t: Term, env: Dict[str, Term]) -> Term:
    if t.op == "var":
        return env.get(t.value, t)
    if not t.args:
        return t
    args = tuple(_subst(a, env) for a in t.args)
    if args == t.args:
        return t
    return mk(t.op, *args, idx=t.idx, fun=t.fun)


def beta(f: ElemFun, args: List[Term]) -> Term:
    """Substitute arguments into the body of an element function."""
    if len(args) != f.arity:
        raise ValueError("beta: %d args for arity %d" % (len(args), f.arity))
    env = {name: arg for (name, _), arg in zip(f.params, args)}
    return _subst(f.body, env)


def lower(t: Term) -> Term:
    """Compile lift/val/isSome/isNull into constructor tests and ite.

    Function applications are beta-reduced.  A selector on a syntactic
    null is a checked error; a selector on a some-construction reduces.
    """
    if not t.args:
        return t
    if t.op == "ite":
        # fold the condition first so a guarded branch that died (its
        # guard lowered to a constant) is never entered
        c = lower(t.args[0])
        if c == TRUE:
            return lower(t.args[1])
        if c == FALSE:
            return lower(t.args[2])
        return ite(c, lower(t.args[1]), lower(t.args[2]))
    args = [lower(a) for a in t.args]
    op = t.op
    if op == "apply" and isinstance(t.fun, ElemFun):
        return lower(beta(t.fun, args))
    if op == "nullable.lift":
        tests = [lower(mk("nullable.is_some", a)) for a in args]
        base = t.sort.args[0]
        if any(c == FALSE for c in tests):
            return null_of(base)
        vals = [mk("nullable.val", a) for a in args]
        body = lower(beta(t.fun, vals))
        guard = conj(*tests)
        if guard == TRUE:
            return some(body)
        return ite(guard, some(body), null_of(base))
    if op == "nullable.val":
        (a,) = args
        if a.op == "nullable.some":
            return a.args[0]
        if a.op == "nullable.null":
            raise LowerError("val applied to null")
        return mk("nullable.val", a)
    if op == "nullable.is_some":
        (a,) = args
        if a.op == "nullable.some":
            return TRUE
        if a.op == "nullable.null":
            return FALSE
        return mk("nullable.is_some", a)
    if op == "nullable.is_null":
        (a,) = args
        if a.op == "nullable.some":
            return FALSE
        if a.op == "nullable.null":
            return TRUE
        return mk("nullable.is_null", a)
    return mk(op, *args, idx=t.idx, fun=t.fun)


def unguarded_vals(t: Term) -> List[Term]:
    """Selector occurrences not protected by an is_some test.

    Walks the term tracking, per branch, the set of arguments known to be
    some-constructed.  A ``val(x)`` is guarded when x is in that set or is
    itself a some-construction.
    """
    bad: List[Term] = []

    def known_some(cond: Term, acc: set):
        if cond.op == "nullable.is_some":
            acc.add(cond.args[0])
        elif cond.op == "and":
            for c in cond.args:
                known_some(c, acc)

    def walk(u: Term, guarded: frozenset):
        if u.op == "nullable.val":
            a = u.args[0]
            if a.op != "nullable.some" and a not in guarded:
                bad.append(u)
            walk(a, guarded)
            return
        if u.op == "ite":
            cond, then, other = u.args
            walk(cond, guarded)
            extra: set = set()
            known_some(cond, extra)
            walk(then, guarded | frozenset(extra))
            walk(other, guarded)
            return
        for a in u.args:
            walk(a, guarded)

    walk(t, frozenset())
    return bad

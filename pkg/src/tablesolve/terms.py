"""Sorts and terms for the theories of tables, relations, and nullable values.

Terms are immutable and structurally hashable; every constructor checks
well-sortedness, so an ill-sorted term can never be built.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple, Union


class SortError(Exception):
    """Raised when an operator is applied to children of the wrong sorts."""


# ---------------------------------------------------------------------------
# Sorts


class Sort:
    __slots__ = ("kind", "args", "name", "_hash")

    def __init__(self, kind: str, args: Tuple["Sort", ...] = (), name: str = ""):
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_hash", hash((kind, args, name)))

    def __setattr__(self, *_):
        raise AttributeError("Sort is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Sort)
            and self._hash == other._hash
            and self.kind == other.kind
            and self.args == other.args
            and self.name == other.name
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        if self.kind == "Elem":
            return self.name
        if not self.args:
            return self.kind
        return "(%s %s)" % (self.kind, " ".join(map(repr, self.args)))

    @property
    def elem(self) -> "Sort":
        assert self.kind in ("Bag", "Set", "Nullable")
        return self.args[0]

    @property
    def comps(self) -> Tuple["Sort", ...]:
        assert self.kind == "Tuple"
        return self.args


INT = Sort("Int")
BOOL = Sort("Bool")
STRING = Sort("String")


def elem_sort(name: str) -> Sort:
    return Sort("Elem", name=name)


def tuple_sort(*comps: Sort) -> Sort:
    for c in comps:
        if c.kind in ("Tuple", "Bag", "Set"):
            raise SortError("tuple components may not be tuples or collections: %r" % c)
    return Sort("Tuple", tuple(comps))


def bag_sort(elem: Sort) -> Sort:
    if elem.kind in ("Bag", "Set"):
        raise SortError("bag elements may not be collections: %r" % elem)
    return Sort("Bag", (elem,))


def set_sort(elem: Sort) -> Sort:
    if elem.kind in ("Bag", "Set"):
        raise SortError("set elements may not be collections: %r" % elem)
    return Sort("Set", (elem,))


def nullable_sort(base: Sort) -> Sort:
    if base.kind == "Nullable":
        raise SortError("nullable sorts do not nest: %r" % base)
    if base.kind in ("Bag", "Set"):
        raise SortError("nullable base may not be a collection: %r" % base)
    return Sort("Nullable", (base,))


def fun_sort(params: Iterable[Sort], result: Sort) -> Sort:
    return Sort("Fun", tuple(params) + (result,))


def is_element_sort(s: Sort) -> bool:
    """An element sort is any sort that is not a collection sort."""
    return s.kind not in ("Bag", "Set")


# ---------------------------------------------------------------------------
# Element functions (closed lambda expressions) and uninterpreted symbols


@dataclass(frozen=True)
class ElemFun:
    """A computable function: named typed parameters and an expression body."""

    params: Tuple[Tuple[str, Sort], ...]
    body: "Term"

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def param_sorts(self) -> Tuple[Sort, ...]:
        return tuple(s for _, s in self.params)

    @property
    def result_sort(self) -> Sort:
        return self.body.sort

    def __repr__(self):
        ps = " ".join("(%s %r)" % (n, s) for n, s in self.params)
        return "(lambda (%s) %s)" % (ps, to_sexp(self.body))


@dataclass(frozen=True)
class FunSym:
    """An uninterpreted function symbol."""

    name: str
    param_sorts: Tuple[Sort, ...]
    result_sort: Sort

    @property
    def arity(self) -> int:
        return len(self.param_sorts)

    def __repr__(self):
        return self.name


Applicable = Union[ElemFun, FunSym]


# ---------------------------------------------------------------------------
# Terms


class Term:
    __slots__ = ("op", "args", "sort", "value", "idx", "fun", "_hash")

    def __init__(
        self,
        op: str,
        args: Tuple["Term", ...] = (),
        sort: Sort = None,
        value: object = None,
        idx: Tuple[int, ...] = (),
        fun: Optional[Applicable] = None,
    ):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "sort", sort)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "fun", fun)
        object.__setattr__(self, "_hash", hash((op, args, value, idx, fun)))

    def __setattr__(self, *_):
        raise AttributeError("Term is immutable")

    def __eq__(self, other):
        return (
            self is other
            or isinstance(other, Term)
            and self._hash == other._hash
            and self.op == other.op
            and self.value == other.value
            and self.idx == other.idx
            and self.args == other.args
            and self.fun == other.fun
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return to_sexp(self)

    def is_var(self) -> bool:
        return self.op == "var"

    def is_literal(self) -> bool:
        return self.op in ("int", "str", "bool")


# Operator tags grouped by where their results live.
ARITH_OPS = ("+", "*", "neg", "max", "min")
BAG_OPS = (
    "bag.empty", "bag", "bag.setof", "bag.union_max", "bag.union_disjoint",
    "bag.inter_min", "bag.diff_subtract", "bag.diff_remove", "bag.filter",
    "bag.map", "table.product", "table.join", "table.proj",
)
SET_OPS = (
    "set.empty", "set.singleton", "set.union", "set.inter", "set.minus",
    "set.filter", "set.map", "rel.product", "rel.join", "rel.proj",
)
PREDICATE_OPS = ("=", "<=", "<", ">", ">=", "not", "and", "or",
                 "bag.member", "bag.subbag", "set.member", "set.subset",
                 "nullable.is_null", "nullable.is_some")


def infer_sort(
    op: str,
    arg_sorts: Tuple[Sort, ...],
    idx: Tuple[int, ...] = (),
    fun: Optional[Applicable] = None,
    payload_sort: Optional[Sort] = None,
) -> Sort:
    """Return the result sort of applying `op`, or raise SortError.

    `payload_sort` carries the sort annotation of nullary constructors
    (bag.empty, set.empty, nullable.null) and of variables.
    """

    def want(i: int, pred, desc: str):
        if i >= len(arg_sorts) or not pred(arg_sorts[i]):
            raise SortError(
                "%s: argument %d must be %s, got %r"
                % (op, i, desc, arg_sorts[i] if i < len(arg_sorts) else None)
            )

    def want_len(n: int):
        if len(arg_sorts) != n:
            raise SortError("%s: expected %d arguments, got %d" % (op, n, len(arg_sorts)))

    if op in ("var", "int", "str", "bool"):
        if op == "int":
            return INT
        if op == "str":
            return STRING
        if op == "bool":
            return BOOL
        if payload_sort is None:
            raise SortError("variable needs a sort")
        return payload_sort

    if op in ("+", "*", "max", "min"):
        want_len(2)
        want(0, lambda s: s == INT, "Int")
        want(1, lambda s: s == INT, "Int")
        return INT
    if op == "neg":
        want_len(1)
        want(0, lambda s: s == INT, "Int")
        return INT
    if op in ("<=", "<", ">", ">="):
        want_len(2)
        want(0, lambda s: s == INT, "Int")
        want(1, lambda s: s == INT, "Int")
        return BOOL
    if op == "ite":
        want_len(3)
        want(0, lambda s: s == BOOL, "Bool")
        if arg_sorts[1] != arg_sorts[2]:
            raise SortError("ite branches disagree: %r vs %r" % (arg_sorts[1], arg_sorts[2]))
        return arg_sorts[1]
    if op == "=":
        want_len(2)
        if arg_sorts[0] != arg_sorts[1]:
            raise SortError("= over different sorts: %r vs %r" % (arg_sorts[0], arg_sorts[1]))
        return BOOL
    if op == "not":
        want_len(1)
        want(0, lambda s: s == BOOL, "Bool")
        return BOOL
    if op in ("and", "or"):
        if len(arg_sorts) < 2:
            raise SortError("%s needs at least 2 arguments" % op)
        for i in range(len(arg_sorts)):
            want(i, lambda s: s == BOOL, "Bool")
        return BOOL

    if op == "bag.empty":
        want_len(0)
        if payload_sort is None or payload_sort.kind != "Bag":
            raise SortError("bag.empty needs a Bag sort annotation")
        return payload_sort
    if op == "bag":
        want_len(2)
        want(0, is_element_sort, "an element sort")
        want(1, lambda s: s == INT, "Int")
        return bag_sort(arg_sorts[0])
    if op == "bag.count":
        want_len(2)
        want(1, lambda s: s.kind == "Bag", "a Bag")
        if arg_sorts[0] != arg_sorts[1].elem:
            raise SortError("bag.count element/bag sorts disagree")
        return INT
    if op == "bag.setof":
        want_len(1)
        want(0, lambda s: s.kind == "Bag", "a Bag")
        return arg_sorts[0]
    if op in ("bag.union_max", "bag.union_disjoint", "bag.inter_min",
              "bag.diff_subtract", "bag.diff_remove"):
        want_len(2)
        want(0, lambda s: s.kind == "Bag", "a Bag")
        if arg_sorts[0] != arg_sorts[1]:
            raise SortError("%s over different bag sorts" % op)
        return arg_sorts[0]
    if op in ("bag.member", "set.member"):
        want_len(2)
        kind = "Bag" if op == "bag.member" else "Set"
        want(1, lambda s: s.kind == kind, "a " + kind)
        if arg_sorts[0] != arg_sorts[1].elem:
            raise SortError("%s element/collection sorts disagree" % op)
        return BOOL
    if op in ("bag.subbag", "set.subset"):
        want_len(2)
        kind = "Bag" if op == "bag.subbag" else "Set"
        want(0, lambda s: s.kind == kind, "a " + kind)
        if arg_sorts[0] != arg_sorts[1]:
            raise SortError("%s over different sorts" % op)
        return BOOL
    if op in ("bag.filter", "set.filter"):
        want_len(1)
        kind = "Bag" if op == "bag.filter" else "Set"
        want(0, lambda s: s.kind == kind, "a " + kind)
        if fun is None or fun.arity != 1:
            raise SortError("%s needs a unary predicate" % op)
        if fun.param_sorts[0] != arg_sorts[0].elem or fun.result_sort != BOOL:
            raise SortError("%s predicate sort mismatch" % op)
        return arg_sorts[0]
    if op in ("bag.map", "set.map"):
        want_len(1)
        kind = "Bag" if op == "bag.map" else "Set"
        want(0, lambda s: s.kind == kind, "a " + kind)
        if fun is None or fun.arity != 1:
            raise SortError("%s needs a unary function" % op)
        if fun.param_sorts[0] != arg_sorts[0].elem:
            raise SortError("%s function argument sort mismatch" % op)
        mk = bag_sort if kind == "Bag" else set_sort
        return mk(fun.result_sort)
    if op in ("table.product", "rel.product", "table.join", "rel.join"):
        want_len(2)
        kind = "Bag" if op.startswith("table") else "Set"
        want(0, lambda s: s.kind == kind and s.elem.kind == "Tuple", "a %s of tuples" % kind)
        want(1, lambda s: s.kind == kind and s.elem.kind == "Tuple", "a %s of tuples" % kind)
        left, right = arg_sorts[0].elem.comps, arg_sorts[1].elem.comps
        if op in ("table.join", "rel.join"):
            if len(idx) % 2 != 0:
                raise SortError("join indices must come in pairs")
            for a, b in zip(idx[::2], idx[1::2]):
                if a >= len(left) or b >= len(right):
                    raise SortError("join index out of range")
                if left[a] != right[b]:
                    raise SortError("joined columns have different sorts")
        mk = bag_sort if kind == "Bag" else set_sort
        return mk(tuple_sort(*(left + right)))
    if op in ("table.proj", "rel.proj", "tuple.proj"):
        want_len(1)
        if op == "tuple.proj":
            want(0, lambda s: s.kind == "Tuple", "a Tuple")
            comps = arg_sorts[0].comps
        else:
            kind = "Bag" if op == "table.proj" else "Set"
            want(0, lambda s: s.kind == kind and s.elem.kind == "Tuple", "a %s of tuples" % kind)
            comps = arg_sorts[0].elem.comps
        for i in idx:
            if i >= len(comps):
                raise SortError("%s index %d out of range" % (op, i))
        out = tuple_sort(*(comps[i] for i in idx))
        if op == "tuple.proj":
            return out
        return bag_sort(out) if op == "table.proj" else set_sort(out)

    if op == "tuple":
        return tuple_sort(*arg_sorts)
    if op == "tuple.select":
        want_len(1)
        want(0, lambda s: s.kind == "Tuple", "a Tuple")
        (i,) = idx
        if i >= len(arg_sorts[0].comps):
            raise SortError("tuple.select index %d out of range for %r" % (i, arg_sorts[0]))
        return arg_sorts[0].comps[i]

    if op == "set.empty":
        want_len(0)
        if payload_sort is None or payload_sort.kind != "Set":
            raise SortError("set.empty needs a Set sort annotation")
        return payload_sort
    if op == "set.singleton":
        want_len(1)
        want(0, is_element_sort, "an element sort")
        return set_sort(arg_sorts[0])
    if op in ("set.union", "set.inter", "set.minus"):
        want_len(2)
        want(0, lambda s: s.kind == "Set", "a Set")
        if arg_sorts[0] != arg_sorts[1]:
            raise SortError("%s over different set sorts" % op)
        return arg_sorts[0]

    if op == "nullable.null":
        want_len(0)
        if payload_sort is None or payload_sort.kind != "Nullable":
            raise SortError("nullable.null needs a Nullable sort annotation")
        return payload_sort
    if op == "nullable.some":
        want_len(1)
        return nullable_sort(arg_sorts[0])
    if op == "nullable.val":
        want_len(1)
        want(0, lambda s: s.kind == "Nullable", "a Nullable")
        return arg_sorts[0].elem
    if op in ("nullable.is_null", "nullable.is_some"):
        want_len(1)
        want(0, lambda s: s.kind == "Nullable", "a Nullable")
        return BOOL
    if op == "nullable.lift":
        if fun is None:
            raise SortError("nullable.lift needs a function")
        if fun.arity == 0:
            raise SortError("nullable.lift is undefined for zero-arity functions")
        if len(arg_sorts) != fun.arity:
            raise SortError("nullable.lift arity mismatch")
        for i, ps in enumerate(fun.param_sorts):
            want(i, lambda s, ps=ps: s == nullable_sort(ps), "Nullable(%r)" % ps)
        return nullable_sort(fun.result_sort)

    if op == "apply":
        if fun is None:
            raise SortError("apply needs a function")
        if len(arg_sorts) != fun.arity:
            raise SortError("apply arity mismatch for %r" % fun)
        for i, ps in enumerate(fun.param_sorts):
            want(i, lambda s, ps=ps: s == ps, repr(ps))
        return fun.result_sort

    raise SortError("unknown operator %r" % op)


def mk(op: str, *args: Term, idx: Tuple[int, ...] = (), fun: Optional[Applicable] = None,
       value: object = None, payload_sort: Optional[Sort] = None) -> Term:
    sort = infer_sort(op, tuple(a.sort for a in args), idx=idx, fun=fun,
                      payload_sort=payload_sort)
    return Term(op, tuple(args), sort, value, idx, fun)


# Convenience constructors --------------------------------------------------


def var(name: str, sort: Sort) -> Term:
    return Term("var", (), sort, name, (), None)


def num(n: int) -> Term:
    return Term("int", (), INT, int(n), (), None)


def string(s: str) -> Term:
    return Term("str", (), STRING, s, (), None)


def boolean(b: bool) -> Term:
    return Term("bool", (), BOOL, bool(b), (), None)


TRUE = boolean(True)
FALSE = boolean(False)


def eq(a: Term, b: Term) -> Term:
    return mk("=", a, b)


def neq(a: Term, b: Term) -> Term:
    return mk("not", eq(a, b))


def leq(a: Term, b: Term) -> Term:
    return mk("<=", a, b)


def add(a: Term, b: Term) -> Term:
    return mk("+", a, b)


def mul(a: Term, b: Term) -> Term:
    return mk("*", a, b)


def neg(a: Term) -> Term:
    return mk("neg", a)


def conj(*ts: Term) -> Term:
    ts = tuple(t for t in ts if t != TRUE)
    if not ts:
        return TRUE
    if len(ts) == 1:
        return ts[0]
    return mk("and", *ts)


def disj(*ts: Term) -> Term:
    if len(ts) == 1:
        return ts[0]
    return mk("or", *ts)


def mcount(e: Term, s: Term) -> Term:
    return mk("bag.count", e, s)


def tup(*es: Term) -> Term:
    return mk("tuple", *es)


def select(i: int, t: Term) -> Term:
    return mk("tuple.select", t, idx=(i,))


def apply_fun(fun: Applicable, *args: Term) -> Term:
    return mk("apply", *args, fun=fun)


def ite(c: Term, t: Term, e: Term) -> Term:
    return mk("ite", c, t, e)


def some(t: Term) -> Term:
    return mk("nullable.some", t)


def null_of(base: Sort) -> Term:
    return mk("nullable.null", payload_sort=nullable_sort(base))


def lift(fun: ElemFun, *args: Term) -> Term:
    return mk("nullable.lift", *args, fun=fun)


def identity_fun(sort: Sort) -> ElemFun:
    x = var("x", sort)
    return ElemFun((("x", sort),), x)


def tuple_proj_fun(src: Sort, idx: Tuple[int, ...]) -> ElemFun:
    """The function λt. tuple.proj_idx(t); used to reduce table.proj to map."""
    t = var("t", src)
    return ElemFun((("t", src),), mk("tuple.proj", t, idx=idx))


# ---------------------------------------------------------------------------
# Free variables and fresh-variable management


def free_vars(t: Term) -> Set[Term]:
    out: Set[Term] = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur.op == "var":
            out.add(cur)
        stack.extend(cur.args)
    return out


def subterms(t: Term) -> Iterator[Term]:
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(cur.args)


class FreshVarRegistry:
    """Mints variables that never collide with user names.

    Variables minted with `witness=True` form the set W used by the
    map-up guard; membership is queryable with `in_witness_set`.
    """

    def __init__(self, reserved: Iterable[str] = ()):
        self.counter = 0
        self.used: Set[str] = set(reserved)
        self.witnesses: Set[str] = set()

    def reserve(self, names: Iterable[str]) -> None:
        self.used.update(names)

    def fresh_var(self, sort: Sort, witness: bool = False, stem: str = "w") -> Term:
        while True:
            name = "%s%d" % (stem, self.counter)
            self.counter += 1
            if name not in self.used:
                break
        self.used.add(name)
        if witness:
            self.witnesses.add(name)
        return var(name, sort)

    def in_witness_set(self, t: Term) -> bool:
        return t.op == "var" and t.value in self.witnesses

    def copy(self) -> "FreshVarRegistry":
        dup = FreshVarRegistry()
        dup.counter = self.counter
        dup.used = set(self.used)
        dup.witnesses = set(self.witnesses)
        return dup


# ---------------------------------------------------------------------------
# Printing


def sort_to_sexp(s: Sort) -> str:
    if s.kind == "Int":
        return "Int"
    if s.kind == "Bool":
        return "Bool"
    if s.kind == "String":
        return "String"
    if s.kind == "Elem":
        return s.name
    if s.kind == "Tuple":
        return "(Tuple%s)" % "".join(" " + sort_to_sexp(c) for c in s.comps)
    if s.kind == "Bag":
        return "(Bag %s)" % sort_to_sexp(s.elem)
    if s.kind == "Set":
        return "(Set %s)" % sort_to_sexp(s.elem)
    if s.kind == "Nullable":
        return "(Nullable %s)" % sort_to_sexp(s.elem)
    if s.kind == "Fun":
        return "(-> %s)" % " ".join(sort_to_sexp(a) for a in s.args)
    raise AssertionError(s.kind)


def to_sexp(t: Term) -> str:
    if t.op == "var":
        return str(t.value)
    if t.op == "int":
        return str(t.value) if t.value >= 0 else "(- %d)" % -t.value
    if t.op == "str":
        return '"%s"' % t.value
    if t.op == "bool":
        return "true" if t.value else "false"
    if t.op in ("bag.empty", "set.empty", "nullable.null"):
        return "(as %s %s)" % (t.op, sort_to_sexp(t.sort))
    head = t.op
    if t.op == "neg":
        head = "-"
    if t.idx:
        head = "(_ %s %s)" % (head, " ".join(map(str, t.idx)))
    parts = [head]
    if t.fun is not None:
        parts.append(repr(t.fun))
    parts.extend(to_sexp(a) for a in t.args)
    return "(%s)" % " ".join(parts)

"""Concrete tables, interpretations, and the table evaluator.

Three services live here.  ConcreteTable is the ground value a bag- or
set-sorted term denotes: a finite multiset of rows in canonical form.
eval_table evaluates table terms bottom-up over such values and is the
independent oracle everything else is checked against.  build_model
reads a saturated configuration off into an Interpretation, and
verify_model replays constraints under it; emit_counterexample_db
renders a satisfying model as JSON plus an ANSI SQL script.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from .elements import EvalError, eval, eval_term, _domain_size, _enumerate_domain
from .nullable import NULL, Some
from .terms import (
    BOOL,
    INT,
    STRING,
    Sort,
    Term,
    is_element_sort,
    sort_to_sexp,
    to_sexp,
)

EVAL_ROW_CEILING = 10 ** 6


class ModelFailure(Exception):
    """A saturated configuration produced a model its own constraints reject."""


class UnsupportedValue(Exception):
    """A carrier value has no SQL literal form."""


# -- ground values ---------------------------------------------------------------


def _value_key(v: object):
    """Total order over ground values, for canonical row ordering."""
    if v is NULL:
        return ("0null",)
    if isinstance(v, Some):
        return ("1some",) + _value_key(v.value)
    if isinstance(v, bool):
        return ("2bool", v)
    if isinstance(v, int):
        return ("3int", v)
    if isinstance(v, str):
        return ("4str", v)
    if isinstance(v, tuple):
        return ("5tuple", tuple(_value_key(x) for x in v))
    raise TypeError("not a ground table value: %r" % (v,))


def _value_text(v: object) -> str:
    if v is NULL:
        return "null"
    if isinstance(v, Some):
        return "(some %s)" % _value_text(v.value)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, tuple):
        return "(tuple %s)" % " ".join(_value_text(x) for x in v)
    raise TypeError("not a ground table value: %r" % (v,))


class ConcreteTable:
    """A finite multiset of rows over one element sort.

    Canonical form: distinct rows with positive counts; iteration order
    is the total order on values, so equal tables render identically.
    """

    __slots__ = ("elem", "rows")

    def __init__(self, elem: Sort, rows=None):
        self.elem = elem
        clean: Dict[object, int] = {}
        if rows:
            pairs = rows.items() if isinstance(rows, dict) else rows
            for v, n in pairs:
                if n > 0:
                    clean[v] = clean.get(v, 0) + n
        self.rows = clean

    @property
    def columns(self) -> Tuple[Sort, ...]:
        if self.elem.kind == "Tuple":
            return self.elem.comps
        return (self.elem,)

    def count(self, v: object) -> int:
        return self.rows.get(v, 0)

    def items(self) -> List[Tuple[object, int]]:
        return sorted(self.rows.items(), key=lambda kv: _value_key(kv[0]))

    def total(self) -> int:
        return sum(self.rows.values())

    def canonical(self) -> str:
        cells = ["(%s . %d)" % (_value_text(v), n) for v, n in self.items()]
        return "{%s}" % " ".join(cells)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConcreteTable)
                and self.elem == other.elem
                and self.rows == other.rows)

    def __ne__(self, other) -> bool:
        return not self.__eq__(other)

    def __repr__(self) -> str:
        return "ConcreteTable(%s, %s)" % (sort_to_sexp(self.elem), self.canonical())


# -- multiset operators ------------------------------------------------------------

# Each helper mirrors one evaluation clause: counts combine pointwise
# and the constructor drops anything non-positive.


def _union_max(a: ConcreteTable, b: ConcreteTable) -> ConcreteTable:
    rows = dict(a.rows)
    for v, n in b.rows.items():
        rows[v] = max(rows.get(v, 0), n)
    return ConcreteTable(a.elem, rows)


def _union_disjoint(a: ConcreteTable, b: ConcreteTable) -> ConcreteTable:
    rows = dict(a.rows)
    for v, n in b.rows.items():
        rows[v] = rows.get(v, 0) + n
    return ConcreteTable(a.elem, rows)


def _inter_min(a: ConcreteTable, b: ConcreteTable) -> ConcreteTable:
    return ConcreteTable(
        a.elem, {v: min(n, b.rows[v]) for v, n in a.rows.items() if v in b.rows})


def _diff_subtract(a: ConcreteTable, b: ConcreteTable) -> ConcreteTable:
    return ConcreteTable(a.elem, {v: n - b.count(v) for v, n in a.rows.items()})


def _diff_remove(a: ConcreteTable, b: ConcreteTable) -> ConcreteTable:
    return ConcreteTable(
        a.elem, {v: n for v, n in a.rows.items() if b.count(v) == 0})


def _setof(a: ConcreteTable) -> ConcreteTable:
    return ConcreteTable(a.elem, {v: 1 for v in a.rows})


def _product(a: ConcreteTable, b: ConcreteTable, elem: Sort,
             ceiling: int) -> ConcreteTable:
    if len(a.rows) * len(b.rows) > ceiling:
        raise EvalError("product exceeds the %d-row ceiling" % ceiling)
    rows = {}
    for v, n in a.rows.items():
        for w, k in b.rows.items():
            rows[v + w] = n * k
    return ConcreteTable(elem, rows)


def _filter_rows(a: ConcreteTable, keep: Callable[[object], bool]) -> ConcreteTable:
    return ConcreteTable(a.elem, {v: n for v, n in a.rows.items() if keep(v)})


def _map_rows(a: ConcreteTable, f: Callable[[object], object],
              elem: Sort) -> ConcreteTable:
    # counts of colliding images add up
    rows: Dict[object, int] = {}
    for v, n in a.rows.items():
        w = f(v)
        rows[w] = rows.get(w, 0) + n
    return ConcreteTable(elem, rows)


# -- the table evaluator ------------------------------------------------------------


def _table_ext(ceiling: int):
    """Extension hook teaching eval_term the table operators."""

    def ext(t: Term, env, funs):
        def ev(x):
            return eval_term(x, env, funs, ext)

        op = t.op
        if op in ("bag.empty", "set.empty"):
            return ConcreteTable(t.sort.elem)
        if op == "bag":
            return ConcreteTable(t.sort.elem, {ev(t.args[0]): ev(t.args[1])})
        if op == "set.singleton":
            return ConcreteTable(t.sort.elem, {ev(t.args[0]): 1})
        if op == "bag.count":
            return ev(t.args[1]).count(ev(t.args[0]))
        if op in ("bag.member", "set.member"):
            return ev(t.args[1]).count(ev(t.args[0])) >= 1
        if op in ("bag.subbag", "set.subset"):
            a, b = ev(t.args[0]), ev(t.args[1])
            return all(b.count(v) >= n for v, n in a.rows.items())
        if op in ("bag.union_max", "set.union"):
            return _union_max(ev(t.args[0]), ev(t.args[1]))
        if op == "bag.union_disjoint":
            return _union_disjoint(ev(t.args[0]), ev(t.args[1]))
        if op in ("bag.inter_min", "set.inter"):
            return _inter_min(ev(t.args[0]), ev(t.args[1]))
        if op == "bag.diff_subtract":
            return _diff_subtract(ev(t.args[0]), ev(t.args[1]))
        if op in ("bag.diff_remove", "set.minus"):
            return _diff_remove(ev(t.args[0]), ev(t.args[1]))
        if op == "bag.setof":
            return _setof(ev(t.args[0]))
        if op in ("bag.filter", "set.filter"):
            return _filter_rows(ev(t.args[0]),
                                lambda v: eval(t.fun, [v], funs))
        if op == "bag.map":
            return _map_rows(ev(t.args[0]),
                             lambda v: eval(t.fun, [v], funs), t.sort.elem)
        if op == "set.map":
            return _setof(_map_rows(ev(t.args[0]),
                                    lambda v: eval(t.fun, [v], funs),
                                    t.sort.elem))
        if op in ("table.product", "rel.product"):
            return _product(ev(t.args[0]), ev(t.args[1]), t.sort.elem, ceiling)
        if op in ("table.join", "rel.join"):
            pairs = list(zip(t.idx[::2], t.idx[1::2]))
            prod = _product(ev(t.args[0]), ev(t.args[1]), t.sort.elem, ceiling)
            left = len(t.args[0].sort.elem.comps)
            return _filter_rows(
                prod, lambda v: all(v[i] == v[left + j] for i, j in pairs))
        if op in ("table.proj", "rel.proj"):
            out = _map_rows(ev(t.args[0]),
                            lambda v: tuple(v[i] for i in t.idx), t.sort.elem)
            return _setof(out) if op == "rel.proj" else out
        raise EvalError("cannot evaluate %s" % to_sexp(t))

    return ext


def eval_table(db: Dict[str, ConcreteTable], t: Term,
               env: Optional[Dict[str, object]] = None,
               funs: Optional[Dict[tuple, object]] = None,
               ceiling: int = EVAL_ROW_CEILING) -> ConcreteTable:
    """Evaluate a table-sorted term over named concrete tables.

    `db` binds the free bag/set variables; `env` may bind element
    variables appearing inside the term.  Exceeding the interim row
    ceiling raises EvalError rather than truncating.
    """
    if t.sort.kind not in ("Bag", "Set"):
        raise EvalError("eval_table wants a table-sorted term, got %s"
                        % sort_to_sexp(t.sort))
    full = dict(env) if env else {}
    full.update(db)
    return eval_term(t, full, funs, _table_ext(ceiling))


# -- interpretations -----------------------------------------------------------------


@dataclass
class Interpretation:
    """A total assignment: element vars to values, bag vars to tables."""

    vars: Dict[str, object] = field(default_factory=dict)
    bags: Dict[str, ConcreteTable] = field(default_factory=dict)
    funs: Dict[tuple, object] = field(default_factory=dict)
    domains: Dict[Sort, List[object]] = field(default_factory=dict)

    def eval(self, t: Term, ceiling: int = EVAL_ROW_CEILING):
        env = dict(self.vars)
        env.update(self.bags)
        return eval_term(t, env, self.funs, _table_ext(ceiling))


def verify_model(interp: Interpretation, literals: Iterable[Term]) -> bool:
    """Evaluate every constraint under the interpretation and conjoin."""
    for lit in literals:
        try:
            if interp.eval(lit) is not True:
                return False
        except EvalError:
            return False
    return True


def build_model(config) -> Interpretation:
    """Read a model off a saturated configuration.

    `config` provides `cc` (the congruence store), `int_value(t)` for
    integer-sorted terms (the arithmetic model), and `elem_value(t)`
    returning a ground value for terms the element solver pinned, or
    None.  Classes without pinned values get fresh carrier values,
    distinct per sort; bag classes become tables by collecting their
    registered count terms; set classes by their membership edges.
    """
    cc = config.cc
    funs = dict(getattr(config, "funs", None) or {})
    interp = Interpretation(funs=funs)
    used: Dict[Sort, set] = {}
    gens: Dict[Sort, object] = {}

    def fresh(s: Sort, root: Term):
        if _domain_size(s) is not None:
            # finite sort: only explicit disequalities force distinctness
            clash = {class_val[r] for r in valued.get(s, [])
                     if cc.entails_diseq(root, r)}
            for v in _enumerate_domain(s):
                if v not in clash:
                    return v
            raise ModelFailure("carrier of %s exhausted for %s"
                               % (sort_to_sexp(s), to_sexp(root)))
        taken = used.setdefault(s, set())
        gen = gens.setdefault(s, _enumerate_domain(s))
        for v in gen:
            if v not in taken:
                return v
        raise ModelFailure("carrier of %s exhausted" % sort_to_sexp(s))

    class_val: Dict[Term, object] = {}
    valued: Dict[Sort, List[Term]] = {}
    roots = sorted(cc.roots(), key=to_sexp)
    for r in roots:
        s = r.sort
        if not is_element_sort(s) or s.kind == "Fun":
            continue
        if s == INT:
            v = config.int_value(r)
        else:
            v = config.elem_value(r)
            if v is None:
                v = fresh(s, r)
        class_val[r] = v
        used.setdefault(s, set()).add(v)
        valued.setdefault(s, []).append(r)
        interp.domains.setdefault(s, []).append(v)
        for m in cc.class_members(r):
            if m.op == "var":
                interp.vars[m.value] = v

    for r in roots:
        s = r.sort
        if s.kind == "Bag":
            rows: Dict[object, int] = {}
            for m in cc.counts_for_bag(r):
                n = config.int_value(m)
                if n <= 0:
                    continue
                ev = class_val[cc.find(m.args[0])]
                if rows.get(ev, n) != n:
                    raise ModelFailure(
                        "element %s counted both %d and %d in %s"
                        % (_value_text(ev), rows[ev], n, to_sexp(r)))
                rows[ev] = n
        elif s.kind == "Set":
            rows = {}
            for eroot, entry in cc.mem_set.get(r, {}).items():
                if entry[0]:
                    rows[class_val[cc.find(eroot)]] = 1
        else:
            continue
        table = ConcreteTable(s.elem, rows)
        for m in cc.class_members(r):
            if m.op == "var":
                interp.bags[m.value] = table
    return interp


# -- counterexample emission -----------------------------------------------------------


@dataclass
class CounterexampleDB:
    json_text: str
    sql_text: str


def _json_value(v: object):
    if v is NULL:
        return None
    if isinstance(v, Some):
        return _json_value(v.value)
    if isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, tuple):
        return [_json_value(x) for x in v]
    raise UnsupportedValue("cannot serialize %r" % (v,))


def _sql_type(s: Sort) -> str:
    if s.kind == "Nullable":
        return _sql_type(s.args[0])
    if s == INT:
        return "INT"
    if s == BOOL:
        return "BOOLEAN"
    if s == STRING or s.kind == "Elem":
        return "VARCHAR"
    raise UnsupportedValue("no SQL column type for %s" % sort_to_sexp(s))


def _sql_literal(v: object) -> str:
    if v is NULL:
        return "NULL"
    if isinstance(v, Some):
        return _sql_literal(v.value)
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return "'%s'" % v.replace("'", "''")
    raise UnsupportedValue("no SQL literal for %r" % (v,))


def emit_counterexample_db(interp: Interpretation,
                           schema: Dict[str, Sort]) -> CounterexampleDB:
    """Render the model's tables as canonical JSON and an ANSI SQL script.

    `schema` maps table names to their bag/set sorts (or directly to
    row sorts).  Tables missing from the model are emitted empty.
    """
    tables = {}
    stmts: List[str] = []
    for name in sorted(schema):
        s = schema[name]
        elem = s.elem if s.kind in ("Bag", "Set") else s
        table = interp.bags.get(name, ConcreteTable(elem))
        cols = table.columns
        flat_rows: List[list] = []
        for v, n in table.items():
            row = list(v) if elem.kind == "Tuple" else [v]
            flat_rows.extend([[_json_value(c) for c in row]] * n)
        tables[name] = {
            "columns": [sort_to_sexp(c) for c in cols],
            "rows": flat_rows,
        }
        decls = ", ".join("c%d %s" % (i, _sql_type(c))
                          for i, c in enumerate(cols))
        stmts.append("CREATE TABLE %s (%s);" % (name, decls))
        for v, n in table.items():
            row = list(v) if elem.kind == "Tuple" else [v]
            lit = ", ".join(_sql_literal(c) for c in row)
            stmts.extend(["INSERT INTO %s VALUES (%s);" % (name, lit)] * n)
    json_text = json.dumps({"tables": tables}, sort_keys=True, indent=2)
    return CounterexampleDB(json_text=json_text, sql_text="\n".join(stmts) + "\n")

"""Element-level reasoning.

Three services used by the table and relation calculi:

- big-step evaluation of computable function bodies over ground values;
- satisfiability of conjunctions of element literals (equalities,
  disequalities, integer comparisons, predicate applications), combining
  congruence closure with the integer store;
- the injectivity subcheck for map reasoning.

Ground values are plain Python data: int, bool, str, tuples for tuple
sorts, and NULL / Some(...) for nullable sorts.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .arith import SAT, UNKNOWN, UNSAT, ArithStore
from .congruence import CongruenceClosure
from .nullable import NULL, NullableValue, Some, beta, lower
from .rewrite import simplify
from .terms import (
    BOOL,
    INT,
    STRING,
    ElemFun,
    FALSE,
    FunSym,
    FreshVarRegistry,
    Sort,
    TRUE,
    Term,
    conj,
    disj,
    eq,
    free_vars,
    ite,
    mk,
    neq,
    null_of,
    select,
    some,
    subterms,
    to_sexp,
    var,
)


class EvalError(Exception):
    """A body stepped outside the total fragment (unbound variable,
    selector on null, uninterpreted application)."""


# -- evaluation ---------------------------------------------------------------


def eval_term(t: Term, env: Dict[str, object],
              funs: Optional[Dict[tuple, object]] = None, ext=None):
    """Big-step evaluation; `and`/`or`/`ite` evaluate lazily.

    `ext(t, env, funs)` extends the dispatch to operators this module
    does not know (the table evaluator plugs in here).
    """
    op = t.op
    if op == "var":
        if t.value not in env:
            raise EvalError("unbound variable %s" % t.value)
        return env[t.value]
    if op in ("int", "str", "bool"):
        return t.value
    if op == "+":
        return eval_term(t.args[0], env, funs, ext) \
            + eval_term(t.args[1], env, funs, ext)
    if op == "*":
        return eval_term(t.args[0], env, funs, ext) \
            * eval_term(t.args[1], env, funs, ext)
    if op == "neg":
        return -eval_term(t.args[0], env, funs, ext)
    if op == "max":
        return max(eval_term(a, env, funs, ext) for a in t.args)
    if op == "min":
        return min(eval_term(a, env, funs, ext) for a in t.args)
    if op in ("<=", "<", ">", ">="):
        a = eval_term(t.args[0], env, funs, ext)
        b = eval_term(t.args[1], env, funs, ext)
        return {"<=": a <= b, "<": a < b, ">": a > b, ">=": a >= b}[op]
    if op == "=":
        return eval_term(t.args[0], env, funs, ext) \
            == eval_term(t.args[1], env, funs, ext)
    if op == "not":
        return not eval_term(t.args[0], env, funs, ext)
    if op == "and":
        for a in t.args:
            if not eval_term(a, env, funs, ext):
                return False
        return True
    if op == "or":
        for a in t.args:
            if eval_term(a, env, funs, ext):
                return True
        return False
    if op == "ite":
        c = eval_term(t.args[0], env, funs, ext)
        return eval_term(t.args[1 if c else 2], env, funs, ext)
    if op == "tuple":
        return tuple(eval_term(a, env, funs, ext) for a in t.args)
    if op == "tuple.select":
        return eval_term(t.args[0], env, funs, ext)[t.idx[0]]
    if op == "tuple.proj":
        v = eval_term(t.args[0], env, funs, ext)
        return tuple(v[i] for i in t.idx)
    if op == "nullable.null":
        return NULL
    if op == "nullable.some":
        return Some(eval_term(t.args[0], env, funs, ext))
    if op == "nullable.val":
        v = eval_term(t.args[0], env, funs, ext)
        if v is NULL:
            raise EvalError("val applied to null at %s" % to_sexp(t))
        return v.value
    if op == "nullable.is_some":
        return isinstance(eval_term(t.args[0], env, funs, ext), Some)
    if op == "nullable.is_null":
        return eval_term(t.args[0], env, funs, ext) is NULL
    if op == "nullable.lift":
        args = []
        for a in t.args:
            v = eval_term(a, env, funs, ext)
            if v is NULL:
                return NULL
            args.append(v.value)
        return Some(eval(t.fun, args, funs))
    if op == "apply":
        if isinstance(t.fun, ElemFun):
            args = [eval_term(a, env, funs, ext) for a in t.args]
            return eval(t.fun, args, funs)
        args = tuple(eval_term(a, env, funs, ext) for a in t.args)
        key = (t.fun.name, args)
        if funs is not None and key in funs:
            return funs[key]
        raise EvalError("uninterpreted application %s" % to_sexp(t))
    if ext is not None:
        return ext(t, env, funs)
    raise EvalError("cannot evaluate %s" % to_sexp(t))


def eval(fun: ElemFun, args: Sequence[object],
         funs: Optional[Dict[tuple, object]] = None):
    """Apply a computable function to ground values."""
    if len(args) != fun.arity:
        raise EvalError("arity mismatch: %d args for %d params"
                        % (len(args), fun.arity))
    env = {name: v for (name, _), v in zip(fun.params, args)}
    return eval_term(fun.body, env, funs)


# -- satisfiability of element constraints ------------------------------------


@dataclass
class Assignment:
    """A model for element constraints: variable values plus a lookup
    table for uninterpreted applications.

    `classes` additionally records the value of every term the closure
    saw, keyed by the term itself; callers that feed in opaque atoms
    (the bag solver hands over its multiplicity terms) read their
    values back from here.
    """

    vars: Dict[str, object] = field(default_factory=dict)
    funs: Dict[tuple, object] = field(default_factory=dict)
    classes: Dict[Term, object] = field(default_factory=dict)

    def eval(self, t: Term):
        return eval_term(t, self.vars, self.funs)


def _replace(t: Term, old: Term, new: Term) -> Term:
    if t == old:
        return new
    if not t.args:
        return t
    args = tuple(_replace(a, old, new) for a in t.args)
    if args == t.args:
        return t
    return mk(t.op, *args, idx=t.idx, fun=t.fun, value=t.value,
              payload_sort=t.sort)


def _find_elem_ite(t: Term) -> Optional[Term]:
    """An ite subterm in operand position, if any; those must be split
    before the formula decomposes (the leaf engines treat ite opaquely)."""
    stack = [(t, True)]
    while stack:
        n, fpos = stack.pop()
        if n.op == "ite":
            if n.sort != BOOL or not fpos:
                return n
            stack.extend((a, True) for a in n.args)
            continue
        if fpos and n.op in ("and", "or", "not"):
            stack.extend((a, True) for a in n.args)
            continue
        stack.extend((a, False) for a in n.args)
    return None


def _split_candidate(atoms: List[Term], resolved: frozenset) -> Optional[Term]:
    """First nullable selector/tester argument not yet case-split."""
    for a in atoms:
        for s in subterms(a):
            if s.op in ("nullable.val", "nullable.is_some", "nullable.is_null"):
                arg = s.args[0]
                if arg.op not in ("nullable.some", "nullable.null") \
                        and arg not in resolved:
                    return arg
    return None


_FORMULA_OPS = ("<=", "=", "and", "or", "not", "ite")


def _has_formula_structure(g: Term) -> bool:
    """Do the equality's operands contain connective or comparison
    structure that only branch-level reasoning can see?"""
    for side in g.args:
        for s in subterms(side):
            if s.op in _FORMULA_OPS:
                return True
    return False


def _diseq_refinement(a: Term, b: Term) -> Term:
    """A formula forcing two structured classes apart, component-wise."""
    s = a.sort
    if s.kind == "Tuple":
        comps = [neq(select(i, a), select(i, b)) for i in range(len(s.args))]
        return disj(*comps) if comps else FALSE
    if s.kind == "Nullable":
        sa = mk("nullable.is_some", a)
        sb = mk("nullable.is_some", b)
        return disj(
            conj(sa, sb, neq(mk("nullable.val", a), mk("nullable.val", b))),
            conj(sa, mk("nullable.is_null", b)),
            conj(mk("nullable.is_null", a), sb),
        )
    raise AssertionError("no refinement for sort %r" % (s,))


_LEAF_BUDGET = 20000
_REFINE_BUDGET = 32
REFINE = "refine"


def check_E(literals: Iterable[Term],
            reg: Optional[FreshVarRegistry] = None
            ) -> Tuple[str, Optional[Assignment]]:
    """Decide a conjunction of element literals.

    Returns (sat, assignment), (unsat, None), or (unknown, None).  The
    assignment maps variable names to ground values and uninterpreted
    applications to result values, enough to re-evaluate every literal.
    """
    lits = list(literals)
    if reg is None:
        reg = FreshVarRegistry()
    for lit in lits:
        reg.reserve(v.value for v in free_vars(lit))
    start = [simplify(lower(l)) for l in lits]
    stack = [(start, [], frozenset(), 0)]
    visits = 0
    unknown = False
    while stack:
        visits += 1
        if visits > _LEAF_BUDGET:
            return (UNKNOWN, None)
        pending, atoms, resolved, refines = stack.pop()
        if pending:
            f = pending[-1]
            rest = pending[:-1]
            ite_sub = _find_elem_ite(f)
            if ite_sub is not None:
                c, a, b = ite_sub.args
                stack.append((rest + [c, _replace(f, ite_sub, a)],
                              atoms, resolved, refines))
                stack.append((rest + [mk("not", c), _replace(f, ite_sub, b)],
                              atoms, resolved, refines))
                continue
            op = f.op
            if op == "bool":
                if f.value:
                    stack.append((rest, atoms, resolved, refines))
                continue
            if op == "and":
                stack.append((rest + list(f.args), atoms, resolved, refines))
                continue
            if op == "or":
                for d in f.args:
                    stack.append((rest + [d], atoms, resolved, refines))
                continue
            if op == "ite":
                c, a, b = f.args
                stack.append((rest + [c, a], atoms, resolved, refines))
                stack.append((rest + [mk("not", c), b], atoms, resolved, refines))
                continue
            if op == "=" and f.args[0].sort == BOOL \
                    and _has_formula_structure(f):
                a, b = f.args
                stack.append((rest + [ite(a, b, mk("not", b))],
                              atoms, resolved, refines))
                continue
            if op == "not":
                g = f.args[0]
                if g.op == "bool":
                    if not g.value:
                        stack.append((rest, atoms, resolved, refines))
                    continue
                if g.op == "not":
                    stack.append((rest + [g.args[0]], atoms, resolved, refines))
                    continue
                if g.op == "and":
                    stack.append((rest + [mk("or", *[mk("not", x) for x in g.args])],
                                  atoms, resolved, refines))
                    continue
                if g.op == "or":
                    stack.append((rest + [mk("and", *[mk("not", x) for x in g.args])],
                                  atoms, resolved, refines))
                    continue
                if g.op == "ite":
                    c, a, b = g.args
                    stack.append((rest + [ite(c, mk("not", a), mk("not", b))],
                                  atoms, resolved, refines))
                    continue
                if g.op == "=" and g.args[0].sort == BOOL \
                        and _has_formula_structure(g):
                    a, b = g.args
                    stack.append((rest + [ite(a, mk("not", b), b)],
                                  atoms, resolved, refines))
                    continue
            stack.append((rest, atoms + [f], resolved, refines))
            continue
        arg = _split_candidate(atoms, resolved)
        if arg is not None:
            base = arg.sort.args[0]
            w = reg.fresh_var(base, stem="u")
            r2 = resolved | {arg}
            stack.append(([], atoms + [eq(arg, some(w))], r2, refines))
            # in the null branch val(arg) is unconstrained; replace it with
            # a fresh variable so no selector-on-null survives to the leaf
            g = reg.fresh_var(base, stem="g")
            v_term = mk("nullable.val", arg)
            null_atoms = [_replace(a, v_term, g) for a in atoms]
            stack.append(([], null_atoms + [eq(arg, null_of(base))], r2, refines))
            continue
        res = _leaf(atoms, reg)
        if res[0] == SAT:
            return res
        if res[0] == REFINE:
            # the leaf model collided on a structured disequality; force the
            # pair apart component-wise and resolve the branch again
            if refines >= _REFINE_BUDGET:
                unknown = True
            else:
                stack.append(([res[1]], atoms, resolved, refines + 1))
            continue
        if res[0] == UNKNOWN:
            unknown = True
    return (UNKNOWN, None) if unknown else (UNSAT, None)


def _leaf(atoms: List[Term], reg: FreshVarRegistry
          ) -> Tuple[str, Optional[Assignment]]:
    cc = CongruenceClosure()
    ar = ArithStore()
    arith_atoms: List[Term] = []
    for a in atoms:
        pol = True
        g = a
        while g.op == "not":
            pol = not pol
            g = g.args[0]
        if g.op == "=":
            l, r = g.args
            lit = eq(l, r) if pol else mk("not", eq(l, r))
            if cc.assert_literal(lit) is not None:
                return (UNSAT, None)
            if l.sort == INT:
                ar.assert_formula(lit)
                arith_atoms.append(lit)
        elif g.op == "<=":
            ar.assert_formula(a if pol else mk("not", g))
        elif g.sort == BOOL:
            if cc.merge(g, TRUE if pol else FALSE) is not None:
                return (UNSAT, None)
        else:
            raise ValueError("not an element literal: %s" % to_sexp(a))

    # everything Int-sorted that congruence knows is also made visible to
    # the integer store, then facts flow both ways until fixpoint
    watched = [t for t in cc.all_terms() if t.sort == INT]
    for t in watched:
        ar.to_lin(t)
    for _ in range(20):
        verdict, _, _ = ar.check()
        if verdict == UNSAT:
            return (UNSAT, None)
        if verdict == UNKNOWN:
            return (UNKNOWN, None)
        changed = False
        for l in cc.closure_literals():
            inner = l.args[0] if l.op == "not" else l
            if inner.op == "=" and inner.args[0].sort == INT:
                before = len(ar.lin)
                ar.assert_formula(l)
                if len(ar.lin) != before:
                    changed = True
        for ti, tj in ar.implied_equalities(watched):
            if not cc.same(ti, tj):
                if cc.merge(ti, tj) is not None:
                    return (UNSAT, None)
                changed = True
        if not changed:
            break
    verdict, amodel, _ = ar.check()
    if verdict == UNSAT:
        return (UNSAT, None)
    if verdict == UNKNOWN:
        return (UNKNOWN, None)
    return _build_assignment(cc, ar, amodel, reg)


# -- model construction --------------------------------------------------------


def _domain_size(s: Sort) -> Optional[int]:
    if s == BOOL:
        return 2
    if s.kind == "Nullable":
        base = _domain_size(s.args[0])
        return None if base is None else base + 1
    if s.kind == "Tuple":
        total = 1
        for c in s.args:
            n = _domain_size(c)
            if n is None:
                return None
            total *= n
        return total
    return None  # Int, String, uninterpreted: infinite


def _enumerate_domain(s: Sort):
    if s == BOOL:
        yield False
        yield True
        return
    if s.kind == "Nullable":
        yield NULL
        for v in _enumerate_domain(s.args[0]):
            yield Some(v)
        return
    if s.kind == "Tuple":
        if not s.args:
            yield ()
            return
        head, tail = s.args[0], s.args[1:]
        for h in _enumerate_domain(head):
            for rest in _enumerate_domain(Sort("Tuple", tail)):
                yield (h,) + rest
        return
    if s == INT:
        n = 0
        while True:
            yield n
            n = -n if n > 0 else -n + 1
    elif s == STRING:
        k = 0
        while True:
            yield "elem!String!%d" % k
            k += 1
    else:
        k = 0
        while True:
            yield "elem!%s!%d" % (s.name or s.kind, k)
            k += 1


def _build_assignment(cc: CongruenceClosure, ar: ArithStore, amodel,
                      reg: FreshVarRegistry
                      ) -> Tuple[str, Optional[Assignment]]:
    # every Int class is valued through the linear model of any member
    intval: Dict[Term, int] = {}
    if amodel is not None:
        for t in cc.all_terms():
            if t.sort == INT:
                root = cc.find(t)
                if root in intval:
                    continue
                v = ar.to_lin(t).value(amodel)
                intval[root] = int(v)

    # select/proj members let a witness-free class borrow structure
    sel_map: Dict[tuple, Term] = {}
    for t in cc.all_terms():
        if t.op == "tuple.select":
            sel_map[(cc.find(t.args[0]), t.idx[0])] = t

    values: Dict[Term, object] = {}
    fresh_used: Dict[Sort, Set[object]] = {}
    in_progress: Set[Term] = set()

    def fresh_distinct(s: Sort):
        used = fresh_used.setdefault(s, set())
        for cand in _enumerate_domain(s):
            if cand not in used:
                used.add(cand)
                return cand
        return None

    def from_witness(w: Term):
        if w.op in ("int", "str", "bool"):
            return w.value
        if w.op == "tuple":
            return tuple(value_of(a) for a in w.args)
        if w.op == "nullable.some":
            return Some(value_of(w.args[0]))
        if w.op == "nullable.null":
            return NULL
        raise AssertionError(w.op)

    def synthesize(root: Term):
        """Value for a witness-free class, honoring structural members."""
        if root.sort == INT and root in intval:
            return intval[root]
        for m in cc.class_members(root):
            if m.op == "tuple.proj" and cc.find(m.args[0]) not in in_progress:
                base = value_of(m.args[0])
                return tuple(base[i] for i in m.idx)
        if root.sort.kind == "Tuple":
            comps = []
            for i, cs in enumerate(root.sort.args):
                sel = sel_map.get((root, i))
                comps.append(value_of(sel) if sel is not None
                             else fresh_component(cs))
            return tuple(comps)
        return fresh_distinct(root.sort)

    def fresh_component(s: Sort):
        v = fresh_distinct(s)
        if v is None:  # finite component domain exhausted; reuse smallest
            v = next(iter(_enumerate_domain(s)))
        return v

    def value_of(t: Term):
        root = cc.find(t)
        if root in values:
            return values[root]
        in_progress.add(root)
        try:
            w = cc.witness(root)
            v = from_witness(w) if w is not None else synthesize(root)
        finally:
            in_progress.discard(root)
        values[root] = v
        fresh_used.setdefault(root.sort, set()).add(v)
        return v

    roots = list(cc.roots())
    # ground first so later fresh picks avoid pinned values
    for root in roots:
        w = cc.witness(root)
        if w is not None and _ground_witness(w):
            value_of(root)
        elif root.sort == INT and root in intval:
            values[root] = intval[root]
            fresh_used.setdefault(INT, set()).add(intval[root])

    # finite classes with no structure are colored against the diseq graph;
    # exhausting that search is a real conflict since nothing else pins them
    finite_free = [r for r in roots
                   if r not in values and cc.witness(r) is None
                   and _domain_size(r.sort) is not None
                   and not any(m.op == "tuple.proj" for m in cc.class_members(r))
                   and not (r.sort.kind == "Tuple"
                            and any((r, i) in sel_map
                                    for i in range(len(r.sort.args))))]
    if finite_free:
        ok = _color_finite(cc, finite_free, values, fresh_used)
        if ok is False:
            return (UNSAT, None)
        if ok is None:
            return (UNKNOWN, None)
    for r in roots:
        value_of(r)

    # a structured pair may still have collided (components free in the
    # linear model); hand the offending pair back for targeted splitting
    by_sort: Dict[Sort, List[Term]] = {}
    for r in roots:
        by_sort.setdefault(r.sort, []).append(r)
    for s, group in sorted(by_sort.items(), key=lambda kv: repr(kv[0])):
        group = sorted(group, key=to_sexp)
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if values[a] == values[b] and cc.entails_diseq(a, b):
                    if s.kind in ("Tuple", "Nullable"):
                        return (REFINE, _diseq_refinement(a, b))
                    return (UNKNOWN, None)

    asg = Assignment()
    for t in cc.all_terms():
        asg.classes[t] = value_of(t)
        if t.op == "var":
            asg.vars[t.value] = asg.classes[t]
    if amodel is not None:
        for t in ar.var_order:
            if t.op == "var" and t.value not in asg.vars:
                asg.vars[t.value] = int(amodel[t])
    for t in cc.all_terms():
        if t.op == "apply" and isinstance(t.fun, FunSym):
            key = (t.fun.name, tuple(value_of(a) for a in t.args))
            v = value_of(t)
            if key in asg.funs and asg.funs[key] != v:
                return (UNKNOWN, None)  # value reuse collided; give up honestly
            asg.funs[key] = v
    return (SAT, asg)


def _ground_witness(w: Term) -> bool:
    if w.op in ("int", "str", "bool", "nullable.null"):
        return True
    if w.op in ("tuple", "nullable.some"):
        return all(_ground_witness(a) for a in w.args)
    return False


_COLOR_BUDGET = 20000


def _color_finite(cc: CongruenceClosure, free: List[Term],
                  values: Dict[Term, object],
                  fresh_used: Dict[Sort, Set[object]]) -> Optional[bool]:
    """Pick finite-domain values so disequal classes stay distinct.

    Returns True on success, False when the search space is exhausted
    (a genuine conflict), None when the budget runs out.
    """
    order = sorted(free, key=to_sexp)
    nodes = [0]

    def distinct_ok(r: Term, v: object) -> bool:
        for other, val in values.items():
            if other is not r and other.sort == r.sort and val == v \
                    and cc.entails_diseq(r, other):
                return False
        return True

    def go(i: int) -> Optional[bool]:
        nodes[0] += 1
        if nodes[0] > _COLOR_BUDGET:
            return None
        if i == len(order):
            return True
        r = order[i]
        dom = list(_enumerate_domain(r.sort))
        taken = set(val for other, val in values.items() if other.sort == r.sort)
        ordered = [v for v in dom if v not in taken] + [v for v in dom if v in taken]
        for v in ordered:
            if distinct_ok(r, v):
                values[r] = v
                fresh_used.setdefault(r.sort, set()).add(v)
                res = go(i + 1)
                if res is not False:
                    return res
                del values[r]
        return False

    return go(0)


# -- injectivity ---------------------------------------------------------------

INJECTIVE = "injective"
NOT_PROVEN_INJECTIVE = "not-proven-injective"


def _sample_values(s: Sort, depth: int = 0) -> List[object]:
    if s == INT:
        return list(range(-3, 4))
    if s == BOOL:
        return [False, True]
    if s == STRING:
        return ["", "a", "b"]
    if s.kind == "Nullable":
        return [NULL] + [Some(v) for v in _sample_values(s.args[0], depth + 1)]
    if s.kind == "Tuple":
        combos: List[tuple] = [()]
        for c in s.args:
            vs = _sample_values(c, depth + 1)[:4]
            combos = [base + (v,) for base in combos for v in vs]
            if len(combos) > 256:
                combos = combos[:256]
        return combos
    return []  # uninterpreted: nothing to sample


def find_collision(f: ElemFun, cap: int = 200000):
    """Search ground argument pairs for f(a) = f(b) with a != b."""
    (pname, psort), = f.params
    samples = _sample_values(psort)
    seen: Dict[object, object] = {}
    tried = 0
    for v in samples:
        tried += 1
        if tried > cap:
            break
        try:
            out = eval(f, [v])
        except EvalError:
            continue
        if out in seen and seen[out] != v:
            return (seen[out], v)
        seen[out] = v
    return None


def _whitelisted(f: ElemFun) -> bool:
    (pname, psort), = f.params
    x = var(pname, psort)
    b = lower(f.body)
    if b == x:
        return True
    if b.op == "neg" and b.args[0] == x:
        return True
    if b.op == "+":
        l, r = b.args
        if l == x and r.op == "int":
            return True
        if r == x and l.op == "int":
            return True
        # c - x arrives as c + neg(x)
        if l.op == "int" and r.op == "neg" and r.args[0] == x:
            return True
        if r.op == "int" and l.op == "neg" and l.args[0] == x:
            return True
    if psort.kind == "Tuple":
        n = len(psort.args)
        if b.op == "tuple.proj" and b.args[0] == x and sorted(b.idx) == list(range(n)):
            return True
        if b.op == "tuple":
            covered = set()
            for a in b.args:
                if a.op == "tuple.select" and a.args[0] == x:
                    covered.add(a.idx[0])
                elif a.op in ("int", "str", "bool"):
                    continue  # ground padding
                else:
                    return False
            return covered == set(range(n))
    return False


def injectivity_check(f: ElemFun) -> str:
    """Injective only for shapes where that is certain; the verdict is
    cross-checked by a bounded collision search."""
    if f.arity != 1:
        raise ValueError("injectivity_check expects a unary function")
    if not _whitelisted(f):
        return NOT_PROVEN_INJECTIVE
    if find_collision(f) is not None:
        return NOT_PROVEN_INJECTIVE
    return INJECTIVE

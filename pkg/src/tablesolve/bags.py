"""Tableaux solver for bag constraints.

A configuration is a triple of stores: A holds integer constraints over
multiplicity terms, B holds bag-structure (dis)equalities inside a
congruence closure, and E holds element literals.  Derivation rules move
facts between the stores and reduce every bag operator to statements
about counts:

    m(e, t ++ u) = m(e,t) + m(e,u)          disjoint union
    m(e, t | u)  = max(m(e,t), m(e,u))      max union
    m(e, t & u)  = min(m(e,t), m(e,u))      intersection
    m(e, t \\ u)  = truncated difference     diff subtract
    m(e, t \\\\ u) = ite(m(e,u)=0, m(e,t), 0) diff remove
    m(e, setof t) = min(m(e,t), 1)          duplicate removal

plus product/join rules that multiply tuple counts, filter rules that
consult the predicate, and map rules that connect a bag to its image.
Branch search is iterative deepening on rule applications with a
left-first branch stack; conflicts close branches, saturation yields a
model that is verified before a sat verdict is produced.

Multiplicity nonnegativity (the m >= 0 rule) fires eagerly: the integer
store bounds every bag.count term at registration, so the constraint
exists before any other rule can observe the term.

Set TABLESOLVE_LOG=1 to stream rule applications to stderr.
"""

import os
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

from .arith import SAT, UNKNOWN, UNSAT, ArithStore
from .congruence import CongruenceClosure
from .elements import EvalError, INJECTIVE, check_E, injectivity_check
from .model import Interpretation, ModelFailure, build_model, verify_model
from .nullable import beta
from .terms import (
    INT,
    ElemFun,
    FreshVarRegistry,
    Term,
    add,
    apply_fun,
    eq,
    free_vars,
    leq,
    mcount,
    mk,
    mul,
    neg,
    neq,
    num,
    subterms,
    to_sexp,
    tup,
    tuple_proj_fun,
)

OPEN = "open"
CLOSED = "unsat"

RULE_BUDGET_DEFAULT = 20000
TIME_BUDGET_DEFAULT = 10.0
NI_ROUND_CAP = 3

_SUM_OPS = {
    "bag.union_disjoint": "Disjoint Union",
    "bag.union_max": "Max Union",
    "bag.inter_min": "Intersection",
}
_DIFF_OPS = {
    "bag.diff_subtract": "Diff Subtract",
    "bag.diff_remove": "Diff Remove",
}
_SCAN_OPS = (
    "bag", "bag.empty", "bag.setof", "bag.filter", "bag.map",
    "table.product", "table.join",
) + tuple(_SUM_OPS) + tuple(_DIFF_OPS)

BRANCHING_RULES = frozenset([
    "E-Ident", "Bag 1", "Diff Subtract", "Diff Remove", "Setof", "Filter Up",
])
CONFLICT_RULES = frozenset(["A-Conf", "B-Conf", "E-Conf"])


class _Giveup(Exception):
    """Search cannot continue; carries the unknown-verdict reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class RuleInstance:
    """A rule together with the premise terms it binds."""

    rule: str
    bindings: tuple = ()

    def __repr__(self):
        parts = ", ".join(to_sexp(b) if isinstance(b, Term) else repr(b)
                          for b in self.bindings)
        return "%s(%s)" % (self.rule, parts)


@dataclass
class NonInjectiveMapAux:
    """Bookkeeping for one non-injective map term pi(f, t).

    `delem` is the integer variable for the number of distinct elements
    of t; `ind` maps each known element of t to its index variable
    (constrained 1 <= i <= delem); `sum` maps (element sexp, chain
    position) to the running-sum variable, with sum position 0 asserted
    equal to 0 when the chain is created.  `order` fixes the indexing:
    element k of the list owns index k+1, and the list only ever grows,
    so chains emitted in earlier rounds stay valid.
    """

    delem: Term
    ind: Dict[Term, Term] = field(default_factory=dict)
    sum: Dict[Tuple[str, int], Term] = field(default_factory=dict)
    order: List[Term] = field(default_factory=list)
    lens: Set[int] = field(default_factory=set)

    def copy(self) -> "NonInjectiveMapAux":
        dup = NonInjectiveMapAux(self.delem)
        dup.ind = dict(self.ind)
        dup.sum = dict(self.sum)
        dup.order = list(self.order)
        dup.lens = set(self.lens)
        return dup


@dataclass
class Verdict:
    kind: str                      # sat | unsat | unknown
    model: Optional[Interpretation] = None
    reason: str = ""               # unknown: budget | nonlinear | non-ground-element
    trace: List[str] = field(default_factory=list)


class Configuration:
    """One node of the derivation tree: the three stores plus the
    journal of rule applications and the redundancy bookkeeping."""

    def __init__(self, reg: Optional[FreshVarRegistry] = None,
                 sink: Optional[List[str]] = None):
        self.reg = reg if reg is not None else FreshVarRegistry()
        self.ar = ArithStore()
        self.cc = CongruenceClosure()
        self.a_lits: List[Term] = []
        self.b_lits: List[Term] = []
        self.e_lits: List[Term] = []
        self.a_seen: Set[str] = set()
        self.b_seen: Set[str] = set()
        self.e_seen: Set[str] = set()
        self.bag_diseqs: List[Tuple[Term, Term]] = []
        self.fired: Set[tuple] = set()
        self.demands: List[Tuple[Term, Term]] = []
        self.ni: Dict[str, NonInjectiveMapAux] = {}
        self.status = OPEN
        self.journal: List[str] = []
        self._sink = sink
        self._inj: Dict[int, bool] = {}
        self._gen = 0              # bumped on every store change
        self._a_conf: Tuple[int, str] = (-1, SAT)
        self._e_conf: Tuple[int, str] = (-1, SAT)
        self._ent: Dict[str, bool] = {}
        self._impl: Tuple[tuple, list] = ((), [])
        self._levels: List[tuple] = []
        self._log: Optional[bool] = None
        self.deadline: Optional[float] = None

    # -- branch stack ------------------------------------------------------

    def push(self) -> None:
        self.ar.push()
        self.cc.push()
        self._levels.append((
            len(self.a_lits), len(self.b_lits), len(self.e_lits),
            len(self.bag_diseqs), len(self.demands), len(self.journal),
            set(self.a_seen), set(self.b_seen), set(self.e_seen),
            set(self.fired), {k: v.copy() for k, v in self.ni.items()},
            self.status, self._a_conf, self._e_conf, self._gen,
        ))

    def pop(self) -> None:
        (na, nb, ne, nd, ndem, nj, aseen, bseen, eseen, fired, ni,
         status, aconf, econf, gen) = self._levels.pop()
        self.ar.pop()
        self.cc.pop()
        del self.a_lits[na:]
        del self.b_lits[nb:]
        del self.e_lits[ne:]
        del self.bag_diseqs[nd:]
        del self.demands[ndem:]
        del self.journal[nj:]
        self.a_seen, self.b_seen, self.e_seen = aseen, bseen, eseen
        self.fired = fired
        self.ni = ni
        self.status = status
        self._a_conf, self._e_conf = aconf, econf
        self._gen = gen
        self._ent.clear()
        self._impl = ((), [])

    def clone(self) -> "Configuration":
        """Independent copy; rebuilds the stores by replaying the
        literal lists (the stores themselves only support push/pop)."""
        dup = Configuration(self.reg, self._sink)
        for f in self.a_lits:
            dup._add_a(f)
        for l in self.b_lits:
            dup._add_b(l)
        for l in self.e_lits:
            dup._add_e(l)
        dup.bag_diseqs = list(self.bag_diseqs)
        dup.fired = set(self.fired)
        dup.demands = list(self.demands)
        dup.ni = {k: v.copy() for k, v in self.ni.items()}
        dup.status = self.status
        dup.journal = list(self.journal)
        dup.deadline = self.deadline
        dup._inj = dict(self._inj)
        return dup

    # -- store updates -------------------------------------------------------

    def _bump(self) -> None:
        self._gen += 1

    def _add_a(self, f: Term) -> bool:
        key = to_sexp(f)
        if key in self.a_seen:
            return False
        self.a_seen.add(key)
        atom = f.args[0] if f.op == "not" else f
        if atom.op == "=":
            flipped = eq(atom.args[1], atom.args[0])
            self.a_seen.add(to_sexp(mk("not", flipped) if f.op == "not"
                                    else flipped))
        self.a_lits.append(f)
        for st in subterms(f):
            if st.op == "bag.count":
                self.cc.add_term(st)
        self.ar.assert_formula(f)
        self._ent.clear()
        self._bump()
        return True

    def _add_b(self, lit: Term) -> bool:
        atom = lit.args[0] if lit.op == "not" else lit
        a, b = atom.args
        if lit.op == "not":
            if self.cc.entails_diseq(a, b):
                return False
        elif self.cc.same(a, b):
            return False
        self.b_seen.add(to_sexp(lit))
        self.b_lits.append(lit)
        self.cc.assert_literal(lit)
        if lit.op == "not" and a.sort.kind == "Bag":
            self.bag_diseqs.append((a, b))
        self._bump()
        return True

    def _add_e(self, lit: Term) -> bool:
        key = to_sexp(lit)
        if key in self.e_seen:
            return False
        self.e_seen.add(key)
        self.e_lits.append(lit)
        self._bump()
        return True

    def add_fact(self, lit: Term) -> bool:
        """Route one literal into the stores it belongs to."""
        atom = lit.args[0] if lit.op == "not" else lit
        if atom.op == "=":
            s = atom.args[0].sort
            if s.kind in ("Bag", "Set"):
                return self._add_b(lit)
            if s == INT:
                changed = self._add_b(lit)
                return self._add_a(lit) or changed
            changed = self._add_b(lit)
            return self._add_e(lit) or changed
        if atom.op == "<=":
            return self._add_a(lit)
        if atom.op in ("set.member", "bag.member"):
            self.b_seen.add(to_sexp(lit))
            self.b_lits.append(lit)
            self.cc.assert_literal(lit)
            self._bump()
            return True
        return self._add_e(lit)

    def journal_note(self, line: str) -> None:
        self.journal.append(line)
        if self._sink is not None:
            self._sink.append(line)
        if self._log is None:
            self._log = bool(os.environ.get("TABLESOLVE_LOG"))
        if self._log:
            print("[tablesolve] %s" % line, file=sys.stderr)

    # -- queries ---------------------------------------------------------------

    def has_a(self, f: Term) -> bool:
        return to_sexp(f) in self.a_seen

    def has_e(self, lit: Term) -> bool:
        return to_sexp(lit) in self.e_seen

    def entails_pos(self, ct: Term) -> bool:
        return self.entails(leq(num(1), ct))

    def entails(self, f: Term) -> bool:
        # the answer only depends on the A store, so the cache survives
        # congruence and element updates and is wiped by _add_a/pop
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Giveup("budget")
        key = to_sexp(f)
        hit = self._ent.get(key)
        if hit is None:
            hit = self.ar.entails(f) is True
            self._ent[key] = hit
        return hit

    def implied_pairs(self) -> List[Tuple[Term, Term]]:
        watched = [t for t in self.cc.all_terms() if t.sort == INT]
        key = (len(self.a_lits), len(watched))
        if self._impl[0] != key:
            self._impl = (key, self.ar.implied_equalities(watched))
        return self._impl[1]

    def injective(self, fun) -> bool:
        """Whether the map-down shortcut may treat `fun` as invertible.

        Injectivity alone is not enough: the rule asserts f(w) = e for
        a fresh preimage w, which is only satisfiable when every value
        of the result sort has a preimage.  Identity, integer shift and
        negation qualify; everything else takes the counting path.
        """
        key = id(fun)
        if key not in self._inj:
            self._inj[key] = (_invertible(fun)
                              and injectivity_check(fun) == INJECTIVE)
        return self._inj[key]

    def aux_for(self, w: Term) -> NonInjectiveMapAux:
        key = to_sexp(w)
        if key not in self.ni:
            d = self.reg.fresh_var(INT, stem="de")
            self.ni[key] = NonInjectiveMapAux(delem=d)
        return self.ni[key]


# -- term helpers ---------------------------------------------------------------


def _ground_int(t: Term) -> bool:
    return t.op == "int" or (t.op == "neg" and t.args[0].op == "int")


def _invertible(fun) -> bool:
    """True for unary functions whose image is the whole result sort,
    so a preimage exists for any element: v, v + c, c + v, -v."""
    if not isinstance(fun, ElemFun) or fun.arity != 1:
        return False
    name = fun.params[0][0]
    body = fun.body

    def is_param(t: Term) -> bool:
        return t.op == "var" and t.value == name

    if is_param(body):
        return True
    if body.op == "+" and len(body.args) == 2:
        a, b = body.args
        return (is_param(a) and _ground_int(b)) \
            or (is_param(b) and _ground_int(a))
    if body.op == "neg":
        return is_param(body.args[0])
    return False


def _image(fun, e: Term) -> Term:
    if isinstance(fun, ElemFun):
        return beta(fun, [e])
    return apply_fun(fun, e)


def _pred(fun, e: Term) -> Term:
    return _image(fun, e)


def _the_count(cfg: Configuration, e: Term, s: Term) -> Term:
    """The registered count term for (class of e, class of s), or a new
    one on the class representatives."""
    if cfg.cc.has_term(e):
        for ct in cfg.cc.counts_for_bag(s) if cfg.cc.has_term(s) else []:
            if cfg.cc.same(ct.args[0], e):
                return ct
    return mcount(e, cfg.cc.find(s) if cfg.cc.has_term(s) else s)


def _counts_on(cfg: Configuration, s: Term) -> List[Term]:
    if not cfg.cc.has_term(s):
        return []
    return list(cfg.cc.counts_for_bag(s))


def _elem_reps(cfg: Configuration, bags: Sequence[Term]) -> List[Term]:
    """Distinct element classes counted on any of the given bags."""
    seen: Dict[Term, Term] = {}
    for s in bags:
        for ct in _counts_on(cfg, s):
            root = cfg.cc.find(ct.args[0])
            if root not in seen:
                seen[root] = ct.args[0]
    return list(seen.values())


def _tuple_witness(cfg: Configuration, e: Term) -> Optional[Term]:
    if e.op == "tuple":
        return e
    if not cfg.cc.has_term(e):
        return None
    for m in cfg.cc.class_members(e):
        if m.op == "tuple":
            return m
    return None


def _scan(cfg: Configuration) -> Dict[str, List[Term]]:
    idx: Dict[str, List[Term]] = {op: [] for op in _SCAN_OPS}
    for t in cfg.cc.all_terms():
        if t.op in idx:
            idx[t.op].append(t)
    return idx


def _decided(cfg: Configuration, a: Term, b: Term) -> Optional[bool]:
    if cfg.cc.same(a, b):
        return True
    if cfg.cc.entails_diseq(a, b):
        return False
    return None


# -- rule enumeration -----------------------------------------------------------


def _iter_instances(cfg: Configuration) -> Iterator[RuleInstance]:
    if cfg.status != OPEN:
        return
    if cfg.cc.conflict is not None:
        yield RuleInstance("B-Conf", ())
        return
    gen, verdict = cfg._a_conf
    if gen != len(cfg.a_lits):
        verdict, _, _ = cfg.ar.check()
        cfg._a_conf = (len(cfg.a_lits), verdict)
    if verdict == UNSAT:
        yield RuleInstance("A-Conf", ())
        return
    if verdict == UNKNOWN:
        nonlinear = any(d[0] == "muldef" for d in cfg.ar.defs)
        raise _Giveup("nonlinear" if nonlinear else "budget")
    egen, everdict = cfg._e_conf
    if egen != len(cfg.e_lits) and cfg.e_lits:
        everdict, _ = check_E(cfg.e_lits, cfg.reg)
        cfg._e_conf = (len(cfg.e_lits), everdict)
    if everdict == UNSAT:
        yield RuleInstance("E-Conf", ())
        return
    if everdict == UNKNOWN:
        raise _Giveup("budget")

    idx = _scan(cfg)
    yield from _iter_props(cfg)
    yield from _iter_theory(cfg, idx)
    yield from _iter_branching(cfg, idx)
    yield from _iter_map(cfg, idx)


def _iter_props(cfg: Configuration) -> Iterator[RuleInstance]:
    # spanning equalities per congruence class (transitivity closes the
    # rest inside the receiving store)
    for root in list(cfg.cc.roots()):
        members = cfg.cc.class_members(root)
        if len(members) > 1:
            srt = root.sort
            pivot = members[0]
            if srt == INT:
                for m in members[1:]:
                    lit = eq(pivot, m)
                    if not cfg.has_a(lit):
                        yield RuleInstance("B-A-Prop", (lit,))
            elif srt.kind not in ("Bag", "Set", "Fun"):
                for m in members[1:]:
                    lit = eq(pivot, m)
                    if not cfg.has_e(lit):
                        yield RuleInstance("B-E-Prop", (lit,))
        if root.sort.kind == "Bag":
            # counts congruent through merged element or bag classes
            groups: Dict[Term, Term] = {}
            for ct in cfg.cc.counts_for_bag(root):
                erep = cfg.cc.find(ct.args[0])
                first = groups.get(erep)
                if first is None:
                    groups[erep] = ct
                else:
                    lit = eq(first, ct)
                    if not cfg.has_a(lit):
                        yield RuleInstance("B-A-Prop", (lit,))
    for x, y in cfg.implied_pairs():
        if not cfg.cc.same(x, y):
            yield RuleInstance("A-Prop", (x, y))


def _iter_theory(cfg: Configuration, idx) -> Iterator[RuleInstance]:
    # Diseq: one witness element per disequal pair of bag classes
    for a, b in cfg.bag_diseqs:
        ra, rb = cfg.cc.find(a), cfg.cc.find(b)
        key = ("Diseq",) + tuple(sorted((to_sexp(ra), to_sexp(rb))))
        if key not in cfg.fired:
            yield RuleInstance("Diseq", (a, b))

    for w in idx["bag.empty"]:
        for ct in _counts_on(cfg, w):
            if not cfg.has_a(eq(ct, num(0))):
                yield RuleInstance("Empty", (ct, w))

    for w in idx["bag"]:
        for ct in _counts_on(cfg, w):
            if cfg.cc.entails_diseq(ct.args[0], w.args[0]) \
                    and not cfg.has_a(eq(ct, num(0))):
                yield RuleInstance("Bag 2", (ct, w))

    for op, rule in _SUM_OPS.items():
        for w in idx[op]:
            t, u = w.args
            for e in _elem_reps(cfg, (w, t, u)):
                if not cfg.has_a(_sum_eq(cfg, rule, w, e)):
                    yield RuleInstance(rule, (w, e))

    yield from _iter_product(cfg, idx["table.product"] + idx["table.join"])

    for w in idx["bag.filter"]:
        t, p = w.args[0], w.fun
        for ct in _counts_on(cfg, w):
            if not cfg.entails_pos(ct):
                continue
            e = ct.args[0]
            pe = _pred(p, e)
            mt = _the_count(cfg, e, t)
            if not (cfg.has_e(pe) and cfg.has_a(eq(ct, mt))):
                yield RuleInstance("Filter Down", (w, ct))


def _sum_eq(cfg: Configuration, rule: str, w: Term, e: Term) -> Term:
    t, u = w.args
    ms = _the_count(cfg, e, w)
    mt = _the_count(cfg, e, t)
    mu = _the_count(cfg, e, u)
    if rule == "Disjoint Union":
        return eq(ms, add(mt, mu))
    if rule == "Max Union":
        return eq(ms, mk("max", mt, mu))
    return eq(ms, mk("min", mt, mu))


def _join_pairs(w: Term) -> List[Tuple[int, int]]:
    return list(zip(w.idx[0::2], w.idx[1::2]))


def _iter_product(cfg: Configuration, prods: List[Term]) -> Iterator[RuleInstance]:
    for w in prods:
        t, u = w.args
        join = w.op == "table.join"
        up = "Join Up" if join else "Product Up"
        down = "Join Down" if join else "Product Down"
        pairs = _join_pairs(w) if join else []
        for ctx in _counts_on(cfg, t):
            xw = _tuple_witness(cfg, ctx.args[0])
            if xw is None or not cfg.entails_pos(ctx):
                continue
            for cty in _counts_on(cfg, u):
                yw = _tuple_witness(cfg, cty.args[0])
                if yw is None or not cfg.entails_pos(cty):
                    continue
                if join and not all(cfg.cc.same(xw.args[i], yw.args[j])
                                    for i, j in pairs):
                    continue
                cat = tup(*(xw.args + yw.args))
                mp = _the_count(cfg, cat, w)
                if not cfg.has_a(eq(mp, mul(ctx, cty))):
                    yield RuleInstance(up, (w, ctx, cty))
        k = len(t.sort.elem.comps)
        for ct in _counts_on(cfg, w):
            zw = _tuple_witness(cfg, ct.args[0])
            if zw is None or not cfg.entails_pos(ct):
                continue
            ctx = _the_count(cfg, tup(*zw.args[:k]), t)
            cty = _the_count(cfg, tup(*zw.args[k:]), u)
            done = cfg.has_a(eq(ct, mul(ctx, cty)))
            if join:
                done = done and all(cfg.cc.same(zw.args[i], zw.args[k + j])
                                    for i, j in pairs)
            if not done:
                yield RuleInstance(down, (w, ct))


def _iter_branching(cfg: Configuration, idx) -> Iterator[RuleInstance]:
    seen_pairs = set()
    for a, b in list(cfg.demands) + _ni_demands(cfg, idx):
        key = tuple(sorted((to_sexp(a), to_sexp(b))))
        if key in seen_pairs or _decided(cfg, a, b) is not None:
            continue
        seen_pairs.add(key)
        yield RuleInstance("E-Ident", (a, b))

    for w in idx["bag"]:
        e, n = w.args
        if cfg.has_a(leq(n, num(0))) or cfg.has_a(leq(num(1), n)):
            continue
        yield RuleInstance("Bag 1", (w,))

    for op, rule in _DIFF_OPS.items():
        for w in idx[op]:
            t, u = w.args
            for e in _elem_reps(cfg, (w, t, u)):
                if not _diff_done(cfg, rule, w, e):
                    yield RuleInstance(rule, (w, e))

    for w in idx["bag.setof"]:
        t = w.args[0]
        for e in _elem_reps(cfg, (w, t)):
            ms = _the_count(cfg, e, w)
            mt = _the_count(cfg, e, t)
            left = cfg.has_a(leq(num(1), mt)) and cfg.has_a(eq(ms, num(1)))
            right = cfg.has_a(leq(mt, num(0))) and cfg.has_a(eq(ms, num(0)))
            if not (left or right):
                yield RuleInstance("Setof", (w, e))

    for w in idx["bag.filter"]:
        t, p = w.args[0], w.fun
        for ct in _counts_on(cfg, t):
            if not cfg.entails_pos(ct):
                continue
            e = ct.args[0]
            pe = _pred(p, e)
            ms = _the_count(cfg, e, w)
            left = cfg.has_e(pe) and cfg.has_a(eq(ms, ct))
            right = cfg.has_e(mk("not", pe)) and cfg.has_a(eq(ms, num(0)))
            if not (left or right):
                yield RuleInstance("Filter Up", (w, ct))


def _diff_done(cfg: Configuration, rule: str, w: Term, e: Term) -> bool:
    t, u = w.args
    ms = _the_count(cfg, e, w)
    mt = _the_count(cfg, e, t)
    mu = _the_count(cfg, e, u)
    if rule == "Diff Subtract":
        left = cfg.has_a(leq(mt, mu)) and cfg.has_a(eq(ms, num(0)))
        right = cfg.has_a(leq(add(mu, num(1)), mt)) \
            and cfg.has_a(eq(ms, add(mt, neg(mu))))
    else:
        left = cfg.has_a(eq(mu, num(0))) and cfg.has_a(eq(ms, mt))
        right = cfg.has_a(mk("not", eq(mu, num(0)))) \
            and cfg.has_a(eq(ms, num(0)))
    return left or right


# -- map rules ------------------------------------------------------------------


def _ni_maps(cfg: Configuration, idx) -> List[Term]:
    return [w for w in idx["bag.map"] if not cfg.injective(w.fun)]


def _known_telems(cfg: Configuration, w: Term) -> List[Term]:
    """The chain order for t's elements: the already-indexed prefix plus
    newly counted element classes in registration order."""
    aux = cfg.ni.get(to_sexp(w))
    order = list(aux.order) if aux is not None else []
    for x in _elem_reps(cfg, (w.args[0],)):
        if not any(cfg.cc.same(x, k) for k in order):
            order.append(x)
    return order


def _ni_demands(cfg: Configuration, idx) -> List[Tuple[Term, Term]]:
    """Element decisions the non-injective chains are waiting on."""
    out: List[Tuple[Term, Term]] = []
    for w in _ni_maps(cfg, idx):
        xs = _known_telems(cfg, w)
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                if _decided(cfg, xs[i], xs[j]) is None:
                    out.append((xs[i], xs[j]))
        images = [_image(w.fun, x) for x in xs]
        for ct in _counts_on(cfg, w):
            e = ct.args[0]
            for img in images:
                if _decided(cfg, e, img) is None:
                    out.append((e, img))
    return out


def _chain_ready(cfg: Configuration, w: Term, xs: List[Term]) -> bool:
    for i in range(len(xs)):
        for j in range(i + 1, len(xs)):
            if _decided(cfg, xs[i], xs[j]) is not False:
                return False
    return True


def _iter_map(cfg: Configuration, idx) -> Iterator[RuleInstance]:
    for w in idx["bag.map"]:
        t = w.args[0]
        inj = cfg.injective(w.fun)

        if inj:
            for ct in _counts_on(cfg, w):
                key = ("mdi", to_sexp(cfg.cc.find(ct.args[0])), to_sexp(cfg.cc.find(w)))
                if key not in cfg.fired:
                    yield RuleInstance("Map Down Injective", (w, ct))

        for ct in _counts_on(cfg, t):
            e = ct.args[0]
            if cfg.reg.in_witness_set(e):
                continue
            if not cfg.entails_pos(ct):
                continue
            ms = _the_count(cfg, _image(w.fun, e), w)
            if not cfg.has_a(leq(ct, ms)):
                yield RuleInstance("Map Up", (w, ct))

        if not inj:
            aux = cfg.ni.get(to_sexp(w))
            for ct in _counts_on(cfg, t):
                x = ct.args[0]
                if not cfg.entails_pos(ct):
                    continue
                if aux is not None and any(cfg.cc.same(x, k) for k in aux.ind):
                    continue
                yield RuleInstance("Map Up NI", (w, x))

            xs = _known_telems(cfg, w)
            if not _chain_ready(cfg, w, xs):
                continue
            lens = aux.lens if aux is not None else set()
            if len(xs) not in lens and len(lens) >= NI_ROUND_CAP:
                continue  # instantiation rounds exhausted; see _ni_exhausted
            for ct in _counts_on(cfg, w):
                e = ct.args[0]
                if not _chain_images_decided(cfg, w, e, xs):
                    continue
                key = ("chain", to_sexp(cfg.cc.find(e)), to_sexp(w), len(xs))
                if key not in cfg.fired:
                    yield RuleInstance("Map Down NI", (w, ct, tuple(xs)))


def _chain_images_decided(cfg: Configuration, w: Term, e: Term,
                          xs: Sequence[Term]) -> bool:
    return all(_decided(cfg, e, _image(w.fun, x)) is not None for x in xs)


def _ni_exhausted(cfg: Configuration) -> bool:
    """True when some chain wants a new instantiation round past the cap."""
    idx = _scan(cfg)
    for w in _ni_maps(cfg, idx):
        aux = cfg.ni.get(to_sexp(w))
        lens = aux.lens if aux is not None else set()
        xs = _known_telems(cfg, w)
        if _counts_on(cfg, w) and len(xs) not in lens \
                and len(lens) >= NI_ROUND_CAP:
            return True
    return False


# -- rule application -----------------------------------------------------------


def applicable_rules(config: Configuration) -> List[RuleInstance]:
    """All non-redundant rule instances whose premises hold."""
    return list(_iter_instances(config))


def is_saturated(config: Configuration) -> bool:
    return not applicable_rules(config)


def apply_rule(config: Configuration, inst: RuleInstance) -> List[Configuration]:
    """Successor configurations (two for branching rules).  The input
    configuration is left untouched; each child owns fresh stores."""
    n = 2 if inst.rule in BRANCHING_RULES else 1
    out = []
    for i in range(n):
        child = config.clone()
        _apply(child, inst, i)
        out.append(child)
    return out


def _fresh_elem(cfg: Configuration, sort, witness: bool) -> Term:
    w = cfg.reg.fresh_var(sort, witness=witness)
    if sort.kind == "Tuple":
        comps = [cfg.reg.fresh_var(cs, stem="c") for cs in sort.comps]
        cfg.add_fact(eq(w, tup(*comps)))
    return w


def _apply(cfg: Configuration, inst: RuleInstance, branch: int) -> None:
    rule = inst.rule
    b = inst.bindings
    note = rule if not b else "%s %s" % (
        rule, " ".join(to_sexp(x) if isinstance(x, Term) else str(x)
                       for x in b[:2]))
    cfg.journal_note(note if branch == 0 else note + " [right]")

    if rule in CONFLICT_RULES:
        cfg.status = CLOSED
        return

    if rule == "B-A-Prop":
        cfg._add_a(b[0])
    elif rule == "B-E-Prop":
        cfg._add_e(b[0])
    elif rule == "A-Prop":
        cfg._add_b(eq(b[0], b[1]))
    elif rule == "E-Ident":
        x, y = b
        cfg.add_fact(eq(x, y) if branch == 0 else neq(x, y))
    elif rule == "Diseq":
        s, t = b
        ra, rb = cfg.cc.find(s), cfg.cc.find(t)
        cfg.fired.add(("Diseq",) + tuple(sorted((to_sexp(ra), to_sexp(rb)))))
        w = _fresh_elem(cfg, s.sort.elem, witness=True)
        ms, mt = mcount(w, s), mcount(w, t)
        cfg._add_b(neq(ms, mt))
        cfg._add_a(neq(ms, mt))
    elif rule == "Empty":
        cfg._add_a(eq(b[0], num(0)))
    elif rule == "Bag 2":
        cfg._add_a(eq(b[0], num(0)))
    elif rule in ("Disjoint Union", "Max Union", "Intersection"):
        cfg._add_a(_sum_eq(cfg, rule, b[0], b[1]))
    elif rule in ("Product Up", "Join Up"):
        w, ctx, cty = b
        xw = _tuple_witness(cfg, ctx.args[0])
        yw = _tuple_witness(cfg, cty.args[0])
        mp = _the_count(cfg, tup(*(xw.args + yw.args)), w)
        cfg._add_a(eq(mp, mul(ctx, cty)))
    elif rule in ("Product Down", "Join Down"):
        w, ct = b
        t, u = w.args
        zw = _tuple_witness(cfg, ct.args[0])
        k = len(t.sort.elem.comps)
        ctx = _the_count(cfg, tup(*zw.args[:k]), t)
        cty = _the_count(cfg, tup(*zw.args[k:]), u)
        cfg._add_a(eq(ct, mul(ctx, cty)))
        if rule == "Join Down":
            for i, j in _join_pairs(w):
                cfg.add_fact(eq(zw.args[i], zw.args[k + j]))
    elif rule == "Filter Down":
        w, ct = b
        e = ct.args[0]
        cfg._add_e(_pred(w.fun, e))
        cfg._add_a(eq(ct, _the_count(cfg, e, w.args[0])))
    elif rule == "Filter Up":
        w, ct = b
        e = ct.args[0]
        pe = _pred(w.fun, e)
        ms = _the_count(cfg, e, w)
        if branch == 0:
            cfg._add_e(pe)
            cfg._add_a(eq(ms, ct))
        else:
            cfg._add_e(mk("not", pe))
            cfg._add_a(eq(ms, num(0)))
    elif rule == "Bag 1":
        w = b[0]
        e, n = w.args
        rep = cfg.cc.find(w)
        ct = _the_count(cfg, e, w)
        empty = mk("bag.empty", payload_sort=w.sort)
        if branch == 0:
            cfg._add_a(leq(n, num(0)))
            cfg._add_a(eq(ct, num(0)))
            cfg._add_b(eq(rep, empty))
        else:
            cfg._add_a(leq(num(1), n))
            cfg._add_a(eq(ct, n))
            cfg._add_b(neq(rep, empty))
    elif rule == "Setof":
        w, e = b
        ms = _the_count(cfg, e, w)
        mt = _the_count(cfg, e, w.args[0])
        if branch == 0:
            cfg._add_a(leq(num(1), mt))
            cfg._add_a(eq(ms, num(1)))
        else:
            cfg._add_a(leq(mt, num(0)))
            cfg._add_a(eq(ms, num(0)))
    elif rule in ("Diff Subtract", "Diff Remove"):
        w, e = b
        t, u = w.args
        ms = _the_count(cfg, e, w)
        mt = _the_count(cfg, e, t)
        mu = _the_count(cfg, e, u)
        if rule == "Diff Subtract":
            if branch == 0:
                cfg._add_a(leq(mt, mu))
                cfg._add_a(eq(ms, num(0)))
            else:
                cfg._add_a(leq(add(mu, num(1)), mt))
                cfg._add_a(eq(ms, add(mt, neg(mu))))
        else:
            if branch == 0:
                cfg._add_a(eq(mu, num(0)))
                cfg._add_a(eq(ms, mt))
            else:
                cfg._add_a(mk("not", eq(mu, num(0))))
                cfg._add_a(eq(ms, num(0)))
    elif rule == "Map Down Injective":
        w, ct = b
        e = ct.args[0]
        key = ("mdi", to_sexp(cfg.cc.find(e)), to_sexp(cfg.cc.find(w)))
        cfg.fired.add(key)
        wv = _fresh_elem(cfg, w.args[0].sort.elem, witness=True)
        cfg.add_fact(eq(_image(w.fun, wv), e))
        cfg._add_a(eq(ct, _the_count(cfg, wv, w.args[0])))
    elif rule == "Map Up":
        w, ct = b
        ms = _the_count(cfg, _image(w.fun, ct.args[0]), w)
        cfg._add_a(leq(ct, ms))
    elif rule == "Map Up NI":
        w, x = b
        aux = cfg.aux_for(w)
        i = cfg.reg.fresh_var(INT, stem="ix")
        aux.ind[x] = i
        cfg._add_a(leq(num(1), i))
        cfg._add_a(leq(i, aux.delem))
    elif rule == "Map Down NI":
        _apply_chain(cfg, b[0], b[1], list(b[2]))
    else:
        raise ValueError("unknown rule: %s" % rule)


def _apply_chain(cfg: Configuration, w: Term, ct: Term, xs: List[Term]) -> None:
    """Instantiate the counting chain for one image element: walk the
    fixed element order of t, accumulating the multiplicities of those
    elements whose image equals e, and leave a nonnegative tail for
    elements of t the configuration has not discovered."""
    aux = cfg.aux_for(w)
    e = ct.args[0]
    t = w.args[0]
    for x in xs:
        if not any(x is k or cfg.cc.same(x, k) for k in aux.order):
            aux.order.append(x)
    aux.lens.add(len(aux.order))
    cfg.fired.add(("chain", to_sexp(cfg.cc.find(e)), to_sexp(w), len(xs)))

    cfg._add_a(leq(num(len(aux.order)), aux.delem))
    ekey = to_sexp(cfg.cc.find(e))
    run = aux.sum.get((ekey, 0))
    if run is None:
        run = cfg.reg.fresh_var(INT, stem="sm")
        aux.sum[(ekey, 0)] = run
        cfg._add_a(eq(run, num(0)))
    for j, x in enumerate(aux.order, start=1):
        i = aux.ind.get(x)
        if i is None:
            i = cfg.reg.fresh_var(INT, stem="ix")
            aux.ind[x] = i
            cfg._add_a(leq(num(1), i))
            cfg._add_a(leq(i, aux.delem))
        cfg._add_a(eq(i, num(j)))
        nxt = aux.sum.get((ekey, j))
        if nxt is None:
            nxt = cfg.reg.fresh_var(INT, stem="sm")
            aux.sum[(ekey, j)] = nxt
        if _decided(cfg, e, _image(w.fun, x)):
            cfg._add_a(eq(nxt, add(run, _the_count(cfg, x, t))))
        else:
            cfg._add_a(eq(nxt, run))
        run = nxt
    tail = cfg.reg.fresh_var(INT, stem="tl")
    cfg._add_a(leq(num(0), tail))
    cfg._add_a(eq(ct, add(run, tail)))


# -- model extraction -----------------------------------------------------------


class _ModelSource:
    """Adapter feeding build_model with values read off the saturated
    configuration's final element check."""

    def __init__(self, cfg: Configuration, classes: Dict[Term, object],
                 funs: Dict[tuple, object]):
        self.cc = cfg.cc
        self.funs = funs
        self._classes = classes

    def _lookup(self, t: Term):
        if t in self._classes:
            return self._classes[t]
        if self.cc.has_term(t):
            for m in self.cc.class_members(t):
                if m in self._classes:
                    return self._classes[m]
        return None

    def int_value(self, t: Term) -> int:
        v = self._lookup(t)
        return v if isinstance(v, int) and not isinstance(v, bool) else 0

    def elem_value(self, t: Term):
        return self._lookup(t)


def _count_collisions(cfg: Configuration,
                      classes: Dict[Term, object]) -> List[Tuple[Term, Term]]:
    """Pairs of element classes that share a value in the candidate
    model but carry different counts on the same bag; the pair must be
    decided before a table can be read off."""
    out = []
    for root in list(cfg.cc.roots()):
        if root.sort.kind != "Bag":
            continue
        by_val: Dict[object, Tuple[Term, object]] = {}
        for ct in cfg.cc.counts_for_bag(root):
            e = ct.args[0]
            if e not in classes or ct not in classes:
                continue
            try:
                key = (repr(classes[e]), classes[e].__class__.__name__)
            except Exception:
                continue
            prev = by_val.get(key)
            if prev is None:
                by_val[key] = (e, classes[ct])
            elif prev[1] != classes[ct] and not cfg.cc.same(e, prev[0]) \
                    and not cfg.cc.entails_diseq(e, prev[0]):
                out.append((e, prev[0]))
    return out


def _model_attempt(cfg: Configuration, root_lits: List[Term]):
    """Returns ('sat', interp) | ('closed', None) | ('demand', None) |
    ('unknown', reason)."""
    verdict, asg = check_E(cfg.a_lits + cfg.e_lits, cfg.reg)
    if verdict == UNSAT:
        cfg.journal_note("E-Conf (joint)")
        return ("closed", None)
    if verdict == UNKNOWN:
        return ("unknown", "budget")

    new = [p for p in _count_collisions(cfg, asg.classes)
           if _decided(cfg, *p) is None]
    if new:
        cfg.demands.extend(new)
        return ("demand", None)

    src = _ModelSource(cfg, asg.classes, dict(asg.funs))
    try:
        interp = build_model(src)
    except ModelFailure:
        return ("unknown", "budget")
    interp.funs.update(asg.funs)

    for lit in root_lits:
        try:
            value = interp.eval(lit)
        except EvalError:
            return ("unknown", "non-ground-element")
        if value is not True:
            return ("unknown", "budget")
    if not verify_model(interp, root_lits):
        return ("unknown", "budget")
    return ("sat", interp)


# -- the driver -------------------------------------------------------------------


def _reduce_tables(t: Term) -> Term:
    """Pre-solve reduction: projection becomes a map with a synthesized
    tuple-projection function; a join on zero column pairs is a product."""
    args = [_reduce_tables(a) for a in t.args]
    if t.op == "table.proj":
        src = args[0]
        return mk("bag.map", src, fun=tuple_proj_fun(src.sort.elem, t.idx))
    if t.op == "table.join" and not t.idx:
        return mk("table.product", *args)
    if not t.args or all(a is b for a, b in zip(args, t.args)):
        return t
    return mk(t.op, *args, idx=t.idx, fun=t.fun)


def solve(a_lits: Sequence[Term], b_lits: Sequence[Term],
          e_lits: Sequence[Term], *, budget: int = RULE_BUDGET_DEFAULT,
          timeout: float = TIME_BUDGET_DEFAULT,
          reg: Optional[FreshVarRegistry] = None) -> Verdict:
    """Decide the conjunction of the three purified literal lists.

    The three arguments keep the classified branch shape produced by
    the rewriter; each literal is routed to its stores by shape, so
    passing everything in one list works as well.
    """
    lits = [_reduce_tables(l) for l in (*a_lits, *b_lits, *e_lits)]
    if reg is None:
        reg = FreshVarRegistry()
    for l in lits:
        reg.reserve(v.value for v in free_vars(l))
    trace: List[str] = []
    deadline = time.monotonic() + timeout
    applied = [0]
    cap = 64

    while True:
        cfg = Configuration(reg, sink=trace)
        cfg.deadline = deadline
        try:
            for l in lits:
                cfg.add_fact(l)
                for v in free_vars(l):
                    cfg.cc.add_term(v)
            out, payload = _search(cfg, lits, cap, budget, applied, deadline)
        except _Giveup as g:
            return Verdict(UNKNOWN, reason=g.reason, trace=trace)
        if out == "deepen":
            cap *= 2
            continue
        if out == "sat":
            return Verdict(SAT, model=payload, trace=trace)
        if out == "unsat":
            return Verdict(UNSAT, trace=trace)
        return Verdict(UNKNOWN, reason=payload, trace=trace)


def solve_literals(lits: Sequence[Term], **kw) -> Verdict:
    return solve([], [], lits, **kw)


def _search(cfg: Configuration, root_lits: List[Term], cap: int,
            budget: int, applied: List[int], deadline: float):
    stack: List[Tuple[RuleInstance, int]] = []
    path = 0
    deepen = False
    unknown: Optional[str] = None

    def spend():
        applied[0] += 1
        if applied[0] > budget or time.monotonic() > deadline:
            raise _Giveup("budget")

    while True:
        leaf = None  # set when this branch ends
        inst = next(_iter_instances(cfg), None)
        if inst is None:
            if _ni_exhausted(cfg):
                leaf = "unknown"
                unknown = unknown or "budget"
            else:
                out, payload = _model_attempt(cfg, root_lits)
                if out == "sat":
                    return ("sat", payload)
                if out == "demand":
                    continue
                if out == "unknown":
                    leaf = "unknown"
                    unknown = unknown or payload
                else:
                    leaf = "closed"
        elif inst.rule in CONFLICT_RULES:
            _apply(cfg, inst, 0)
            leaf = "closed"
        elif path >= cap:
            leaf = "deepen"
            deepen = True
        else:
            spend()
            if inst.rule in BRANCHING_RULES:
                cfg.push()
                stack.append((inst, path))
            _apply(cfg, inst, 0)
            path += 1
            continue

        if not stack:
            if deepen:
                return ("deepen", None)
            if unknown is not None:
                return ("unknown", unknown)
            return ("unsat", None)
        inst, path = stack.pop()
        cfg.pop()
        spend()
        _apply(cfg, inst, 1)
        path += 1

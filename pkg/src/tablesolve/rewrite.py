"""Input normalization: simplification rewrites, purification, DNF splitting.

The output of `normalize` is a set of branches, each a conjunction of
literals classified into arithmetic (A), table (B), and element (E) roles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .terms import (
    FreshVarRegistry, INT, Term, TRUE, add, boolean, eq, free_vars,
    is_element_sort, leq, mk, num, tup,
)


class BudgetExceeded(Exception):
    """DNF clause cap (or another normalization budget) was exceeded."""


# ---------------------------------------------------------------------------
# Simplification


def _simp_node(t: Term) -> Term:
    op = t.op
    if op == "bag.count":
        e, s = t.args
        if s.op == "bag.empty":
            return num(0)
    if op == "bag" and t.args[1].op == "int" and t.args[1].value <= 0:
        return mk("bag.empty", payload_sort=t.sort)
    if op == "bag.union_disjoint":
        s, u = t.args
        if u.op == "bag.empty":
            return s
        if s.op == "bag.empty":
            return u
    if op == "bag.member":
        e, s = t.args
        return leq(num(1), mk("bag.count", e, s))
    if op == "bag.subbag":
        s, u = t.args
        return eq(mk("bag.diff_subtract", s, u), mk("bag.empty", payload_sort=s.sort))
    if op == "set.subset":
        s, u = t.args
        return eq(mk("set.union", s, u), u)
    if op == "<":
        a, b = t.args
        return leq(add(a, num(1)), b)
    if op == ">":
        a, b = t.args
        return leq(add(b, num(1)), a)
    if op == ">=":
        a, b = t.args
        return leq(b, a)
    return t


def simplify(t: Term) -> Term:
    """Bottom-up application of the simplification rules, to fixpoint."""
    if not t.args:
        return t
    new_args = tuple(simplify(a) for a in t.args)
    if new_args != t.args:
        t = mk(t.op, *new_args, idx=t.idx, fun=t.fun, value=t.value,
               payload_sort=t.sort)
    while True:
        t2 = _simp_node(t)
        if t2 == t:
            return t
        t = simplify(t2)


# ---------------------------------------------------------------------------
# Negation normal form

_NEG_MEMBER = ("bag.member",)


def nnf(f: Term, positive: bool = True) -> Term:
    """Push negations to the atoms; normalizes negated comparisons."""
    if f.op == "not":
        return nnf(f.args[0], not positive)
    if f.op in ("and", "or"):
        op = f.op if positive else ("or" if f.op == "and" else "and")
        return mk(op, *(nnf(a, positive) for a in f.args))
    if f.op == "ite" and f.sort.kind == "Bool":
        c, a, b = f.args
        return nnf(mk("or", mk("and", c, a), mk("and", mk("not", c), b)), positive)
    if positive:
        return f
    if f.op == "<=":
        a, b = f.args
        return leq(add(b, num(1)), a)
    if f.op == "bag.member":
        e, s = f.args
        return leq(mk("bag.count", e, s), num(0))
    if f.op == "bool":
        return boolean(not f.value)
    return mk("not", f)


# ---------------------------------------------------------------------------
# Purification


def _is_atom(f: Term) -> bool:
    return f.op not in ("and", "or")


def purify(f: Term, reg: Optional[FreshVarRegistry] = None) -> Term:
    """Name every non-variable collection subterm and expand tuple terms.

    Returns a conjunction of the rewritten formula with the naming and
    tuple-decomposition equations; equisatisfiable with the input.
    """
    if reg is None:
        reg = FreshVarRegistry()
        reg.reserve(v.value for v in free_vars(f))
    names: Dict[Term, Term] = {}
    decomposed: Set[Term] = set()
    defs: List[Term] = []

    def name_of(t: Term) -> Term:
        if t in names:
            return names[t]
        v = reg.fresh_var(t.sort, stem="q")
        names[t] = v
        defs.append(eq(v, t))
        decompose(v)
        return v

    def decompose(t: Term) -> None:
        # tuple-sorted terms get component variables t ≈ ⟨x0,…,xk⟩
        if t.sort.kind != "Tuple" or t in decomposed or t.op == "tuple":
            return
        decomposed.add(t)
        comps = [reg.fresh_var(cs, stem="c") for cs in t.sort.comps]
        defs.append(eq(t, tup(*comps)))

    def walk_term(t: Term, top: bool) -> Term:
        # collection-sorted operator terms are named; components first
        new_args = tuple(walk_term(a, False) for a in t.args)
        if new_args != t.args:
            t = mk(t.op, *new_args, idx=t.idx, fun=t.fun, value=t.value,
                   payload_sort=t.sort)
        if t.sort.kind in ("Bag", "Set") and t.op != "var" and not top:
            return name_of(t)
        if t.sort.kind == "Tuple" and t.op != "tuple":
            decompose(t)
        return t

    def walk_formula(f: Term) -> Term:
        if f.op in ("and", "or"):
            return mk(f.op, *(walk_formula(a) for a in f.args))
        if f.op == "not":
            return mk("not", walk_formula(f.args[0]))
        if f.op == "=" and f.args[0].sort.kind in ("Bag", "Set"):
            # keep one operator application on the right: v ≈ op(vars)
            lhs = walk_term(f.args[0], False)
            rhs_args = tuple(walk_term(a, False) for a in f.args[1].args)
            rhs = f.args[1]
            if rhs_args != rhs.args:
                rhs = mk(rhs.op, *rhs_args, idx=rhs.idx, fun=rhs.fun,
                         value=rhs.value, payload_sort=rhs.sort)
            return eq(lhs, rhs)
        new_args = tuple(walk_term(a, False) for a in f.args)
        if new_args != f.args:
            return mk(f.op, *new_args, idx=f.idx, fun=f.fun, value=f.value,
                      payload_sort=f.sort)
        return f

    body = walk_formula(f)
    if not defs:
        return body
    return mk("and", body, *defs)


# ---------------------------------------------------------------------------
# DNF and classification


@dataclass
class Branch:
    A: List[Term] = field(default_factory=list)
    B: List[Term] = field(default_factory=list)
    E: List[Term] = field(default_factory=list)

    def all_literals(self) -> List[Term]:
        seen, out = set(), []
        for lit in self.A + self.B + self.E:
            if lit not in seen:
                seen.add(lit)
                out.append(lit)
        return out


@dataclass
class BranchSet:
    branches: List[Branch]


def literal_roles(lit: Term) -> Set[str]:
    """Classify a literal into the stores that must see it."""
    atom = lit.args[0] if lit.op == "not" else lit
    if atom.op == "=":
        sort = atom.args[0].sort
        roles = {"B"}
        if sort == INT:
            roles |= {"A", "E"}
        elif is_element_sort(sort):
            roles |= {"E"}
        return roles
    if atom.op == "<=":
        return {"A"}
    if atom.op == "set.member":
        return {"B"}
    return {"E"}


def _dnf(f: Term, cap: int) -> List[List[Term]]:
    if f.op == "or":
        out: List[List[Term]] = []
        for a in f.args:
            out.extend(_dnf(a, cap))
            if len(out) > cap:
                raise BudgetExceeded("DNF exceeds %d clauses" % cap)
        return out
    if f.op == "and":
        acc: List[List[Term]] = [[]]
        for a in f.args:
            sub = _dnf(a, cap)
            acc = [c + d for c in acc for d in sub]
            if len(acc) > cap:
                raise BudgetExceeded("DNF exceeds %d clauses" % cap)
        return acc
    return [[f]]


def split_dnf(f: Term, cap: int = 4096) -> BranchSet:
    """Split a simplified, purified formula into classified branches."""
    branches = []
    for clause in _dnf(nnf(f), cap):
        br = Branch()
        seen = set()
        for lit in clause:
            if lit in seen:
                continue
            seen.add(lit)
            for role in literal_roles(lit):
                getattr(br, role).append(lit)
        branches.append(br)
    return BranchSet(branches)


def normalize(f: Term, reg: Optional[FreshVarRegistry] = None,
              cap: int = 4096) -> BranchSet:
    """simplify → purify → split_dnf, the full input pipeline."""
    return split_dnf(purify(simplify(f), reg), cap)

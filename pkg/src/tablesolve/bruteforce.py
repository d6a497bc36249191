"""Brute-force satisfiability by enumeration over finite domains.

The reference oracle for differential testing: every free variable of
a literal conjunction ranges over an explicit finite space (element
domains you pass in, bag multiplicities up to a bound, sets as 0/1
bags), and each candidate assignment is evaluated directly.  Complete
only relative to the chosen space; callers size the space to fit the
fragment they generate.
"""

import itertools
from typing import Dict, Iterable, List, Optional, Sequence

from .elements import eval_term
from .model import ConcreteTable, Interpretation, _table_ext
from .nullable import NULL, Some
from .terms import BOOL, INT, STRING, Sort, Term, free_vars

DEFAULT_COUNT_BOUND = 2


def default_domains(literals: Sequence[Term], size: int = 3) -> Dict[Sort, list]:
    """Element domains for the sorts the literals mention.

    Ground constants found in the literals are kept and padded with
    fresh values up to `size`; sorts without constants get `size`
    values outright.
    """
    doms: Dict[Sort, list] = {}

    def base_values(s: Sort, found: list) -> list:
        out = list(found)
        if s == INT:
            k = 0
            while len(out) < size:
                if k not in out:
                    out.append(k)
                k += 1
        elif s == BOOL:
            out = [False, True]
        elif s == STRING or s.kind == "Elem":
            k = 0
            while len(out) < size:
                v = "elem!%s!%d" % (s.name or "String", k)
                if v not in out:
                    out.append(v)
                k += 1
        return out

    consts: Dict[Sort, list] = {}
    seen_sorts: List[Sort] = []

    def visit(t: Term) -> None:
        s = t.sort
        if s.kind in ("Bag", "Set"):
            s = s.elem
        for b in (s.comps if s.kind == "Tuple" else (s,)):
            b = b.args[0] if b.kind == "Nullable" else b
            if b not in seen_sorts:
                seen_sorts.append(b)
        if t.op in ("int", "str") and t.sort not in consts:
            consts[t.sort] = []
        if t.op in ("int", "str") and t.value not in consts[t.sort]:
            consts[t.sort].append(t.value)
        for a in t.args:
            visit(a)

    for lit in literals:
        visit(lit)
    for s in seen_sorts:
        doms[s] = base_values(s, consts.get(s, []))
    return doms


def _element_space(s: Sort, doms: Dict[Sort, list]) -> List[object]:
    if s.kind == "Tuple":
        parts = [_element_space(c, doms) for c in s.comps]
        return [tuple(p) for p in itertools.product(*parts)]
    if s.kind == "Nullable":
        return [NULL] + [Some(v) for v in _element_space(s.args[0], doms)]
    if s == BOOL:
        return [False, True]
    if s in doms:
        return list(doms[s])
    raise ValueError("no domain for sort %r" % (s,))


def _table_space(s: Sort, doms: Dict[Sort, list],
                 bound: int) -> List[ConcreteTable]:
    elems = _element_space(s.elem, doms)
    top = 1 if s.kind == "Set" else bound
    out = []
    for counts in itertools.product(range(top + 1), repeat=len(elems)):
        out.append(ConcreteTable(s.elem, dict(zip(elems, counts))))
    return out


def brute_force_check(literals: Sequence[Term],
                      domains: Optional[Dict[Sort, list]] = None,
                      count_bound: int = DEFAULT_COUNT_BOUND,
                      funs: Optional[dict] = None,
                      limit: Optional[int] = None) -> Optional[Interpretation]:
    """First satisfying assignment in the finite space, or None.

    `limit` caps the number of candidate assignments tried; exceeding
    it raises RuntimeError so an unexpectedly large space cannot pass
    silently as unsatisfiable.
    """
    lits = list(literals)
    doms = domains if domains is not None else default_domains(lits)
    vs = sorted(free_vars_of_all(lits), key=lambda v: v.value)
    spaces = []
    for v in vs:
        if v.sort.kind in ("Bag", "Set"):
            spaces.append(_table_space(v.sort, doms, count_bound))
        else:
            spaces.append(_element_space(v.sort, doms))
    ext = _table_ext(10 ** 6)
    tried = 0
    for combo in itertools.product(*spaces):
        tried += 1
        if limit is not None and tried > limit:
            raise RuntimeError("enumeration limit of %d exceeded" % limit)
        env = {v.value: val for v, val in zip(vs, combo)}
        if all(eval_term(l, env, funs, ext) is True for l in lits):
            vars_out = {v.value: val for v, val in zip(vs, combo)
                        if not isinstance(val, ConcreteTable)}
            bags_out = {v.value: val for v, val in zip(vs, combo)
                        if isinstance(val, ConcreteTable)}
            return Interpretation(vars=vars_out, bags=bags_out,
                                  funs=dict(funs or {}))
    return None


def free_vars_of_all(literals: Iterable[Term]) -> List[Term]:
    seen, out = set(), []
    for lit in literals:
        for v in sorted(free_vars(lit), key=lambda t: t.value):
            if v not in seen:
                seen.add(v)
                out.append(v)
    return out

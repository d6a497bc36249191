"""Integer arithmetic subsolver.

Decides conjunctions of linear integer constraints with max/min/ite and
disequality atoms, plus a bounded treatment of products: exact rational
simplex for the relaxation, branch-and-bound for integrality, small case
splits for the definitional atoms, and model-guided linearization for
products (Unknown after a fixed number of refinement rounds).
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .terms import Term, to_sexp

F0 = Fraction(0)
F1 = Fraction(1)

SAT = "sat"
UNSAT = "unsat"
UNKNOWN = "unknown"


class LinExpr:
    """Σ coeff·var + const with exact rational coefficients."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: Optional[Dict[Term, Fraction]] = None,
                 const: Fraction = F0):
        self.coeffs = {k: v for k, v in (coeffs or {}).items() if v != 0}
        self.const = Fraction(const)

    def __add__(self, other: "LinExpr") -> "LinExpr":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, F0) + v
        return LinExpr(out, self.const + other.const)

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + other.scale(Fraction(-1))

    def scale(self, c: Fraction) -> "LinExpr":
        return LinExpr({k: v * c for k, v in self.coeffs.items()}, self.const * c)

    def shift(self, c) -> "LinExpr":
        return LinExpr(self.coeffs, self.const + c)

    def is_const(self) -> bool:
        return not self.coeffs

    def value(self, model: Dict[Term, Fraction]) -> Fraction:
        return sum((v * model.get(k, F0) for k, v in self.coeffs.items()),
                   self.const)

    def __repr__(self):
        parts = ["%s*%s" % (v, to_sexp(k)) for k, v in self.coeffs.items()]
        parts.append(str(self.const))
        return " + ".join(parts)


def lvar(t: Term) -> LinExpr:
    return LinExpr({t: F1})


# ---------------------------------------------------------------------------
# LP feasibility: two-phase (phase I only) simplex with Bland's rule


def lp_feasible(rows: Sequence[Tuple[str, LinExpr]],
                var_order: Sequence[Term]) -> Optional[Dict[Term, Fraction]]:
    """Rows are ('le', e) meaning e ≤ 0 or ('eq', e) meaning e = 0.

    Returns a rational model or None if infeasible.
    """
    idx = {v: i for i, v in enumerate(var_order)}
    nv = len(var_order)
    seen_rows = set()
    uniq: List[Tuple[str, LinExpr]] = []
    for kind, e in rows:
        key = (kind, tuple(sorted(((idx[v], c) for v, c in e.coeffs.items()
                                   if c != 0))), e.const)
        if key not in seen_rows:
            seen_rows.add(key)
            uniq.append((kind, e))
    rows = uniq
    n_slack = sum(1 for k, _ in rows if k == "le")
    m = len(rows)
    ncols = 2 * nv + n_slack + m
    A: List[List[Fraction]] = []
    b: List[Fraction] = []
    si = 0
    for r, (kind, e) in enumerate(rows):
        row = [F0] * ncols
        for v, c in e.coeffs.items():
            j = idx[v]
            row[j] += c
            row[nv + j] -= c
        rhs = -e.const
        if kind == "le":
            row[2 * nv + si] = F1
            si += 1
        if rhs < 0:
            row = [-c for c in row]
            rhs = -rhs
        row[2 * nv + n_slack + r] = F1
        A.append(row)
        b.append(rhs)

    basis = [2 * nv + n_slack + r for r in range(m)]
    art_start = 2 * nv + n_slack

    stalled = 0
    prev_obj = sum(b)
    while True:
        # reduced costs for minimizing the artificial sum
        cb = [F1 if basis[i] >= art_start else F0 for i in range(m)]
        art_rows = [i for i in range(m) if cb[i] is F1]
        entering = -1
        if stalled < 30:
            # steepest reduced cost; falls back to Bland's rule on stall
            best_rc = F0
            for j in range(art_start):
                rj = -sum(A[i][j] for i in art_rows)
                if rj < best_rc:
                    best_rc, entering = rj, j
        else:
            for j in range(art_start):
                if sum(A[i][j] for i in art_rows) > 0:
                    entering = j
                    break
        if entering < 0:
            break
        leaving, best = -1, None
        for i in range(m):
            if A[i][entering] > 0:
                ratio = b[i] / A[i][entering]
                if best is None or ratio < best or \
                        (ratio == best and basis[i] < basis[leaving]):
                    best, leaving = ratio, i
        if leaving < 0:
            break  # unbounded descent cannot happen in phase I
        piv = A[leaving][entering]
        A[leaving] = [c / piv for c in A[leaving]]
        b[leaving] = b[leaving] / piv
        for i in range(m):
            if i != leaving and A[i][entering] != 0:
                f = A[i][entering]
                A[i] = [A[i][j] - f * A[leaving][j] for j in range(ncols)]
                b[i] = b[i] - f * b[leaving]
        basis[leaving] = entering
        obj = sum(b[i] for i in range(m) if basis[i] >= art_start)
        if obj < prev_obj:
            stalled, prev_obj = 0, obj
        else:
            stalled += 1

    if sum(b[i] for i in range(m) if basis[i] >= art_start) > 0:
        return None
    vals = [F0] * ncols
    for i in range(m):
        vals[basis[i]] = b[i]
    return {v: vals[idx[v]] - vals[nv + idx[v]] for v in var_order}


def _eq_system_infeasible(rows: Sequence[Tuple[str, LinExpr]]) -> bool:
    """Complete integer-feasibility test for the equality subsystem.

    Substitutes unit-coefficient variables away; rows without a unit
    coefficient are reduced with a symmetric-residue elimination step that
    introduces one auxiliary variable and shrinks coefficients, so the
    procedure terminates. Returns True iff Σ a·x = c has no integer solution.
    """
    eqs = []
    for kind, e in rows:
        if kind != "eq":
            continue
        den = 1
        for c in list(e.coeffs.values()) + [e.const]:
            den = den * c.denominator // math.gcd(den, c.denominator)
        row = {k: int(c * den) for k, c in e.coeffs.items()}
        eqs.append((row, int(-e.const * den)))
    def substitute(target, k0, row, c):
        """Eliminate k0 from target rows; row has coefficient ±1 on k0."""
        a0 = row[k0]
        others = {k: v for k, v in row.items() if k != k0}
        out = []
        for r2, c2 in target:
            b = r2.get(k0, 0)
            if b:
                nr = {k: v for k, v in r2.items() if k != k0}
                for k, v in others.items():
                    nr[k] = nr.get(k, 0) - b * a0 * v
                out.append((nr, c2 - b * a0 * c))
            else:
                out.append((r2, c2))
        return out

    REJECT, DROP = 0, 1

    def normalize(row, c):
        row = {k: v for k, v in row.items() if v != 0}
        if not row:
            return REJECT if c != 0 else DROP, row, c
        g = 0
        for v in row.values():
            g = math.gcd(g, abs(v))
        if c % g != 0:
            return REJECT, row, c
        return None, {k: v // g for k, v in row.items()}, c // g

    fresh = 0
    guard = 0
    while eqs:
        guard += 1
        if guard > 3000:
            return False  # inconclusive; the search continues without the cut
        row, c = eqs.pop(0)
        verdict, row, c = normalize(row, c)
        if verdict is REJECT:
            return True
        if verdict is DROP:
            continue
        # shrink this row alone until some coefficient is ±1, queueing the
        # unit-pivot definition rows; only then substitute it everywhere
        while True:
            k0, a0 = min(row.items(), key=lambda kv: (abs(kv[1]), str(kv[0])))
            if abs(a0) == 1:
                break
            m = abs(a0) + 1

            def mod_hat(a: int, m: int = m) -> int:
                r = a % m
                return r - m if r > m // 2 else r

            sigma = ("aux", fresh)
            fresh += 1
            dref = {k: mod_hat(v) for k, v in row.items()}
            dref[sigma] = -m
            dc = mod_hat(c)
            eqs.append((dref, dc))
            (row, c), = substitute([(row, c)], k0, dref, dc)
            verdict, row, c = normalize(row, c)
            if verdict is REJECT:
                return True
            if verdict is DROP:
                row = None
                break
            guard += 1
            if guard > 3000:
                return False
        if row is None:
            continue
        eqs = substitute(eqs, k0, row, c)
    return False


# ---------------------------------------------------------------------------
# Store


class ArithStore:
    def __init__(self, node_budget: int = 1000, mul_rounds: int = 16):
        self.node_budget = node_budget
        self.mul_rounds = mul_rounds
        self.lin: List[Tuple[str, LinExpr]] = []       # 'le' | 'eq' | 'ne'
        self.defs: List[tuple] = []                    # maxdef/mindef/itedef/muldef
        self.var_order: List[Term] = []
        self._var_set: Set[Term] = set()
        self.mul_index: Dict[tuple, Term] = {}
        self._seen: Set[tuple] = set()
        self._bounded: Set[Term] = set()
        self._levels: List[tuple] = []
        self._logs: List[list] = [[]]                  # inserted dedup/index keys
        self._model: Optional[Dict[Term, int]] = None

    # -- bookkeeping --

    def push(self) -> None:
        self._levels.append((len(self.lin), len(self.defs), len(self.var_order),
                             self._model))
        self._logs.append([])

    def pop(self) -> None:
        nlin, ndefs, nvars, model = self._levels.pop()
        for kind, key in self._logs.pop():
            if kind == "mul":
                del self.mul_index[key]
            elif kind == "seen":
                self._seen.discard(key)
            elif kind == "bound":
                self._bounded.discard(key)
        for v in self.var_order[nvars:]:
            self._var_set.discard(v)
        del self.lin[nlin:]
        del self.defs[ndefs:]
        del self.var_order[nvars:]
        self._model = model

    def _log(self, kind: str, key) -> None:
        self._logs[-1].append((kind, key))

    def _register(self, t: Term) -> Term:
        if t not in self._var_set:
            self._var_set.add(t)
            self.var_order.append(t)
            if t.op == "bag.count" and t not in self._bounded:
                self._bounded.add(t)
                self._log("bound", t)
                self.lin.append(("le", LinExpr({t: Fraction(-1)})))  # 0 ≤ t
        return t

    # -- term conversion --

    def to_lin(self, t: Term) -> LinExpr:
        if t.op == "int":
            return LinExpr({}, Fraction(t.value))
        if t.op == "+":
            return self.to_lin(t.args[0]) + self.to_lin(t.args[1])
        if t.op == "neg":
            return self.to_lin(t.args[0]).scale(Fraction(-1))
        if t.op == "*":
            a = self.to_lin(t.args[0])
            b = self.to_lin(t.args[1])
            if a.is_const():
                return b.scale(a.const)
            if b.is_const():
                return a.scale(b.const)
            ka = self._purify(t.args[0], a)
            kb = self._purify(t.args[1], b)
            y = self._register(t)
            pair = tuple(sorted((ka, kb), key=to_sexp))
            prev = self.mul_index.get(pair)
            if prev is None:
                self.mul_index[pair] = y
                self._log("mul", pair)
                self.defs.append(("muldef", y, ka, kb))
            elif prev != y:
                self.lin.append(("eq", lvar(y) - lvar(prev)))
            return lvar(y)
        if t.op in ("max", "min"):
            y = self._register(t)
            key = ("def", t)
            if key not in self._seen:
                self._seen.add(key)
                self._log("seen", key)
                a = self.to_lin(t.args[0])
                b = self.to_lin(t.args[1])
                self.defs.append((t.op + "def", y, a, b))
            return lvar(y)
        if t.op == "ite":
            y = self._register(t)
            key = ("def", t)
            if key not in self._seen:
                self._seen.add(key)
                self._log("seen", key)
                cond = self.to_cond(t.args[0])
                a = self.to_lin(t.args[1])
                b = self.to_lin(t.args[2])
                self.defs.append(("itedef", y, cond, a, b))
            return lvar(y)
        return lvar(self._register(t))

    def _purify(self, t: Term, e: LinExpr) -> Term:
        """Product factors must be plain variables; name compound factors."""
        if len(e.coeffs) == 1 and e.const == 0:
            (k, c), = e.coeffs.items()
            if c == 1:
                return k
        y = self._register(t)
        key = ("factor", t)
        if key not in self._seen:
            self._seen.add(key)
            self._log("seen", key)
            self.lin.append(("eq", lvar(y) - e))
        return y

    def to_cond(self, c: Term) -> Tuple[str, LinExpr]:
        if c.op == "<=":
            return ("le", self.to_lin(c.args[0]) - self.to_lin(c.args[1]))
        if c.op == "=":
            return ("eq", self.to_lin(c.args[0]) - self.to_lin(c.args[1]))
        if c.op == "not":
            kind, e = self.to_cond(c.args[0])
            if kind == "le":
                return ("le", e.scale(Fraction(-1)).shift(1))
            if kind == "eq":
                return ("ne", e)
        raise ValueError("unsupported arithmetic condition: %s" % to_sexp(c))

    # -- assertions --

    def assert_formula(self, f: Term) -> None:
        kind, e = self.to_cond(f)
        key = (kind, tuple(sorted(((to_sexp(k), v) for k, v in e.coeffs.items()))),
               e.const)
        if key in self._seen:
            return
        self._seen.add(key)
        self._log("seen", key)
        self.lin.append((kind, e))
        self._model = None

    def assert_le(self, l: Term, r: Term) -> None:
        from .terms import leq
        self.assert_formula(leq(l, r))

    def assert_eq(self, l: Term, r: Term) -> None:
        from .terms import eq
        self.assert_formula(eq(l, r))

    def assert_ne(self, l: Term, r: Term) -> None:
        from .terms import eq, mk
        self.assert_formula(mk("not", eq(l, r)))

    # -- solving --

    def _model_ok(self, model: Dict[Term, Fraction]) -> bool:
        for kind, e in self.lin:
            v = e.value(model)
            if kind == "le" and v > 0:
                return False
            if kind == "eq" and v != 0:
                return False
            if kind == "ne" and v == 0:
                return False
        for d in self.defs:
            if not self._def_ok(d, model):
                return False
        return True

    def _def_ok(self, d: tuple, model) -> bool:
        if d[0] == "maxdef":
            return model.get(d[1], F0) == max(d[2].value(model), d[3].value(model))
        if d[0] == "mindef":
            return model.get(d[1], F0) == min(d[2].value(model), d[3].value(model))
        if d[0] == "itedef":
            _, y, cond, a, b = d
            kind, e = cond
            v = e.value(model)
            holds = (v <= 0) if kind == "le" else (v == 0) if kind == "eq" else (v != 0)
            return model.get(y, F0) == (a.value(model) if holds else b.value(model))
        if d[0] == "muldef":
            _, y, ka, kb = d
            return model.get(y, F0) == model.get(ka, F0) * model.get(kb, F0)
        raise AssertionError(d[0])

    def _derive_products(self, lin: List[Tuple[str, LinExpr]]) -> List[Tuple[str, LinExpr]]:
        """Per-node product reasoning: constant factors linearize; products
        over pairwise-equal factors share their result."""
        muls = [d for d in self.defs if d[0] == "muldef"]
        if not muls:
            return []
        parent: Dict[Term, Term] = {}

        def find(x: Term) -> Term:
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        const: Dict[Term, Fraction] = {}
        for kind, e in lin:
            if kind != "eq":
                continue
            ks = list(e.coeffs.items())
            if len(ks) == 2 and e.const == 0:
                (x, cx), (y, cy) = ks
                if cx == -cy and abs(cx) == 1:
                    parent[find(x)] = find(y)
            elif len(ks) == 1:
                x, cx = ks[0]
                const[x] = -e.const / cx
        cval: Dict[Term, Fraction] = {}
        for x, v in const.items():
            cval[find(x)] = v
        out: List[Tuple[str, LinExpr]] = []
        groups: Dict[tuple, Term] = {}
        for _, y, ka, kb in muls:
            ra, rb = find(ka), find(kb)
            va, vb = cval.get(ra), cval.get(rb)
            if va is not None and vb is not None:
                out.append(("eq", LinExpr({y: F1}, -va * vb)))
            elif va is not None:
                out.append(("eq", LinExpr({y: F1, kb: -va})))
            elif vb is not None:
                out.append(("eq", LinExpr({y: F1, ka: -vb})))
            gk = tuple(sorted((to_sexp(ra), to_sexp(rb))))
            prev = groups.get(gk)
            if prev is None:
                groups[gk] = y
            elif prev != y:
                out.append(("eq", lvar(y) - lvar(prev)))
        return out

    @staticmethod
    def _compress(rows: List[Tuple[str, LinExpr]]):
        """Collapse single-variable rows into tightest integer bounds and
        gcd-strengthen the rest; returns None when the bounds alone clash.

        Keeps the tableau size independent of branching depth.
        """
        lb: Dict[Term, int] = {}
        ub: Dict[Term, int] = {}
        multi: List[Tuple[str, LinExpr]] = []
        for kind, e in rows:
            coeffs = {v: c for v, c in e.coeffs.items() if c != 0}
            if not coeffs:
                if (e.const > 0) if kind == "le" else (e.const != 0):
                    return None
                continue
            den = 1
            for c in list(coeffs.values()) + [e.const]:
                den = den * c.denominator // math.gcd(den, c.denominator)
            ic = {v: int(c * den) for v, c in coeffs.items()}
            icst = int(e.const * den)
            g = 0
            for c in ic.values():
                g = math.gcd(g, abs(c))
            if len(ic) == 1:
                (v, a), = ic.items()
                if kind == "eq":
                    if icst % a != 0:
                        return None
                    val = -icst // a
                    lb[v] = max(lb.get(v, val), val)
                    ub[v] = min(ub.get(v, val), val)
                elif a > 0:  # a·v ≤ −icst
                    bound = -icst // a  # floor
                    ub[v] = min(ub.get(v, bound), bound)
                else:  # a·v ≤ −icst with a < 0: v ≥ icst/(−a)
                    bound = -((-icst) // (-a))  # ceil
                    lb[v] = max(lb.get(v, bound), bound)
            else:
                if kind == "eq":
                    if icst % g != 0:
                        return None
                    lin2 = LinExpr({v: Fraction(c // g) for v, c in ic.items()},
                                   Fraction(icst // g))
                    multi.append(("eq", lin2))
                else:
                    # Σ(c/g)·x ≤ floor(−icst/g), valid over the integers
                    t = (-icst) // g
                    lin2 = LinExpr({v: Fraction(c // g) for v, c in ic.items()},
                                   Fraction(-t))
                    multi.append(("le", lin2))
        for v in set(lb) | set(ub):
            if v in lb and v in ub and lb[v] > ub[v]:
                return None
        for v in set(lb) | set(ub):
            if v in lb and v in ub and lb[v] == ub[v]:
                # exact pin: keep it visible to the divisibility test
                multi.append(("eq", LinExpr({v: F1}, Fraction(-lb[v]))))
            else:
                if v in lb:
                    multi.append(("le", LinExpr({v: -F1}, Fraction(lb[v]))))
                if v in ub:
                    multi.append(("le", LinExpr({v: F1}, Fraction(-ub[v]))))
        return multi

    def _round_probe(self, model, lin, pending):
        """Try floor/ceil combinations of the fractional coordinates."""
        fracs = [v for v in self.var_order if model[v].denominator != 1]
        if not fracs or len(fracs) > 4:
            return None
        for mask in range(1 << len(fracs)):
            cand = dict(model)
            for i, v in enumerate(fracs):
                f = math.floor(model[v])
                cand[v] = Fraction(f + ((mask >> i) & 1))
            ok = True
            for kind, e in lin:
                val = e.value(cand)
                if (val > 0) if kind == "le" else (val != 0):
                    ok = False
                    break
            if ok and all(self._pending_ok(d, cand) for d in pending):
                return cand
        return None

    def check(self) -> Tuple[str, Optional[Dict[Term, int]], str]:
        if self._model is not None:
            fm = {v: Fraction(self._model.get(v, 0)) for v in self.var_order}
            if self._model_ok(fm):
                self._model = {v: int(fm[v]) for v in self.var_order}
                return (SAT, dict(self._model), "cached")
        base = [(k, e) for k, e in self.lin if k in ("le", "eq")]
        pend0 = [("ne", e) for k, e in self.lin if k == "ne"] + list(self.defs)
        stack = [(base, pend0)]
        nodes = 0
        unknown = None
        mulrounds: Dict[int, int] = {}
        while stack:
            nodes += 1
            if nodes > self.node_budget:
                return (UNKNOWN, None, "node budget exceeded")
            lin, pending = stack.pop()
            rows = self._compress(lin + self._derive_products(lin))
            if rows is None:
                continue
            if _eq_system_infeasible(rows):
                continue
            model = lp_feasible(rows, self.var_order)
            if model is None:
                continue
            frac = next((v for v in self.var_order
                         if model[v].denominator != 1), None)
            if frac is not None:
                probe = self._round_probe(model, lin, pending)
                if probe is not None:
                    out = {v: int(probe[v]) for v in self.var_order}
                    self._model = out
                    return (SAT, dict(out), "")
                lo = math.floor(model[frac])
                down = (lin + [("le", LinExpr({frac: F1}, -lo))], pending)
                up = (lin + [("le", LinExpr({frac: -F1}, lo + 1))], pending)
                # explore the side nearer the origin first (stack pops last)
                if abs(lo) <= abs(lo + 1):
                    stack.append(up)
                    stack.append(down)
                else:
                    stack.append(down)
                    stack.append(up)
                continue
            viol = next((i for i, d in enumerate(pending)
                         if not self._pending_ok(d, model)), None)
            if viol is None:
                out = {v: int(model[v]) for v in self.var_order}
                self._model = out
                return (SAT, dict(out), "")
            d = pending[viol]
            rest = pending[:viol] + pending[viol + 1:]
            tag = d[0]
            if tag == "ne":
                e = d[1]
                stack.append((lin + [("le", e.shift(1))], rest))
                stack.append((lin + [("le", e.scale(-F1).shift(1))], rest))
            elif tag in ("maxdef", "mindef"):
                _, y, a, b = d
                if tag == "maxdef":
                    stack.append((lin + [("le", b - a), ("eq", lvar(y) - a)], rest))
                    stack.append((lin + [("le", a - b), ("eq", lvar(y) - b)], rest))
                else:
                    stack.append((lin + [("le", a - b), ("eq", lvar(y) - a)], rest))
                    stack.append((lin + [("le", b - a), ("eq", lvar(y) - b)], rest))
            elif tag == "itedef":
                _, y, cond, a, b = d
                kind, e = cond
                if kind == "ne":
                    stack.append((lin + [("le", e.shift(1)), ("eq", lvar(y) - a)],
                                  rest))
                    stack.append((lin + [("le", e.scale(-F1).shift(1)),
                                         ("eq", lvar(y) - a)], rest))
                    stack.append((lin + [("eq", e), ("eq", lvar(y) - b)], rest))
                elif kind == "le":
                    stack.append((lin + [("le", e.scale(-F1).shift(1)),
                                         ("eq", lvar(y) - b)], rest))
                    stack.append((lin + [("le", e), ("eq", lvar(y) - a)], rest))
                else:  # eq condition: negation is a disequality, two sides
                    stack.append((lin + [("le", e.shift(1)), ("eq", lvar(y) - b)],
                                  rest))
                    stack.append((lin + [("le", e.scale(-F1).shift(1)),
                                         ("eq", lvar(y) - b)], rest))
                    stack.append((lin + [("eq", e), ("eq", lvar(y) - a)], rest))
            elif tag == "muldef":
                _, y, ka, kb = d
                rid = id(d)
                mulrounds[rid] = mulrounds.get(rid, 0) + 1
                if mulrounds[rid] > self.mul_rounds:
                    unknown = "product refinement budget exceeded"
                    continue
                va, vb = model[ka], model[kb]
                piv, other, pv = (ka, kb, va) if abs(va) <= abs(vb) else (kb, ka, vb)
                stack.append((lin + [("le", LinExpr({piv: F1}, -pv + 1))],
                              rest + [d]))
                stack.append((lin + [("le", LinExpr({piv: -F1}, pv + 1))],
                              rest + [d]))
                stack.append((lin + [("eq", LinExpr({piv: F1}, -pv)),
                                     ("eq", LinExpr({y: F1, other: -pv}))],
                              rest))
            else:
                raise AssertionError(tag)
        if unknown:
            return (UNKNOWN, None, unknown)
        return (UNSAT, None, "")

    def _pending_ok(self, d: tuple, model) -> bool:
        if d[0] == "ne":
            return d[1].value(model) != 0
        return self._def_ok(d, model)

    # -- entailment --

    def entails(self, f: Term):
        """True / False / UNKNOWN: does the store entail the atom f?"""
        kind, e = self.to_cond(f)
        if self._model is not None:
            fm = {k: Fraction(v) for k, v in self._model.items()}
            if all(k in fm or k not in self._var_set for k in e.coeffs):
                v = e.value(fm)
                holds = (v <= 0) if kind == "le" else (v == 0) if kind == "eq" else (v != 0)
                if not holds and self._model_ok(fm):
                    return False
        self.push()
        try:
            if kind == "le":
                self.lin.append(("le", e.scale(-F1).shift(1)))
            elif kind == "eq":
                self.lin.append(("ne", e))
            else:
                self.lin.append(("eq", e))
            self._model = None
            verdict, _, _ = self.check()
        finally:
            self.pop()
        if verdict == UNSAT:
            return True
        if verdict == SAT:
            return False
        return UNKNOWN

    def implied_equalities(self, watched: Sequence[Term]) -> List[Tuple[Term, Term]]:
        """Entailed equalities between watched Int terms (store must be Sat)."""
        verdict, model, _ = self.check()
        if verdict != SAT:
            return []
        groups: Dict[int, List[Term]] = {}
        for t in watched:
            if t in self._var_set:
                groups.setdefault(model.get(t, 0), []).append(t)
        from .terms import eq
        out = []
        for vals in groups.values():
            for i in range(1, len(vals)):
                if self.entails(eq(vals[0], vals[i])) is True:
                    out.append((vals[0], vals[i]))
        return out

"""Tuple-aware congruence closure with trail-based backtracking.

One engine serves the three literal stores of the solver: bag/table
equalities (B*), relation memberships (S*), and element equalities (E*).
Closure includes tuple injectivity, selector evaluation over tuple
constructors, constructor clashes, and multiplicity-term congruence.
"""
from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

from .terms import Term, boolean, eq, mk, neq, to_sexp

MISSING = object()

# constructor/literal ops that act as class witnesses
_WITNESS_OPS = ("int", "str", "bool", "tuple", "nullable.some", "nullable.null")
SELECTOR_OPS = ("tuple.select", "tuple.proj", "nullable.val",
                "nullable.is_some", "nullable.is_null")


def _sel_ready(op: str, w: Term) -> bool:
    """Can the selector/tester `op` be evaluated on witness `w`?"""
    if op in ("tuple.select", "tuple.proj"):
        return w.op == "tuple"
    return w.op in ("nullable.some", "nullable.null")


def _lit_key(t: Term) -> str:
    return to_sexp(t)


class CongruenceClosure:
    def __init__(self):
        self.rep: Dict[Term, Term] = {}
        self.rank: Dict[Term, int] = {}
        self.members: Dict[Term, List[Term]] = {}
        self.uses: Dict[Term, List[Term]] = {}
        self.sig: Dict[tuple, Term] = {}
        self.diseq: Dict[Term, Dict[Term, Tuple[Term, Term]]] = {}
        self.mem_elem: Dict[Term, Dict[Term, Tuple[bool, Tuple[Term, Term]]]] = {}
        self.mem_set: Dict[Term, Dict[Term, Tuple[bool, Tuple[Term, Term]]]] = {}
        self.wit: Dict[Term, Term] = {}
        self.counts_elem: Dict[Term, List[Term]] = {}
        self.counts_bag: Dict[Term, List[Term]] = {}
        self.conflict: Optional[tuple] = None
        self.trail: List[tuple] = []
        self.levels: List[int] = []
        self._queue: List[Tuple[Term, Term]] = []

    # -- trail ---------------------------------------------------------------

    def push(self) -> None:
        self.levels.append(len(self.trail))

    def pop(self) -> None:
        mark = self.levels.pop()
        while len(self.trail) > mark:
            entry = self.trail.pop()
            tag = entry[0]
            if tag == "rep":
                self.rep[entry[1]] = entry[2]
            elif tag == "rank":
                self.rank[entry[1]] = entry[2]
            elif tag == "len":
                entry[1][entry[2]] = entry[1][entry[2]][: entry[3]]
            elif tag == "map":
                d, k, old = entry[1], entry[2], entry[3]
                if old is MISSING:
                    del d[k]
                else:
                    d[k] = old
            elif tag == "term":
                t = entry[1]
                for d in (self.rep, self.rank, self.members, self.uses,
                          self.diseq, self.mem_elem, self.mem_set,
                          self.counts_elem, self.counts_bag):
                    d.pop(t, None)
                self.wit.pop(t, None)
            elif tag == "conflict":
                self.conflict = entry[1]

    def _set_map(self, d: dict, k, v) -> None:
        self.trail.append(("map", d, k, d.get(k, MISSING)))
        d[k] = v

    def _del_map(self, d: dict, k) -> None:
        if k in d:
            self.trail.append(("map", d, k, d[k]))
            del d[k]

    def _extend(self, d: Dict[Term, list], k: Term, items: list) -> None:
        self.trail.append(("len", d, k, len(d[k])))
        d[k] = d[k] + items

    def _set_conflict(self, reason: tuple) -> None:
        if self.conflict is None:
            self.trail.append(("conflict", None))
            self.conflict = reason

    # -- registration ----------------------------------------------------------

    def has_term(self, t: Term) -> bool:
        return t in self.rep

    def find(self, t: Term) -> Term:
        r = self.rep[t]
        while r is not self.rep[r]:
            r = self.rep[r]
        return r

    def _sig_key(self, t: Term) -> tuple:
        return (t.op, t.idx, t.fun, tuple(self.find(a) for a in t.args))

    def _add(self, t: Term) -> None:
        if t in self.rep:
            return
        for a in t.args:
            self._add(a)
        self.trail.append(("term", t))
        self.rep[t] = t
        self.rank[t] = 0
        self.members[t] = [t]
        self.uses[t] = []
        self.diseq[t] = {}
        self.mem_elem[t] = {}
        self.mem_set[t] = {}
        self.counts_elem[t] = []
        self.counts_bag[t] = []
        if t.op in _WITNESS_OPS:
            self._set_map(self.wit, t, t)
        for a in t.args:
            self._extend(self.uses, self.find(a), [t])
        if t.args:
            key = self._sig_key(t)
            prev = self.sig.get(key)
            if prev is None:
                self._set_map(self.sig, key, t)
            elif prev is not t:
                self._queue.append((t, prev))
        if t.op == "bag.count":
            e, s = t.args
            self._extend(self.counts_elem, self.find(e), [t])
            self._extend(self.counts_bag, self.find(s), [t])
        if t.op in SELECTOR_OPS:
            w = self.wit.get(self.find(t.args[0]))
            if w is not None and _sel_ready(t.op, w):
                self._selector_eval(t, w)

    def _selector_eval(self, t: Term, w: Term) -> None:
        if t.op == "tuple.select":
            self._queue.append((t, w.args[t.idx[0]]))
        elif t.op == "tuple.proj":
            built = mk("tuple", *(w.args[i] for i in t.idx))
            self._add(built)
            self._queue.append((t, built))
        elif t.op == "nullable.val":
            if w.op == "nullable.some":
                self._queue.append((t, w.args[0]))
        elif t.op == "nullable.is_some":
            flag = boolean(w.op == "nullable.some")
            self._add(flag)
            self._queue.append((t, flag))
        elif t.op == "nullable.is_null":
            flag = boolean(w.op == "nullable.null")
            self._add(flag)
            self._queue.append((t, flag))

    def add_term(self, t: Term) -> Term:
        self._add(t)
        self._drain()
        return self.find(t) if self.conflict is None else t

    # -- merging ---------------------------------------------------------------

    def _clash(self, w1: Term, w2: Term) -> Optional[str]:
        if w1.op in ("int", "str", "bool") and w2.op == w1.op:
            return None if w1.value == w2.value else "literal clash"
        if w1.op == "tuple" and w2.op == "tuple":
            for a, b in zip(w1.args, w2.args):
                self._queue.append((a, b))
            return None
        if w1.op == "nullable.some" and w2.op == "nullable.some":
            self._queue.append((w1.args[0], w2.args[0]))
            return None
        if {w1.op, w2.op} == {"nullable.some", "nullable.null"}:
            return "constructor clash"
        return None

    def _union(self, a: Term, b: Term) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra is rb:
            return
        if self.rank[ra] > self.rank[rb]:
            ra, rb = rb, ra
        if self.rank[ra] == self.rank[rb]:
            self.trail.append(("rank", rb, self.rank[rb]))
            self.rank[rb] += 1

        # disequality between the classes closes t ≉ t
        hit = self.diseq[ra].get(rb)
        if hit is not None:
            self._set_conflict(("diseq-merge", hit[0], hit[1]))
            return

        wa, wb = self.wit.get(ra), self.wit.get(rb)
        if wa is not None and wb is not None:
            fail = self._clash(wa, wb)
            if fail:
                self._set_conflict((fail, wa, wb))
                return

        # rehash congruence parents of the losing class
        old_uses = list(self.uses[ra])
        self.trail.append(("rep", ra, self.rep[ra]))
        self.rep[ra] = rb

        for u in old_uses:
            key = self._sig_key(u)
            prev = self.sig.get(key)
            if prev is None:
                self._set_map(self.sig, key, u)
            elif prev is not u:
                self._queue.append((u, prev))

        self._extend(self.members, rb, self.members[ra])
        self._extend(self.uses, rb, old_uses)
        self._extend(self.counts_elem, rb, self.counts_elem[ra])
        self._extend(self.counts_bag, rb, self.counts_bag[ra])

        if wb is None and wa is not None:
            self._set_map(self.wit, rb, wa)
            for u in self.uses[rb]:
                if u.op in SELECTOR_OPS and _sel_ready(u.op, wa) \
                        and self.find(u.args[0]) is rb:
                    self._selector_eval(u, wa)
        wnew = self.wit.get(rb)
        if wnew is not None:
            for u in old_uses:
                if u.op in SELECTOR_OPS and _sel_ready(u.op, wnew) \
                        and self.find(u.args[0]) is rb:
                    self._selector_eval(u, wnew)

        # move disequality edges to the winning root
        for other, src in list(self.diseq[ra].items()):
            o = self.find(other)
            if o is rb:
                self._set_conflict(("diseq-merge", src[0], src[1]))
                return
            if o not in self.diseq[rb]:
                self._set_map(self.diseq[rb], o, src)
                self._set_map(self.diseq[o], rb, src)
            self._del_map(self.diseq[o], ra)

        # move membership entries (elem side, then set side)
        for sref, entry in list(self.mem_elem[ra].items()):
            s = self.find(sref)
            cur = self.mem_elem[rb].get(s)
            if cur is not None and cur[0] != entry[0]:
                self._set_conflict(("membership clash", cur[1], entry[1]))
                return
            if cur is None:
                self._set_map(self.mem_elem[rb], s, entry)
                self._set_map(self.mem_set[s], rb, entry)
            self._del_map(self.mem_set[s], ra)
        for eref, entry in list(self.mem_set[ra].items()):
            e = self.find(eref)
            cur = self.mem_set[rb].get(e)
            if cur is not None and cur[0] != entry[0]:
                self._set_conflict(("membership clash", cur[1], entry[1]))
                return
            if cur is None:
                self._set_map(self.mem_set[rb], e, entry)
                self._set_map(self.mem_elem[e], rb, entry)
            self._del_map(self.mem_elem[e], ra)

    def _drain(self) -> None:
        while self._queue and self.conflict is None:
            a, b = self._queue.pop()
            self._union(a, b)
        self._queue.clear()

    def merge(self, a: Term, b: Term) -> Optional[tuple]:
        self._add(a)
        self._add(b)
        self._queue.append((a, b))
        self._drain()
        return self.conflict

    def assert_diseq(self, a: Term, b: Term) -> Optional[tuple]:
        self._add(a)
        self._add(b)
        self._drain()
        if self.conflict is not None:
            return self.conflict
        ra, rb = self.find(a), self.find(b)
        if ra is rb:
            self._set_conflict(("diseq-merge", a, b))
            return self.conflict
        if rb not in self.diseq[ra]:
            self._set_map(self.diseq[ra], rb, (a, b))
            self._set_map(self.diseq[rb], ra, (a, b))
        return None

    def assert_member(self, e: Term, s: Term, polarity: bool) -> Optional[tuple]:
        self._add(e)
        self._add(s)
        self._drain()
        if self.conflict is not None:
            return self.conflict
        re_, rs = self.find(e), self.find(s)
        cur = self.mem_elem[re_].get(rs)
        if cur is not None:
            if cur[0] != polarity:
                self._set_conflict(("membership clash", cur[1], (e, s)))
            return self.conflict
        self._set_map(self.mem_elem[re_], rs, (polarity, (e, s)))
        self._set_map(self.mem_set[rs], re_, (polarity, (e, s)))
        return None

    def assert_literal(self, lit: Term) -> Optional[tuple]:
        positive, atom = True, lit
        if atom.op == "not":
            positive, atom = False, atom.args[0]
        if atom.op == "=":
            if positive:
                return self.merge(atom.args[0], atom.args[1])
            return self.assert_diseq(atom.args[0], atom.args[1])
        if atom.op in ("set.member", "bag.member"):
            return self.assert_member(atom.args[0], atom.args[1], positive)
        raise ValueError("not a store literal: %s" % to_sexp(lit))

    # -- queries ---------------------------------------------------------------

    def same(self, a: Term, b: Term) -> bool:
        if a == b:
            return True
        if a not in self.rep or b not in self.rep:
            return False
        return self.find(a) is self.find(b)

    def entails_diseq(self, a: Term, b: Term) -> bool:
        """Explicit disequality edge, or a literal/constructor clash."""
        if a not in self.rep or b not in self.rep:
            return False
        ra, rb = self.find(a), self.find(b)
        if ra is rb:
            return False
        if rb in self.diseq[ra]:
            return True
        wa, wb = self.wit.get(ra), self.wit.get(rb)
        if wa is None or wb is None:
            return False
        if wa.op in ("int", "str", "bool") and wb.op == wa.op:
            return wa.value != wb.value
        if {wa.op, wb.op} == {"nullable.some", "nullable.null"}:
            return True
        if wa.op == "tuple" and wb.op == "tuple":
            return any(self.entails_diseq(x, y) for x, y in zip(wa.args, wb.args))
        return False

    def member_status(self, e: Term, s: Term) -> Optional[bool]:
        if e not in self.rep or s not in self.rep:
            return None
        entry = self.mem_elem[self.find(e)].get(self.find(s))
        return None if entry is None else entry[0]

    def entails(self, lit: Term) -> bool:
        positive, atom = True, lit
        if atom.op == "not":
            positive, atom = False, atom.args[0]
        if atom.op == "=":
            a, b = atom.args
            return self.same(a, b) if positive else self.entails_diseq(a, b)
        if atom.op in ("set.member", "bag.member"):
            return self.member_status(atom.args[0], atom.args[1]) is (True if positive else False)
        return False

    def roots(self) -> Iterator[Term]:
        for t in self.rep:
            if self.rep[t] is t:
                yield t

    def class_members(self, t: Term) -> List[Term]:
        return self.members[self.find(t)]

    def witness(self, t: Term) -> Optional[Term]:
        return self.wit.get(self.find(t))

    def all_terms(self) -> Iterator[Term]:
        return iter(self.rep)

    def counts_for_bag(self, s: Term) -> List[Term]:
        return self.counts_bag.get(self.find(s), [])

    def counts_for_elem(self, e: Term) -> List[Term]:
        return self.counts_elem.get(self.find(e), [])

    # -- closure enumeration -----------------------------------------------------

    def closure_literals(self, kind: str = "B*") -> Iterator[Term]:
        """All (dis)equalities (and memberships for S*) of the closure.

        Multiplicity congruence yields m(e,s) ≈ m(e,t) also when m(e,t) is
        not yet a registered term, matching the closure definition.
        """
        for root in sorted(self.roots(), key=_lit_key):
            ms = sorted(self.members[root], key=_lit_key)
            for i in range(len(ms)):
                for j in range(i + 1, len(ms)):
                    yield eq(ms[i], ms[j])
        emitted = set()
        for root in sorted(self.roots(), key=_lit_key):
            for other, src in self.diseq[root].items():
                o = self.find(other)
                pair = tuple(sorted((_lit_key(root), _lit_key(o))))
                if pair in emitted:
                    continue
                emitted.add(pair)
                for x in sorted(self.members[root], key=_lit_key):
                    for y in sorted(self.members[o], key=_lit_key):
                        yield neq(x, y)
        # multiplicity congruence over existing m-terms
        for t in sorted(self.rep, key=_lit_key):
            if t.op != "bag.count":
                continue
            e, s = t.args
            for s2 in self.class_members(s):
                if s2 != s and s2.sort == s.sort:
                    yield eq(t, mk("bag.count", e, s2))
            for e2 in self.class_members(e):
                if e2 != e and e2.sort == e.sort:
                    yield eq(t, mk("bag.count", e2, s))
        if kind == "S*":
            for eroot in sorted(self.mem_elem, key=_lit_key):
                if self.rep.get(eroot) is not eroot:
                    continue
                for sref, (pol, _src) in self.mem_elem[eroot].items():
                    srt = self.find(sref)
                    for e2 in sorted(self.members[eroot], key=_lit_key):
                        for s2 in sorted(self.members[srt], key=_lit_key):
                            if s2.sort.kind not in ("Set", "Bag"):
                                continue
                            m = mk("set.member" if s2.sort.kind == "Set" else "bag.member", e2, s2)
                            yield m if pol else mk("not", m)

"""Logic frontend: DIMACS CNF, propositional formulas, CNF->DAG lowering and
the two-watched-literals index laid out as a linked-list SRAM image."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .dag import Dag, DagNode, Kind, literal


class ParseError(ValueError):
    pass


class MalformedHeader(ParseError):
    pass


class LiteralOutOfRange(ParseError):
    pass


class UnterminatedClause(ParseError):
    pass


class QuantifierPresent(ParseError):
    pass


@dataclass
class CnfFormula:
    num_vars: int
    clauses: list[list[int]]
    tautologies_dropped: int = 0
    atoms: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for c in self.clauses:
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise LiteralOutOfRange(f"literal {lit} outside 1..{self.num_vars}")

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def satisfied_by(self, assignment) -> bool:
        """``assignment`` maps var -> bool (or is indexable by var)."""
        return all(any(bool(assignment[abs(l)]) == (l > 0) for l in c) for c in self.clauses)


def normalize_clause(lits: Sequence[int]) -> list[int] | None:
    """Drop duplicate literals; return None for a tautology."""
    seen: list[int] = []
    for lit in lits:
        if -lit in seen:
            return None
        if lit not in seen:
            seen.append(lit)
    return seen


def parse_dimacs(text: str) -> CnfFormula:
    num_vars = num_clauses = None
    clauses: list[list[int]] = []
    current: list[int] = []
    raw_count = 0
    tautologies = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("c"):
            continue
        if s.startswith("%"):  # SATLIB trailer
            break
        if s.startswith("p"):
            toks = s.split()
            if num_vars is not None or len(toks) != 4 or toks[1] != "cnf":
                raise MalformedHeader(f"line {lineno}: bad header {s!r}")
            try:
                num_vars, num_clauses = int(toks[2]), int(toks[3])
            except ValueError:
                raise MalformedHeader(f"line {lineno}: bad header {s!r}") from None
            if num_vars < 0 or num_clauses < 0:
                raise MalformedHeader(f"line {lineno}: negative counts")
            continue
        if num_vars is None:
            raise MalformedHeader(f"line {lineno}: clause before 'p cnf' header")
        for tok in s.split():
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"line {lineno}: bad token {tok!r}") from None
            if lit == 0:
                raw_count += 1
                norm = normalize_clause(current)
                if norm is None:
                    tautologies += 1
                else:
                    clauses.append(norm)
                current = []
            elif abs(lit) > num_vars:
                raise LiteralOutOfRange(f"line {lineno}: literal {lit} exceeds {num_vars} variables")
            else:
                current.append(lit)
    if num_vars is None:
        raise MalformedHeader("missing 'p cnf' header")
    if current:
        raise UnterminatedClause(f"clause {current} not terminated by 0")
    if raw_count != num_clauses:
        raise MalformedHeader(f"header declares {num_clauses} clauses, found {raw_count}")
    return CnfFormula(num_vars, clauses, tautologies)


def dumps_dimacs(cnf: CnfFormula) -> str:
    lines = [f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    lines += [" ".join(map(str, c + [0])) for c in cnf.clauses]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# propositional formulas (prefix s-expressions)

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_OPS = {"not": 1, "and": None, "or": None, "implies": 2, "->": 2, "iff": 2, "<->": 2}


def parse_sexpr(text: str):
    """``(and (or a (not b)) b)`` -> nested tuples ``('and', ('or', 'a', ...), 'b')``."""
    toks = _TOKEN.findall(text)
    pos = 0

    def expr():
        nonlocal pos
        if pos >= len(toks):
            raise ParseError("unexpected end of formula")
        t = toks[pos]
        pos += 1
        if t == ")":
            raise ParseError("unexpected ')'")
        if t != "(":
            return t
        if pos >= len(toks):
            raise ParseError("unexpected end of formula")
        op = toks[pos].lower()
        pos += 1
        if op in ("forall", "exists"):
            raise QuantifierPresent(f"quantifier {op!r}: ground the formula first")
        if op not in _OPS:
            raise ParseError(f"unknown connective {op!r}")
        args = []
        while pos < len(toks) and toks[pos] != ")":
            args.append(expr())
        if pos >= len(toks):
            raise ParseError("missing ')'")
        pos += 1
        arity = _OPS[op]
        if (arity is not None and len(args) != arity) or not args:
            raise ParseError(f"{op} expects {arity or 'at least 1'} operands, got {len(args)}")
        return (op, *args)

    tree = expr()
    if pos != len(toks):
        raise ParseError("trailing tokens after formula")
    return tree


def format_sexpr(tree) -> str:
    if isinstance(tree, str):
        return tree
    return "(" + " ".join(format_sexpr(t) for t in tree) + ")"


def _atoms(tree, out: dict[str, int]):
    if isinstance(tree, str):
        out.setdefault(tree, len(out) + 1)
    else:
        for a in tree[1:]:
            _atoms(a, out)


def tseitin_cnf(formula) -> CnfFormula:
    """Equisatisfiable CNF of a quantifier-free formula (text or parsed tree).

    Atoms get ids 1..n by first appearance; each connective other than ``not``
    gets a fresh definition variable above them.
    """
    tree = parse_sexpr(formula) if isinstance(formula, str) else formula
    atoms: dict[str, int] = {}
    _atoms(tree, atoms)
    nxt = len(atoms)
    clauses: list[list[int]] = []

    def fresh() -> int:
        nonlocal nxt
        nxt += 1
        return nxt

    def enc(t) -> int:
        if isinstance(t, str):
            return atoms[t]
        op, args = t[0], t[1:]
        if op == "not":
            return -enc(args[0])
        if op in ("implies", "->"):
            return enc(("or", ("not", args[0]), args[1]))
        lits = [enc(a) for a in args]
        if len(lits) == 1 and op in ("and", "or"):
            return lits[0]
        g = fresh()
        if op == "and":
            clauses.extend([-g, x] for x in lits)
            clauses.append([g] + [-x for x in lits])
        elif op == "or":
            clauses.append([-g] + lits)
            clauses.extend([g, -x] for x in lits)
        else:  # iff
            a, b = lits
            clauses.extend([[-g, -a, b], [-g, a, -b], [g, a, b], [g, -a, -b]])
        return g

    root = enc(tree)
    clauses.append([root])
    kept = []
    dropped = 0
    for c in clauses:
        norm = normalize_clause(c)
        if norm is None:
            dropped += 1
        else:
            kept.append(norm)
    return CnfFormula(nxt, kept, dropped, atoms)


# ---------------------------------------------------------------------------
# lowering to the unified DAG


def lower_cnf_to_dag(cnf: CnfFormula, kernel_kind: str = "SAT") -> Dag:
    """Literal layer -> one Or per clause -> a single And root.

    Literal leaves are shared: one node per (variable, polarity), ordered by
    first occurrence.
    """
    nodes: list[DagNode] = []
    lit_node: dict[int, int] = {}
    for c in cnf.clauses:
        for lit in c:
            if lit not in lit_node:
                lit_node[lit] = len(nodes)
                nodes.append(literal(abs(lit), lit > 0))
    clause_ids = []
    for c in cnf.clauses:
        ch = tuple(lit_node[l] for l in c)
        nodes.append(DagNode(Kind.OR, ch, scope=frozenset(abs(l) for l in c)))
        clause_ids.append(len(nodes) - 1)
    scope = frozenset(abs(l) for c in cnf.clauses for l in c)
    nodes.append(DagNode(Kind.AND, tuple(clause_ids), scope=scope))
    return Dag(tuple(nodes), (len(nodes) - 1,), kernel_kind)


# ---------------------------------------------------------------------------
# two-watched-literals index

NIL = -1
CLAUSE_HEADER_WORDS = 3  # [length, next-watch slot 0, next-watch slot 1]


def lit_id(lit: int) -> int:
    """Literal -> dense id: +v -> 2(v-1), -v -> 2(v-1)+1."""
    return 2 * (abs(lit) - 1) + (lit < 0)


def id_lit(i: int) -> int:
    v = i // 2 + 1
    return -v if i & 1 else v


class WatchIndex:
    """Head-pointer table plus per-clause next-watch links over a flat word image.

    Clause ``k`` occupies ``[length, next0, next1, lit0, lit1, ...]`` at
    ``base[k]``; slots 0 and 1 hold the watched literals.  ``head[lit_id]`` is
    the first clause watching that literal.  Words ``0 .. 2*num_vars-1`` are
    reserved for the head table so clause addresses reflect a real layout.
    """

    def __init__(self, num_vars: int):
        self.num_vars = num_vars
        self.head = [NIL] * (2 * num_vars)
        self.lits: list[list[int]] = []
        self.next: list[list[int]] = []  # per clause: [next for slot0, next for slot1]
        self.base: list[int] = []
        self.alive: list[bool] = []
        self.top = 2 * num_vars  # next free word

    # -- construction -----------------------------------------------------
    def add_clause(self, lits: Sequence[int], *, link: bool = True) -> int:
        k = len(self.lits)
        self.lits.append(list(lits))
        self.next.append([NIL, NIL])
        self.base.append(self.top)
        self.alive.append(True)
        self.top += CLAUSE_HEADER_WORDS + len(lits)
        if link:
            for slot in range(min(2, len(lits))):
                self._link(k, slot, at_head=True)
        return k

    def _link(self, k: int, slot: int, at_head: bool):
        h = lit_id(self.lits[k][slot])
        if at_head or self.head[h] == NIL:
            self.next[k][slot] = self.head[h]
            self.head[h] = k
            return
        cur = self.head[h]
        while True:
            cslot = self.slot_of(cur, h)
            nxt = self.next[cur][cslot]
            if nxt == NIL:
                self.next[cur][cslot] = k
                self.next[k][slot] = NIL
                return
            cur = nxt

    def slot_of(self, k: int, h: int) -> int:
        """Which watch slot of clause ``k`` holds literal id ``h``."""
        return 0 if lit_id(self.lits[k][0]) == h else 1

    # -- queries ------------------------------------------------------------
    def watchers(self, lit: int) -> Iterator[int]:
        """Walk the linked list of clauses watching ``lit``."""
        h = lit_id(lit)
        cur = self.head[h]
        while cur != NIL:
            yield cur
            cur = self.next[cur][self.slot_of(cur, h)]

    def list_lengths(self) -> dict[int, int]:
        return {id_lit(h): sum(1 for _ in self.watchers(id_lit(h)))
                for h in range(len(self.head)) if self.head[h] != NIL}

    def words(self, k: int) -> int:
        return CLAUSE_HEADER_WORDS + len(self.lits[k])

    # -- mutation used by the propagation engine --------------------------
    def unlink(self, k: int, slot: int, prev: int):
        """Remove clause ``k`` (watch ``slot``) from its list; ``prev`` is the
        predecessor clause in that list or NIL."""
        h = lit_id(self.lits[k][slot])
        nxt = self.next[k][slot]
        if prev == NIL:
            self.head[h] = nxt
        else:
            self.next[prev][self.slot_of(prev, h)] = nxt
        self.next[k][slot] = NIL

    def move_watch(self, k: int, slot: int, prev: int, new_pos: int):
        """Replace watched literal in ``slot`` by literal at ``new_pos`` (>= 2)
        and push the clause onto the new literal's list head."""
        self.unlink(k, slot, prev)
        lits = self.lits[k]
        lits[slot], lits[new_pos] = lits[new_pos], lits[slot]
        self._link(k, slot, at_head=True)

    def remove_clause(self, k: int):
        for slot in range(min(2, len(self.lits[k]))):
            h = lit_id(self.lits[k][slot])
            prev, cur = NIL, self.head[h]
            while cur != NIL and cur != k:
                prev, cur = cur, self.next[cur][self.slot_of(cur, h)]
            if cur == k:
                self.unlink(k, slot, prev)
        self.alive[k] = False


def build_watch_index(cnf: CnfFormula) -> WatchIndex:
    """Initial watches are the first two literals of every clause, lists in
    clause order."""
    idx = WatchIndex(cnf.num_vars)
    for c in cnf.clauses:
        idx.add_clause(c, link=False)
    for k in reversed(range(len(cnf.clauses))):
        for slot in range(min(2, len(cnf.clauses[k]))):
            idx._link(k, slot, at_head=True)
    return idx

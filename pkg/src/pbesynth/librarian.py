"""Abstraction mining: find reusable patterns in solved programs and turn
them into new library operations.

A pattern is a term with numbered holes.  Matching walks every subtree of
every corpus program; a hole binds any subtree (repeated holes must bind
syntactically equal subtrees), but holes never sit inside a lambda body of
the pattern itself, so bindings may mention bound variables of the
surrounding program and rewriting in place stays sound.

Search is best-first from the empty pattern (one hole), expanding the
lowest-numbered open hole with the shapes actually observed among its
bindings.  An upper bound on the value of any refinement lets us prune.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .lang import (
    Arrow, Ty, Term, Apply, BoundVar, ConstBool, ConstInt, ConstList,
    InputVar, Lam, PrimRef, format_term, free_input_vars, infer_type,
    max_free_index, term_size,
)
from .dsl import DSLibrary


@dataclass(frozen=True)
class Hole:
    """A pattern variable; equal ids must bind equal subtrees."""
    id: int


def is_hole(t) -> bool:
    return isinstance(t, Hole)


def pattern_holes(p) -> List[int]:
    """Hole ids in first-occurrence (preorder) order."""
    seen: List[int] = []

    def walk(t):
        if isinstance(t, Hole):
            if t.id not in seen:
                seen.append(t.id)
        elif isinstance(t, Apply):
            walk(t.fn)
            for a in t.args:
                walk(a)
        elif isinstance(t, Lam):
            walk(t.body)

    walk(p)
    return seen


def hole_occurrences(p) -> List[Tuple[int, tuple]]:
    """(hole id, path) for every hole occurrence, preorder."""
    out = []

    def walk(t, path):
        if isinstance(t, Hole):
            out.append((t.id, path))
        elif isinstance(t, Apply):
            walk(t.fn, path + (0,))
            for i, a in enumerate(t.args):
                walk(a, path + (i + 1,))
        elif isinstance(t, Lam):
            walk(t.body, path + (0,))

    walk(p, ())
    return out


def canonicalize(p):
    """Renumber holes by first occurrence so equal patterns compare equal."""
    order = pattern_holes(p)
    remap = {h: i for i, h in enumerate(order)}

    def walk(t):
        if isinstance(t, Hole):
            return Hole(remap[t.id])
        if isinstance(t, Apply):
            return Apply(walk(t.fn), tuple(walk(a) for a in t.args))
        if isinstance(t, Lam):
            return Lam(t.arity, walk(t.body))
        return t

    return walk(p)


def format_pattern(p) -> str:
    if isinstance(p, Hole):
        return f"?{p.id}"
    if isinstance(p, Apply):
        parts = [format_pattern(p.fn)] + [format_pattern(a) for a in p.args]
        return "(" + " ".join(parts) + ")"
    if isinstance(p, Lam):
        suffix = "" if p.arity == 1 else str(p.arity)
        return f"(lam{suffix} {format_pattern(p.body)})"
    return format_term(p)


def non_hole_size(p) -> int:
    """Pattern weight with holes counting zero (same scale as term_size)."""
    if isinstance(p, Hole):
        return 0
    if isinstance(p, Apply):
        head = 1 if isinstance(p.fn, PrimRef) else non_hole_size(p.fn)
        return head + sum(non_hole_size(a) for a in p.args)
    if isinstance(p, Lam):
        return non_hole_size(p.body)
    if isinstance(p, (ConstInt, ConstBool, ConstList, InputVar)):
        return 1
    return 0  # BoundVar, PrimRef


def nonvariable_expressions(p) -> int:
    """How many nodes are expressions rather than variables or holes."""
    if isinstance(p, Hole):
        return 0
    if isinstance(p, Apply):
        head = 1 if isinstance(p.fn, PrimRef) else nonvariable_expressions(p.fn)
        return head + sum(nonvariable_expressions(a) for a in p.args)
    if isinstance(p, Lam):
        return nonvariable_expressions(p.body)
    if isinstance(p, (ConstInt, ConstBool, ConstList)):
        return 1
    return 0  # variables


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Match:
    task_id: str
    program_idx: int
    path: tuple
    bindings: tuple  # of (hole id, Term), sorted by id

    def binding(self, hole_id: int) -> Term:
        for h, t in self.bindings:
            if h == hole_id:
                return t
        raise KeyError(hole_id)


def _match_at(pattern, sub, bindings: dict) -> bool:
    if isinstance(pattern, Hole):
        prev = bindings.get(pattern.id)
        if prev is None:
            bindings[pattern.id] = sub
            return True
        return prev == sub
    if isinstance(pattern, Apply):
        if not isinstance(sub, Apply) or len(pattern.args) != len(sub.args):
            return False
        if not _match_at(pattern.fn, sub.fn, bindings):
            return False
        return all(_match_at(p, a, bindings)
                   for p, a in zip(pattern.args, sub.args))
    if isinstance(pattern, Lam):
        return isinstance(sub, Lam) and pattern == sub
    return pattern == sub


def subtree_items(t: Term, path=()):
    """(path, subtree) preorder, skipping bare PrimRef heads."""
    yield path, t
    if isinstance(t, Apply):
        if not isinstance(t.fn, PrimRef):
            yield from subtree_items(t.fn, path + (0,))
        for i, a in enumerate(t.args):
            yield from subtree_items(a, path + (i + 1,))
    elif isinstance(t, Lam):
        yield from subtree_items(t.body, path + (0,))


def count_matches(pattern, corpus: Dict[str, list]) -> List[Match]:
    """All matches of `pattern` in `corpus` (task id -> list of programs)."""
    out = []
    for task_id in sorted(corpus):
        for idx, program in enumerate(corpus[task_id]):
            for path, sub in subtree_items(program):
                bindings: dict = {}
                if _match_at(pattern, sub, bindings):
                    out.append(Match(task_id, idx, path,
                                     tuple(sorted(bindings.items()))))
    return out


def deoverlap(matches: List[Match]) -> List[Match]:
    """Keep a non-nested subset per program, preferring outermost matches."""
    out = []
    by_prog: Dict[tuple, List[tuple]] = {}
    for m in sorted(matches, key=lambda m: (m.task_id, m.program_idx, m.path)):
        taken = by_prog.setdefault((m.task_id, m.program_idx), [])
        if any(m.path[:len(p)] == p for p in taken):
            continue
        taken.append(m.path)
        out.append(m)
    return out


# ---------------------------------------------------------------------------
# Utility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UtilityReport:
    value: int
    matches: int
    distinct_tasks: int
    body_size: int
    arity: int


def utility(pattern, matches: List[Match]) -> UtilityReport:
    """Compression value: one application replaces each use of the body, so
    every match saves the body weight minus the application head and the
    cost of passing each parameter."""
    used = deoverlap(matches)
    m = len(used)
    s = non_hole_size(pattern)
    a = len(pattern_holes(pattern))
    value = m * max(0, s - 1 - a)
    return UtilityReport(value, m, len({u.task_id for u in used}), s, a)


# ---------------------------------------------------------------------------
# Finalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Abstraction:
    name: str
    arity: int
    signature: object  # Arrow for arity >= 1, a base Ty for arity 0
    body: Term  # Lam of `arity`, or the literal pattern for arity 0
    pattern: object
    utility: UtilityReport
    tasks: tuple
    iteration: int = 0


@dataclass(frozen=True)
class Rejection:
    reason: str
    detail: str = ""


@dataclass(frozen=True)
class MineConfig:
    max_arity: int = 3
    max_rounds: int = 3
    min_tasks: int = 2
    min_nonvariable: int = 2
    prune: bool = True
    max_visited: int = 50000


def finalize(pattern, matches, lib: DSLibrary, annots, name: str,
             cfg: MineConfig = MineConfig(), iteration: int = 0):
    """Turn a pattern into an Abstraction, or a Rejection explaining why the
    pattern is unusable.  `annots` maps (task id, program idx) to the
    program's path -> type table."""
    used = deoverlap(matches)
    rep = utility(pattern, matches)
    if rep.distinct_tasks < cfg.min_tasks:
        return Rejection("single-task",
                         f"occurs in {rep.distinct_tasks} task(s)")
    if nonvariable_expressions(pattern) < cfg.min_nonvariable:
        return Rejection("trivial",
                         f"{nonvariable_expressions(pattern)} non-variable "
                         "expression(s)")
    if rep.value <= 0:
        return Rejection("no-compression", f"value {rep.value}")
    order = pattern_holes(pattern)
    if len(order) > cfg.max_arity:
        return Rejection("arity", f"{len(order)} parameters")
    occs = hole_occurrences(pattern)
    param_tys: Dict[int, Ty] = {}
    result_ty: Optional[Ty] = None
    for m in used:
        table = annots[(m.task_id, m.program_idx)]
        rty = table.get(m.path)
        if result_ty is None:
            result_ty = rty
        elif rty != result_ty:
            return Rejection("inconsistent-types",
                             f"result {result_ty!r} vs {rty!r}")
        for hid, rel in occs:
            ty = table.get(m.path + rel)
            if ty is None:
                return Rejection("inconsistent-types", "untyped binding site")
            if param_tys.setdefault(hid, ty) != ty:
                return Rejection(
                    "inconsistent-types",
                    f"parameter {hid} used at {param_tys[hid]!r} and {ty!r}")
    if result_ty is None:
        return Rejection("no-matches", "")
    arity = len(order)
    if arity == 0:
        if isinstance(result_ty, Arrow):
            return Rejection("inconsistent-types",
                             "parameterless pattern of function type")
        if max_free_index(pattern) >= 0:
            return Rejection("ill-typed",
                             "parameterless pattern has free bound variables")
        if free_input_vars(pattern):
            return Rejection("ill-typed",
                             "parameterless pattern captures task inputs")
        return Abstraction(name, 0, result_ty, pattern, pattern, rep,
                           tuple(sorted({m.task_id for m in used})), iteration)
    remap = {h: i for i, h in enumerate(order)}
    body_core = _substitute_holes(pattern,
                                  {h: BoundVar(arity - 1 - remap[h])
                                   for h in order})
    body = Lam(arity, body_core)
    sig = Arrow(tuple(param_tys[h] for h in order), result_ty)
    try:
        infer_type(body, {}, lib.symbol_types(), expected=sig)
    except Exception as e:  # noqa: BLE001 - report, do not crash the miner
        return Rejection("ill-typed", str(e))
    return Abstraction(name, arity, sig, body, pattern, rep,
                       tuple(sorted({m.task_id for m in used})), iteration)


def _substitute_holes(pattern, mapping):
    if isinstance(pattern, Hole):
        return mapping[pattern.id]
    if isinstance(pattern, Apply):
        return Apply(_substitute_holes(pattern.fn, mapping),
                     tuple(_substitute_holes(a, mapping)
                           for a in pattern.args))
    if isinstance(pattern, Lam):
        # holes never occur under a pattern lambda
        return pattern
    return pattern


def annotate_corpus(corpus, tasks, lib: DSLibrary):
    """Type table (path -> Ty) for every corpus program."""
    symbols = lib.symbol_types()
    annots = {}
    for task_id, programs in corpus.items():
        input_types = dict(tasks[task_id].input_types)
        for idx, program in enumerate(programs):
            table: dict = {}
            infer_type(program, input_types, symbols, record=table)
            annots[(task_id, idx)] = table
    return annots


# ---------------------------------------------------------------------------
# Best-first mining
# ---------------------------------------------------------------------------

def _binding_roots(matches, hole_id):
    """Distinct shapes bound by `hole_id`, in corpus order."""
    roots = []
    seen = set()
    for m in matches:
        b = m.binding(hole_id)
        if isinstance(b, Apply):
            if isinstance(b.fn, PrimRef):
                key = ("op", b.fn.name, len(b.args))
            else:
                key = ("apply", len(b.args))
        elif isinstance(b, ConstInt):
            key = ("const", "i", b.value)
        elif isinstance(b, ConstBool):
            key = ("const", "b", b.value)
        elif isinstance(b, ConstList):
            key = ("const", "l", b.values)
        elif isinstance(b, BoundVar):
            key = ("bvar", b.index)
        elif isinstance(b, Lam):
            key = ("lam", b)
        elif isinstance(b, PrimRef):
            key = ("prim", b.name)
        else:
            continue  # InputVar: only a hole can generalize it
        if key not in seen:
            seen.add(key)
            roots.append((key, b))
    return roots


def _replace_hole(pattern, hole_id, replacement):
    if isinstance(pattern, Hole):
        return replacement if pattern.id == hole_id else pattern
    if isinstance(pattern, Apply):
        return Apply(_replace_hole(pattern.fn, hole_id, replacement),
                     tuple(_replace_hole(a, hole_id, replacement)
                           for a in pattern.args))
    if isinstance(pattern, Lam):
        return pattern
    return pattern


def _expansions(pattern, matches, hole_id, next_hole):
    """Candidate refinements of one open hole.

    Yields (new pattern, next fresh hole id, ids of newly opened holes)."""
    out = []
    for hid in pattern_holes(pattern):
        if hid != hole_id:
            out.append((_replace_hole(pattern, hole_id, Hole(hid)),
                        next_hole, ()))
    for key, b in _binding_roots(matches, hole_id):
        kind = key[0]
        if kind == "op":
            k = key[2]
            fresh = tuple(Hole(next_hole + i) for i in range(k))
            rep = Apply(PrimRef(key[1]), fresh)
            out.append((_replace_hole(pattern, hole_id, rep),
                        next_hole + k, tuple(h.id for h in fresh)))
        elif kind == "apply":
            k = key[1]
            fresh = tuple(Hole(next_hole + i) for i in range(k + 1))
            rep = Apply(fresh[0], fresh[1:])
            out.append((_replace_hole(pattern, hole_id, rep),
                        next_hole + k + 1, tuple(h.id for h in fresh)))
        else:  # const / bvar / lam / prim: substitute the concrete subtree
            out.append((_replace_hole(pattern, hole_id, b), next_hole, ()))
    return out


@dataclass
class MineRound:
    abstraction: Optional[Abstraction]
    visited: int
    pruned: int
    rejections: dict


def mine_round(corpus, lib: DSLibrary, tasks, name: str,
               cfg: MineConfig = MineConfig(),
               iteration: int = 0) -> MineRound:
    """One best-first pass: the highest-value acceptable abstraction."""
    annots = annotate_corpus(corpus, tasks, lib)
    rejections: Dict[str, int] = {}
    best: Optional[Abstraction] = None
    visited = 0
    pruned = 0
    seen = set()
    counter = 0

    def push(queue, pattern, matches, open_holes, next_hole):
        nonlocal counter
        order = pattern_holes(pattern)
        remap = {h: i for i, h in enumerate(order)}
        key = (format_pattern(canonicalize(pattern)),
               tuple(sorted(remap[h] for h in open_holes if h in remap)))
        if key in seen:
            return
        seen.add(key)
        ub = _bound(pattern, matches)
        counter += 1
        heapq.heappush(queue, (-ub, counter, pattern, matches, open_holes,
                               next_hole))

    def _bound(pattern, matches):
        used = deoverlap(matches)
        if not used:
            return 0
        sizes = [term_size(_subtree_of(corpus, m)) for m in used]
        return len(used) * max(0, max(sizes) - 1)

    queue: list = []
    root = Hole(0)
    push(queue, root, count_matches(root, corpus), (0,), 1)
    while queue and visited < cfg.max_visited:
        neg_ub, _, pattern, matches, open_holes, next_hole = \
            heapq.heappop(queue)
        if cfg.prune and best is not None and -neg_ub <= best.utility.value:
            pruned += 1
            continue
        visited += 1
        total_holes = len(pattern_holes(pattern))
        if not isinstance(pattern, Hole) and total_holes <= cfg.max_arity:
            rep = utility(pattern, matches)
            if best is None or rep.value > best.utility.value:
                got = finalize(pattern, matches, lib, annots, name, cfg,
                               iteration)
                if isinstance(got, Abstraction):
                    best = got
                else:
                    rejections[got.reason] = rejections.get(got.reason, 0) + 1
        if not open_holes:
            continue
        frozen = [h for h in pattern_holes(pattern) if h not in open_holes]
        if len(frozen) > cfg.max_arity:
            continue  # frozen holes stay parameters in every refinement
        hid, rest = open_holes[0], open_holes[1:]
        for new_pat, new_next, opened in _expansions(pattern, matches, hid,
                                                     next_hole):
            sub = count_matches(new_pat, corpus)
            if not sub:
                continue
            push(queue, new_pat, sub, rest + opened, new_next)
        # keeping the hole open as a parameter
        push(queue, pattern, matches, rest, next_hole)
    return MineRound(best, visited, pruned, rejections)


def _subtree_of(corpus, match: Match) -> Term:
    t = corpus[match.task_id][match.program_idx]
    for step in match.path:
        if isinstance(t, Apply):
            t = t.fn if step == 0 else t.args[step - 1]
        elif isinstance(t, Lam):
            t = t.body
        else:
            raise IndexError(match.path)
    return t


# ---------------------------------------------------------------------------
# Rewriting
# ---------------------------------------------------------------------------

def rewrite_program(program: Term, abstraction: Abstraction,
                    constant_literal: Optional[Term] = None):
    """Replace every (outermost, non-overlapping) occurrence of the
    abstraction's pattern.  Returns (new program, sites rewritten, weight
    saved)."""
    matches = deoverlap(count_matches(abstraction.pattern, {"_": [program]}))
    if not matches:
        return program, 0, 0
    order = pattern_holes(abstraction.pattern)
    saved = 0
    out = program
    for m in sorted(matches, key=lambda m: m.path, reverse=True):
        site = _subtree_of({"_": [out]}, m)
        if abstraction.arity == 0:
            rep = constant_literal if constant_literal is not None \
                else abstraction.pattern
        else:
            rep = Apply(PrimRef(abstraction.name),
                        tuple(m.binding(h) for h in order))
        saved += term_size(site) - term_size(rep)
        out = _replace_at(out, m.path, rep)
    return out, len(matches), saved


def _replace_at(t: Term, path: tuple, rep: Term) -> Term:
    if not path:
        return rep
    step = path[0]
    if isinstance(t, Apply):
        if step == 0:
            return Apply(_replace_at(t.fn, path[1:], rep), t.args)
        args = list(t.args)
        args[step - 1] = _replace_at(args[step - 1], path[1:], rep)
        return Apply(t.fn, tuple(args))
    if isinstance(t, Lam):
        return Lam(t.arity, _replace_at(t.body, path[1:], rep))
    raise IndexError(path)


def rewrite_corpus(corpus, abstraction: Abstraction,
                   constant_literal: Optional[Term] = None):
    """Rewrite every program; returns (corpus, total sites, total saved)."""
    out = {}
    sites = 0
    saved = 0
    for task_id, programs in corpus.items():
        new_programs = []
        for p in programs:
            q, n, s = rewrite_program(p, abstraction, constant_literal)
            new_programs.append(q)
            sites += n
            saved += s
        out[task_id] = new_programs
    return out, sites, saved


# ---------------------------------------------------------------------------
# Multi-round driver
# ---------------------------------------------------------------------------

@dataclass
class MineResult:
    abstractions: list
    library: DSLibrary
    corpus: dict
    report: str


def next_abstraction_name(lib: DSLibrary) -> str:
    n = 0
    while lib.has_op(f"fn_{n}"):
        n += 1
    return f"fn_{n}"


def mine(corpus, lib: DSLibrary, tasks, cfg: MineConfig = MineConfig(),
         iteration: int = 0) -> MineResult:
    """Repeatedly extract the best abstraction and rewrite the corpus with
    it, extending the library as we go, until nothing of value remains or
    max_rounds is hit."""
    from .dsl import extend_with_abstraction

    corpus = {k: list(v) for k, v in corpus.items()}
    found = []
    lines = []
    for round_no in range(cfg.max_rounds):
        name = next_abstraction_name(lib)
        res = mine_round(corpus, lib, tasks, name, cfg, iteration)
        lines.append(f"round {round_no}: visited {res.visited}, "
                     f"pruned {res.pruned}, rejected {res.rejections}")
        if res.abstraction is None:
            lines.append(f"round {round_no}: no abstraction worth keeping")
            break
        a = res.abstraction
        lib = extend_with_abstraction(lib, a, iteration)
        literal = None
        if a.arity == 0:
            literal = lib.constants[-1][0]
        corpus, sites, saved = rewrite_corpus(corpus, a, literal)
        found.append(a)
        lines.append(
            f"round {round_no}: kept {a.name} arity {a.arity} "
            f"value {a.utility.value} ({a.utility.matches} matches in "
            f"{a.utility.distinct_tasks} tasks), rewrote {sites} sites, "
            f"saved weight {saved}")
        lines.append(f"  {a.name} = {format_pattern(a.pattern)}")
    return MineResult(found, lib, corpus, "\n".join(lines))

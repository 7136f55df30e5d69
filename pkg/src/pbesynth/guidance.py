"""Learned guidance for the search: a per-operation linear ranking model,
search-trace generation from random programs, and pairwise training.

Traces come from running the exhaustive enumerator on randomly generated
inputs, picking reachable values as targets, and replaying how each target
was built.  Every argument choice along the way becomes one trace step:
the chosen store entry is the positive, a sample of the other
type-compatible entries are the negatives.
"""

from __future__ import annotations

import math
import random
import zlib
from dataclasses import dataclass, field, replace

from .lang import INT, BOOL, INT_LIST, Apply, Lam, PrimRef, EvalLimits
from .dsl import DSLibrary
from .task import Task, format_value, parse_value, _split_commas
from .synthesis import (
    ScoreContext, exhaustive_search, lib_placeholders, make_context,
)

FEATURE_DIM = 12


def extract_features(op_name, prefix, candidate, ctx: ScoreContext):
    """Feature vector for scoring `candidate` at one argument position.

    `prefix` holds the entries already chosen for earlier positions."""
    sig = candidate.signature
    n = 0
    eq = contained = samelen = errs = 0
    if sig and sig[0] == "v":
        outcomes = sig[1]
        n = len(outcomes)
        for out, target in zip(outcomes, ctx.output_sig):
            if out == target:
                eq += 1
            if out and out[0] == "e":
                errs += 1
            if target and target[0] == "l":
                tvals = target[1]
                if out and out[0] == "i" and out[1] in tvals:
                    contained += 1
                elif out and out[0] == "l":
                    if len(out[1]) == len(tvals):
                        samelen += 1
                    if all(x in tvals for x in out[1]):
                        contained += 1
    inv = 1.0 / n if n else 0.0
    return [
        1.0,
        min(candidate.weight, 10) / 10.0,
        1.0 if candidate.ty == INT else 0.0,
        1.0 if candidate.ty == BOOL else 0.0,
        1.0 if candidate.ty == INT_LIST else 0.0,
        1.0 if candidate.is_lambda else 0.0,
        eq * inv,
        contained * inv,
        samelen * inv,
        errs * inv,
        1.0 if prefix and prefix[-1].index == candidate.index else 0.0,
        min(ctx.position, 4) / 4.0,
    ]


def _zeros():
    return [0.0] * FEATURE_DIM


class LinearScorer:
    """Per-operation linear model over argument features.

    Unknown operations score 0 for every candidate, matching the uniform
    scorer, so an untrained model degrades gracefully."""

    def __init__(self, per_op_parameters=None, training_report=None):
        self.per_op_parameters = dict(per_op_parameters or {})
        self.training_report = dict(training_report or {})

    def score(self, op_name, prefix, candidate, ctx) -> float:
        w = self.per_op_parameters.get(op_name)
        if w is None:
            return 0.0
        phi = extract_features(op_name, prefix, candidate, ctx)
        return sum(a * b for a, b in zip(w, phi))

    def copy(self) -> "LinearScorer":
        return LinearScorer({k: list(v) for k, v in self.per_op_parameters.items()},
                            dict(self.training_report))


def warm_start_new_op(scorer: LinearScorer, op_name: str, body) -> LinearScorer:
    """Give a newly added operation the parameters of the outermost operation
    of its body.  Falls back to neutral (and says so in the report) when the
    body has no known outermost operation."""
    out = scorer.copy()
    root = body
    while isinstance(root, Lam):
        root = root.body
    while isinstance(root, Apply):
        root = root.fn
    src = root.name if isinstance(root, PrimRef) else None
    if src is not None and src in out.per_op_parameters:
        out.per_op_parameters[op_name] = list(out.per_op_parameters[src])
        out.training_report[op_name] = f"warm-started from {src}"
    else:
        out.training_report[op_name] = "warm start unavailable, neutral init"
    return out


# ---------------------------------------------------------------------------
# Trace generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceGenConfig:
    episode_timeout: float = 1000.0
    per_abstraction_bonus: float = 100.0
    max_weight: int = 15
    parallel_searches: int = 300
    episodes: int = 20
    targets_per_episode: int = 12
    max_negatives: int = 32
    examples_per_episode: int = 3
    random_seed: int = 0
    eval_limits: EvalLimits = EvalLimits()

    def effective_timeout(self, lib: DSLibrary) -> float:
        learned = sum(1 for op in lib.operations if op.is_learned)
        return self.episode_timeout + self.per_abstraction_bonus * learned


@dataclass(frozen=True)
class TraceEpisode:
    index: int
    task: Task  # inputs plus the replayed target's outputs
    target_term: str


@dataclass(frozen=True)
class TraceStep:
    episode: int
    op_name: str
    position: int
    positive: tuple  # feature vector
    negatives: tuple  # of feature vectors


@dataclass
class TraceDataset:
    library_version: int
    episodes: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def steps_per_op(self):
        counts = {}
        for s in self.steps:
            counts[s.op_name] = counts.get(s.op_name, 0) + 1
        return counts

    def merge(self, other: "TraceDataset") -> "TraceDataset":
        if other.library_version != self.library_version:
            raise ValueError("cannot merge traces across library versions")
        offset = len(self.episodes)
        eps = list(self.episodes)
        steps = list(self.steps)
        for ep in other.episodes:
            eps.append(replace(ep, index=ep.index + offset,
                               task=_rename_task(ep.task, ep.index + offset)))
        for s in other.steps:
            steps.append(replace(s, episode=s.episode + offset))
        return TraceDataset(self.library_version, eps, steps)


def _rename_task(task: Task, idx: int) -> Task:
    return Task(f"trace-{idx}", task.input_types, task.examples, task.solution)


_TEMPLATES = [
    (("xs", INT_LIST),),
    (("xs", INT_LIST), ("n", INT)),
    (("xs", INT_LIST), ("ys", INT_LIST)),
]


def _random_inputs(decls, rng: random.Random):
    out = {}
    for name, ty in decls:
        if ty == INT_LIST:
            out[name] = [rng.randint(-5, 9) for _ in range(rng.randint(3, 8))]
        elif ty == INT:
            out[name] = rng.randint(-3, 6)
        else:
            out[name] = rng.random() < 0.5
    return out


def _sig_outputs(entry):
    """Concrete per-example values from a value signature, or None if any
    example errored."""
    if not entry.signature or entry.signature[0] != "v":
        return None
    outs = []
    for out in entry.signature[1]:
        if out[0] == "i":
            outs.append(out[1])
        elif out[0] == "b":
            outs.append(out[1])
        elif out[0] == "l":
            outs.append(list(out[1]))
        else:
            return None
    return outs


def generate_traces(lib: DSLibrary, cfg: TraceGenConfig) -> TraceDataset:
    """Run seeded random episodes and replay reachable values as targets.

    Episodes are independent; results are merged in episode order, so the
    dataset is identical however the episodes are scheduled across workers
    (parallel_searches only caps how many run concurrently; the build here
    is sequential)."""
    from .lang import format_term

    data = TraceDataset(lib.version)
    _names, allowed = lib_placeholders(lib)
    timeout = cfg.effective_timeout(lib)
    per_episode = max(timeout / max(cfg.episodes, 1), 1e-9)
    for ep in range(cfg.episodes):
        rng = random.Random(cfg.random_seed * 1000003 + ep)
        decls = _TEMPLATES[ep % len(_TEMPLATES)]
        examples = tuple(
            (_random_inputs(decls, rng), 0)
            for _ in range(cfg.examples_per_episode))
        probe = Task(f"episode-{ep}", decls, examples)
        result = exhaustive_search(probe, lib, cfg.max_weight,
                                   timeout=per_episode,
                                   limits=cfg.eval_limits,
                                   stop_on_solve=False)
        store = result.store
        built = [e for e in store.entries
                 if e.provenance is not None and _sig_outputs(e) is not None]
        if not built:
            continue
        rng.shuffle(built)
        targets = built[:cfg.targets_per_episode]
        for target in targets:
            outs = _sig_outputs(target)
            task = Task(f"trace-{len(data.episodes)}", decls,
                        tuple((inp, out) for (inp, _), out
                              in zip(examples, outs)),
                        solution=format_term(target.term))
            ep_idx = len(data.episodes)
            data.episodes.append(
                TraceEpisode(ep_idx, task, format_term(target.term)))
            _emit_steps(data, ep_idx, target, store, lib, task, allowed, rng,
                        cfg.max_negatives)
    return data


def _emit_steps(data, ep_idx, entry, store, lib, task, allowed, rng,
                max_negatives):
    op_name, choices = entry.provenance
    op = lib.op(op_name)
    chosen = [store.entries[idx] for idx, _kind in choices]
    for pos, (pty, pick) in enumerate(zip(op.signature.params, chosen)):
        ctx = make_context(task, store, op, pos)
        prefix = tuple(chosen[:pos])
        positive = tuple(extract_features(op_name, prefix, pick, ctx))
        pool = [e for e in store.candidates_for(pty, allowed)
                if e.index != pick.index]
        if len(pool) > max_negatives:
            pool = rng.sample(pool, max_negatives)
        negatives = tuple(tuple(extract_features(op_name, prefix, e, ctx))
                          for e in pool)
        data.steps.append(TraceStep(ep_idx, op_name, pos, positive, negatives))
    for child in chosen:
        if child.provenance is not None:
            _emit_steps(data, ep_idx, child, store, lib, task, allowed, rng,
                        max_negatives)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

MIN_STEPS_PER_OP = 10


def train_scorer(data: TraceDataset, init: LinearScorer = None,
                 seed: int = 0, max_steps: int = 10000,
                 learning_rate: float = 0.5) -> LinearScorer:
    """Pairwise logistic ranking: each trace step contributes (positive,
    negative) feature pairs for its operation.  Deterministic for a fixed
    seed.  Operations seen in fewer than MIN_STEPS_PER_OP steps keep their
    initial parameters; the scorer's training_report says which."""
    init_params = init.per_op_parameters if init is not None else {}
    by_op = {}
    step_counts = {}
    for s in data.steps:
        step_counts[s.op_name] = step_counts.get(s.op_name, 0) + 1
        pairs = by_op.setdefault(s.op_name, [])
        for neg in s.negatives:
            pairs.append((s.positive, neg))
    params = {}
    report = {}
    for op_name in sorted(by_op):
        w = list(init_params.get(op_name, _zeros()))
        if step_counts[op_name] < MIN_STEPS_PER_OP:
            params[op_name] = w
            report[op_name] = (f"only {step_counts[op_name]} trace steps, "
                               "kept initial parameters")
            continue
        pairs = by_op[op_name]
        rng = random.Random(seed * 1000003 + zlib.crc32(op_name.encode()))
        n_updates = min(max_steps, 5 * len(pairs))
        for step in range(n_updates):
            pos, neg = pairs[rng.randrange(len(pairs))]
            margin = sum(a * (p - q) for a, p, q in zip(w, pos, neg))
            if margin > 30:
                continue
            g = 1.0 / (1.0 + math.exp(margin))  # sigmoid(-margin)
            lr = learning_rate / (1.0 + step / 2000.0)
            for i in range(FEATURE_DIM):
                w[i] += lr * g * (pos[i] - neg[i])
        params[op_name] = w
        report[op_name] = f"trained on {len(pairs)} pairs, {n_updates} updates"
    for op_name, w in init_params.items():
        if op_name not in params:
            params[op_name] = list(w)
    return LinearScorer(params, report)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_SCORER_FORMAT = "pbesynth-scorer 1"
_TRACE_FORMAT = "pbesynth-traces 1"


def save_scorer(scorer: LinearScorer, path) -> None:
    lines = [f"format: {_SCORER_FORMAT}", f"dim: {FEATURE_DIM}"]
    for op_name in sorted(scorer.per_op_parameters):
        vec = " ".join(repr(x) for x in scorer.per_op_parameters[op_name])
        lines.append(f"op {op_name} : {vec}")
    for op_name in sorted(scorer.training_report):
        lines.append(f"note {op_name} : {scorer.training_report[op_name]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scorer(path) -> LinearScorer:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != f"format: {_SCORER_FORMAT}":
        raise ValueError(f"not a scorer file: {path}")
    if lines[1] != f"dim: {FEATURE_DIM}":
        raise ValueError("scorer feature dimension mismatch")
    params = {}
    report = {}
    for ln in lines[2:]:
        if ln.startswith("op "):
            head, vec = ln[3:].split(":", 1)
            params[head.strip()] = [float(x) for x in vec.split()]
        elif ln.startswith("note "):
            head, note = ln[5:].split(":", 1)
            report[head.strip()] = note.strip()
        else:
            raise ValueError(f"malformed scorer line: {ln!r}")
    return LinearScorer(params, report)


def _fmt_vec(v):
    return ",".join(repr(x) for x in v)


def _parse_vec(text):
    return tuple(float(x) for x in text.split(",") if x)


def save_traces(data: TraceDataset, path) -> None:
    lines = [f"format: {_TRACE_FORMAT}",
             f"library-version: {data.library_version}",
             f"episodes: {len(data.episodes)}",
             f"steps: {len(data.steps)}"]
    for ep in data.episodes:
        t = ep.task
        decls = ",".join(f"{n}:{ty!r}" for n, ty in t.input_types)
        exs = ";".join(
            ",".join(f"{n}={format_value(inp[n])}" for n, _ in t.input_types)
            + "->" + format_value(out)
            for inp, out in t.examples)
        lines.append(f"episode {ep.index} | {decls} | {exs} | {ep.target_term}")
    for s in data.steps:
        negs = ";".join(_fmt_vec(n) for n in s.negatives)
        lines.append(f"step {s.episode} {s.op_name} {s.position} | "
                     f"{_fmt_vec(s.positive)} | {negs}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_traces(path) -> TraceDataset:
    from .lang import parse_type

    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != f"format: {_TRACE_FORMAT}":
        raise ValueError(f"not a trace file: {path}")
    version = int(lines[1].split(":", 1)[1])
    data = TraceDataset(version)
    for ln in lines[4:]:
        if ln.startswith("episode "):
            head, decls, exs, term = [p.strip() for p in ln.split("|")]
            idx = int(head.split()[1])
            input_types = []
            for d in _split_commas(decls):
                n, tytext = d.split(":", 1)
                input_types.append((n.strip(), parse_type(tytext)))
            examples = []
            for ex in exs.split(";"):
                left, right = ex.rsplit("->", 1)
                inputs = {}
                for b in _split_commas(left):
                    n, v = b.split("=", 1)
                    inputs[n.strip()] = parse_value(v)
                examples.append((inputs, parse_value(right)))
            task = Task(f"trace-{idx}", tuple(input_types), tuple(examples),
                        solution=term)
            data.episodes.append(TraceEpisode(idx, task, term))
        elif ln.startswith("step "):
            head, pos_text, neg_text = [p.strip() for p in ln.split("|")]
            _, ep, op_name, position = head.split()
            negs = tuple(_parse_vec(t) for t in neg_text.split(";") if t)
            data.steps.append(TraceStep(int(ep), op_name, int(position),
                                        _parse_vec(pos_text), negs))
        else:
            raise ValueError(f"malformed trace line: {ln!r}")
    return data

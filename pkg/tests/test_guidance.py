"""Scorer, trace generation, and training tests."""

import math

import pytest

from pbesynth.dsl import DSLibrary, default_list_dsl
from pbesynth.guidance import (
    FEATURE_DIM, LinearScorer, TraceDataset, TraceGenConfig, TraceStep,
    extract_features, generate_traces, load_scorer, load_traces, save_scorer,
    save_traces, train_scorer, warm_start_new_op,
)
from pbesynth.lang import INT, INT_LIST, EvalLimits, parse_term
from pbesynth.synthesis import init_store, make_context
from pbesynth.task import Task

FULL = default_list_dsl()
NAMES = set(FULL.op_names())
LIMITS = EvalLimits()

TASK = Task("t", (("xs", INT_LIST),),
            (({"xs": [1, 2, 3]}, [2, 3, 4]), ({"xs": [5]}, [6])))


def sub_dsl(*names):
    return DSLibrary([o for o in FULL.operations if o.name in names],
                     FULL.constants)


def _ctx_and_entries():
    lib = sub_dsl("Add", "Map")
    store = init_store(TASK, lib, LIMITS)
    ctx = make_context(TASK, store, lib.op("Add"), 0)
    return ctx, store.entries


# ---------------------------------------------------------------------------
# Features and scoring
# ---------------------------------------------------------------------------

def test_feature_vector_shape_and_bias():
    ctx, entries = _ctx_and_entries()
    for e in entries:
        phi = extract_features("Add", (), e, ctx)
        assert len(phi) == FEATURE_DIM
        assert phi[0] == 1.0
        assert all(isinstance(x, float) for x in phi)


def test_feature_type_onehot_and_weight():
    ctx, entries = _ctx_and_entries()
    one = next(e for e in entries if e.ty == INT and not e.free_vars)
    phi = extract_features("Add", (), one, ctx)
    assert phi[2] == 1.0 and phi[3] == 0.0 and phi[4] == 0.0
    assert phi[1] == min(one.weight, 10) / 10.0


def test_unknown_op_scores_zero():
    ctx, entries = _ctx_and_entries()
    s = LinearScorer({})
    assert s.score("Add", (), entries[0], ctx) == 0.0


def test_known_op_scores_dot_product():
    ctx, entries = _ctx_and_entries()
    w = [0.5] * FEATURE_DIM
    s = LinearScorer({"Add": w})
    e = entries[0]
    phi = extract_features("Add", (), e, ctx)
    assert s.score("Add", (), e, ctx) == pytest.approx(
        sum(a * b for a, b in zip(w, phi)))


def test_scorer_copy_is_independent():
    s = LinearScorer({"Add": [1.0] * FEATURE_DIM})
    c = s.copy()
    c.per_op_parameters["Add"][0] = 99.0
    assert s.per_op_parameters["Add"][0] == 1.0


def test_warm_start_copies_outermost_op_parameters():
    s = LinearScorer({"Map": [2.0] * FEATURE_DIM})
    body = parse_term("(lam (Map (lam (Add $0 1)) $0))", NAMES)
    out = warm_start_new_op(s, "fn_0", body)
    assert out.per_op_parameters["fn_0"] == [2.0] * FEATURE_DIM
    assert "warm-started from Map" in out.training_report["fn_0"]


def test_warm_start_falls_back_to_neutral():
    s = LinearScorer({})
    body = parse_term("(lam $0)", NAMES)
    out = warm_start_new_op(s, "fn_0", body)
    assert "fn_0" not in out.per_op_parameters
    assert "neutral" in out.training_report["fn_0"]


# ---------------------------------------------------------------------------
# Trace generation
# ---------------------------------------------------------------------------

SMALL_TRACE_CFG = TraceGenConfig(episode_timeout=20.0, per_abstraction_bonus=0,
                                 max_weight=4, episodes=3,
                                 targets_per_episode=4, max_negatives=8,
                                 random_seed=7)


def test_generate_traces_produces_episodes_and_steps():
    lib = sub_dsl("Add", "Subtract", "Head", "Reverse")
    data = generate_traces(lib, SMALL_TRACE_CFG)
    assert data.library_version == lib.version
    assert len(data.episodes) > 0
    assert len(data.steps) > 0
    for ep in data.episodes:
        # replayed target really produces the recorded outputs
        term = parse_term(ep.target_term, set(lib.op_names()))
        from pbesynth.lang import evaluate
        for inputs, out in ep.task.examples:
            assert evaluate(term, dict(inputs), LIMITS, lib.prims()) == out


def test_generate_traces_is_deterministic():
    lib = sub_dsl("Add", "Subtract", "Head", "Reverse")
    d1 = generate_traces(lib, SMALL_TRACE_CFG)
    d2 = generate_traces(lib, SMALL_TRACE_CFG)
    assert [e.target_term for e in d1.episodes] == \
        [e.target_term for e in d2.episodes]
    assert d1.steps == d2.steps


def test_trace_steps_reference_real_operations():
    lib = sub_dsl("Add", "Subtract", "Head", "Reverse")
    data = generate_traces(lib, SMALL_TRACE_CFG)
    for s in data.steps:
        assert lib.has_op(s.op_name)
        assert len(s.positive) == FEATURE_DIM
        assert all(len(n) == FEATURE_DIM for n in s.negatives)
        assert len(s.negatives) <= SMALL_TRACE_CFG.max_negatives


def test_merge_offsets_episodes_and_rejects_version_mismatch():
    lib = sub_dsl("Add", "Head")
    d1 = generate_traces(lib, SMALL_TRACE_CFG)
    d2 = generate_traces(lib, SMALL_TRACE_CFG)
    merged = d1.merge(d2)
    assert len(merged.episodes) == 2 * len(d1.episodes)
    assert len(merged.steps) == 2 * len(d1.steps)
    indices = [e.index for e in merged.episodes]
    assert indices == list(range(len(indices)))
    with pytest.raises(ValueError):
        d1.merge(TraceDataset(d1.library_version + 1))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _rigged_dataset(n_steps=40):
    """Positives carry a 1.0 in the exact-output-match slot, negatives 0.0."""
    pos = [0.0] * FEATURE_DIM
    pos[0] = 1.0
    pos[6] = 1.0
    neg = [0.0] * FEATURE_DIM
    neg[0] = 1.0
    data = TraceDataset(1)
    for i in range(n_steps):
        data.steps.append(TraceStep(0, "Add", 0, tuple(pos),
                                    (tuple(neg), tuple(neg))))
    return data


def test_training_learns_rigged_preference():
    trained = train_scorer(_rigged_dataset(), seed=3, max_steps=2000)
    w = trained.per_op_parameters["Add"]
    pos = [0.0] * FEATURE_DIM
    pos[0] = 1.0
    pos[6] = 1.0
    neg = [0.0] * FEATURE_DIM
    neg[0] = 1.0
    s_pos = sum(a * b for a, b in zip(w, pos))
    s_neg = sum(a * b for a, b in zip(w, neg))
    assert s_pos > s_neg


def test_training_is_deterministic():
    lib = sub_dsl("Add", "Subtract", "Head", "Reverse")
    data = generate_traces(lib, SMALL_TRACE_CFG)
    s1 = train_scorer(data, seed=5, max_steps=500)
    s2 = train_scorer(data, seed=5, max_steps=500)
    assert s1.per_op_parameters == s2.per_op_parameters


def test_training_ranks_positives_highly_on_training_steps():
    lib = sub_dsl("Add", "Subtract", "Head", "Reverse")
    data = generate_traces(lib, SMALL_TRACE_CFG)
    trained = train_scorer(data, seed=0, max_steps=4000)
    wins = total = 0
    for s in data.steps:
        w = trained.per_op_parameters.get(s.op_name)
        if w is None or not s.negatives:
            continue
        sp = sum(a * b for a, b in zip(w, s.positive))
        for n in s.negatives:
            total += 1
            if sp >= sum(a * b for a, b in zip(w, n)):
                wins += 1
    assert total > 0
    assert wins / total >= 0.7


def test_sparse_ops_keep_initial_parameters():
    data = TraceDataset(1)
    pos = tuple([1.0] + [0.0] * (FEATURE_DIM - 1))
    neg = tuple([0.0] * FEATURE_DIM)
    for i in range(3):  # below MIN_STEPS_PER_OP
        data.steps.append(TraceStep(0, "Rare", 0, pos, (neg,)))
    init = LinearScorer({"Rare": [7.0] * FEATURE_DIM})
    out = train_scorer(data, init=init)
    assert out.per_op_parameters["Rare"] == [7.0] * FEATURE_DIM
    assert "kept initial parameters" in out.training_report["Rare"]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def test_scorer_save_load_round_trip(tmp_path):
    s = LinearScorer({"Add": [0.25, -1.5] + [0.0] * (FEATURE_DIM - 2),
                      "Map": [math.pi] * FEATURE_DIM},
                     {"Add": "trained on 12 pairs"})
    path = tmp_path / "scorer.txt"
    save_scorer(s, path)
    back = load_scorer(path)
    assert back.per_op_parameters == s.per_op_parameters
    assert back.training_report == s.training_report


def test_load_scorer_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a scorer\n")
    with pytest.raises(ValueError):
        load_scorer(path)


def test_traces_save_load_round_trip(tmp_path):
    lib = sub_dsl("Add", "Subtract", "Head", "Reverse")
    data = generate_traces(lib, SMALL_TRACE_CFG)
    path = tmp_path / "traces.txt"
    save_traces(data, path)
    back = load_traces(path)
    assert back.library_version == data.library_version
    assert len(back.episodes) == len(data.episodes)
    assert [e.target_term for e in back.episodes] == \
        [e.target_term for e in data.episodes]
    assert [tuple(s.positive) for s in back.steps] == \
        [tuple(s.positive) for s in data.steps]
    assert [s.negatives for s in back.steps] == \
        [s.negatives for s in data.steps]

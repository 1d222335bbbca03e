"""Smoke tests for the _cifsimul extension module."""

import json
import math

import pytest

import _cifsimul as cs


def test_integrate_and_fire_reference_example():
    trace = cs.integrate_and_fire([[1.0], [2.0], [3.0]], [0.6, 0.7, 0.9])
    assert trace.fire_frames() == [2, 3]
    assert trace.firings[0].embedding[0] == pytest.approx(0.6 + 0.4 * 2)
    assert trace.firings[1].embedding[0] == pytest.approx(0.3 * 2 + 0.7 * 3)
    assert not trace.firings[1].is_tail


def test_scale_weights_and_expected_delays():
    scaled = cs.scale_weights([0.6, 0.7, 0.9], 2)
    assert sum(scaled) == pytest.approx(2.0)
    delays = cs.expected_delays([0.6, 0.7, 0.9], 2)
    assert delays == pytest.approx([1.4, 2.7])


def test_custom_config():
    cfg = cs.CifConfig()
    cfg.beta = 2.0
    cfg.tail_threshold = 1.0
    trace = cs.integrate_and_fire([[1.0], [1.0]], [1.5, 0.5], cfg)
    assert len(trace.firings) == 1


def test_ctc_loss_uniform_fixture():
    row = [math.log(1.0 / 3.0)] * 3
    assert cs.ctc_loss([row, row], [0]) == pytest.approx(math.log(3.0))


def test_ctc_forced_alignment():
    # Frames strongly favoring (blank, token 0, blank).
    hi, lo = math.log(0.9), math.log(0.05)
    grid = [[lo, lo, hi], [hi, lo, lo], [lo, lo, hi]]
    labels, boundaries = cs.ctc_forced_alignment(grid, [0])
    assert labels == [0, 1, 0]
    assert boundaries == [(2, 1)]


def test_losses():
    assert cs.quantity_loss_seq([0.4, 0.5, 0.3, 0.4, 0.6], 2) == pytest.approx(0.04)
    assert cs.quantity_loss_token(
        [0.4, 0.5, 0.3, 0.4, 0.6, 0.2], [(3, 1), (5, 2)], 2
    ) == pytest.approx(0.04)
    assert cs.dal_latency_loss([1.4, 2.7], 3.0, 2) == pytest.approx(1.4)


def test_metrics_fixture():
    assert cs.average_proportion([56.0, 108.0], 120.0, 2) == pytest.approx(164 / 240)
    assert cs.average_lagging([56.0, 108.0], 120.0, 2) == pytest.approx(52.0)
    assert cs.dal_metric([56.0, 108.0], 120.0, 2) == pytest.approx(56.0)


def test_streaming_policy_and_trace_evaluation():
    frames = [[1.0, 0.0]] * 3
    trace_jsonl, fire_frames = cs.run_cif_policy_scripted(
        frames, [0.6, 0.7, 0.9], [4, 5], 8, cs.CifConfig(), 1, 0
    )
    assert fire_frames == [2, 3]
    report = cs.evaluate_trace_jsonl(trace_jsonl)
    assert report["target_len"] == 2
    assert report["dal_ms"] > 0


def test_synth_corpus_deterministic():
    cfg = json.dumps({"n_utts": 3, "seed": 7})
    a = cs.synth_corpus_json(cfg)
    assert a == cs.synth_corpus_json(cfg)
    corpus = json.loads(a)
    assert len(corpus["utterances"]) == 3


def test_misc():
    assert cs.gelu(2.0) == pytest.approx(1.9545, abs=1e-4)
    mask = cs.ila_mask(3)
    assert mask[0] == [True, False, False]
    assert mask[2] == [True, True, True]


def test_errors_are_raised():
    with pytest.raises(ValueError):
        cs.integrate_and_fire([[1.0]], [0.5, 0.5])  # length mismatch
    with pytest.raises(ValueError):
        cs.scale_weights([0.0, 0.0], 2)

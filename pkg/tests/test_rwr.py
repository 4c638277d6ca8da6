import json
import math

import numpy as np
import pytest

from wfopt.errors import DivergedLoss, IoFailure, TooFewSamples, ValidationError
from wfopt.rwr import Batch, ToyPolicy, load_rlao_dataset, make_batch, rwr_grad, rwr_loss, train_toy


def record(context, target, weight, reward=1.0):
    return {
        "trajectory_id": "t.w000.t1.k0",
        "turn": 1,
        "context": context,
        "target": target,
        "reward": reward,
        "weight": weight,
        "meta": {},
    }


def same_bucket_pair(buckets=16):
    """Two contexts that hash into the same bucket."""
    base = "context-0"
    batch = make_batch([record(base, "a", 1.0)], buckets)
    anchor = batch.bucket_ids[0]
    i = 1
    while True:
        candidate = f"context-{i}"
        if make_batch([record(candidate, "a", 1.0)], buckets).bucket_ids[0] == anchor:
            return base, candidate
        i += 1


# --- dataset loading ---------------------------------------------------------


def write_dataset(path, header, records):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for r in records:
            fh.write(json.dumps(r) + "\n")


def test_load_rlao_dataset_round_trip(tmp_path):
    path = tmp_path / "data.jsonl"
    header = {"schema_version": 1, "tau": 0.4, "counts": {"records": 2}}
    rows = [record("c1", "t1", 12.18), record("c2", "t2", 1.0)]
    write_dataset(path, header, rows)
    got_header, got_rows = load_rlao_dataset(str(path))
    assert got_header == header and got_rows == rows


def test_load_rlao_dataset_errors(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(TooFewSamples):
        load_rlao_dataset(str(empty))

    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"schema_version": 1, "tau": 0.4}\nnot json\n', encoding="utf-8")
    with pytest.raises(IoFailure):
        load_rlao_dataset(str(broken))

    headerless = tmp_path / "headerless.jsonl"
    headerless.write_text('{"rows": 3}\n', encoding="utf-8")
    with pytest.raises(ValidationError):
        load_rlao_dataset(str(headerless))

    with pytest.raises(IoFailure):
        load_rlao_dataset(str(tmp_path / "missing.jsonl"))


# --- batching ---------------------------------------------------------------


def test_make_batch_indexes_templates_first_seen():
    rows = [
        record("c1", "alpha", 2.0),
        record("c2", "beta", 1.0),
        record("c3", "alpha", 3.0),
    ]
    batch = make_batch(rows)
    assert batch.templates == ["alpha", "beta"]
    assert batch.target_ids.tolist() == [0, 1, 0]
    assert batch.weights.tolist() == [2.0, 1.0, 3.0]
    assert all(0 <= b < 16 for b in batch.bucket_ids)


def test_bucketing_is_deterministic():
    rows = [record("same context", "t", 1.0)] * 3
    batch = make_batch(rows)
    assert len(set(batch.bucket_ids.tolist())) == 1


# --- objective and gradient ---------------------------------------------------


def test_loss_matches_hand_computation():
    # Uniform initial policy over 2 templates: p = 0.5 everywhere, so
    # loss = -(1/N) sum w_i * log 0.5.
    rows = [record("c1", "a", 2.0), record("c2", "b", 4.0)]
    batch = make_batch(rows)
    policy = ToyPolicy(2)
    expected = -(2.0 * math.log(0.5) + 4.0 * math.log(0.5)) / 2
    assert rwr_loss(policy, batch) == pytest.approx(expected, rel=1e-12)


def test_loss_on_empty_batch_is_zero():
    batch = Batch(
        bucket_ids=np.zeros(0, dtype=np.int64),
        target_ids=np.zeros(0, dtype=np.int64),
        weights=np.zeros(0),
        templates=["a"],
    )
    policy = ToyPolicy(1)
    assert rwr_loss(policy, batch) == 0.0
    assert not rwr_grad(policy, batch).any()


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    rows = [
        record(f"ctx{i}", f"tpl{rng.integers(0, 4)}", float(rng.uniform(0.5, 12.0)))
        for i in range(20)
    ]
    batch = make_batch(rows, buckets=8)
    policy = ToyPolicy(len(batch.templates), buckets=8)
    policy.theta = rng.normal(0, 0.5, size=policy.theta.shape)

    analytic = rwr_grad(policy, batch)
    eps = 1e-6
    for _ in range(25):
        b = rng.integers(0, policy.theta.shape[0])
        t = rng.integers(0, policy.theta.shape[1])
        policy.theta[b, t] += eps
        up = rwr_loss(policy, batch)
        policy.theta[b, t] -= 2 * eps
        down = rwr_loss(policy, batch)
        policy.theta[b, t] += eps
        fd = (up - down) / (2 * eps)
        assert analytic[b, t] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_policy_rejects_empty_library():
    with pytest.raises(ValidationError):
        ToyPolicy(0)


def test_probs_rows_are_distributions():
    policy = ToyPolicy(5, buckets=4)
    policy.theta = np.random.default_rng(0).normal(0, 3, size=(4, 5))
    probs = policy.probs()
    assert probs.shape == (4, 5)
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert (probs > 0).all()


# --- training ----------------------------------------------------------------


def test_training_prefers_heavier_target():
    # Two targets competing in one bucket; the exp(1/0.4)-weighted one must
    # end up strictly more probable than the unit-weighted one.
    c1, c2 = same_bucket_pair()
    heavy = math.exp(1.0 / 0.4)
    rows = [record(c1, "winner", heavy), record(c2, "loser", 1.0)]
    policy, batch, losses = train_toy(rows)
    bucket = batch.bucket_ids[0]
    probs = policy.probs()[bucket]
    assert probs[batch.templates.index("winner")] > probs[batch.templates.index("loser")]
    assert losses[-1] < losses[0]


def test_training_loss_is_monotone_here():
    rows = [record(f"c{i}", f"t{i % 3}", 1.0 + i) for i in range(9)]
    _, _, losses = train_toy(rows, steps=50)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_diverges_with_absurd_lr():
    # Unequal weights give a nonzero gradient; a huge step then crushes the
    # light target's probability and the weighted NLL explodes.
    c1, c2 = same_bucket_pair()
    rows = [record(c1, "a", 60.0), record(c2, "b", 1.0)]
    with pytest.raises(DivergedLoss):
        train_toy(rows, lr=1e6, steps=50)


def test_training_rejects_empty():
    with pytest.raises(TooFewSamples):
        train_toy([])

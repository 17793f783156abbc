import dataclasses

import numpy as np
import pytest

from fedlayers.autodiff.rng import RngStream
from fedlayers.data.types import AlignmentError
from fedlayers.federation import (
    AggregationError,
    ClientTrainingError,
    FederationConfigError,
    FederationPlan,
    aggregate,
    apply_update,
    make_batches,
    make_client,
    run_baseline,
    run_batch_aligned_fedavg,
    run_gl,
    train_step,
)
from fedlayers.model import ModelConfig, checkpoint_bytes

from conftest import TINY, synthetic_client

CFG = ModelConfig(**TINY)


def plan(**kw):
    base = dict(rounds=2, batches=3, seed=0, lr=1e-2)
    base.update(kw)
    return FederationPlan(**base)


def three_clients():
    return [synthetic_client("a", 4, 2, 21, seed=1), synthetic_client("b", 3, 3, 30, seed=2),
            synthetic_client("c", 5, 2, 12, seed=3)]


# -- batching -------------------------------------------------------------
@pytest.mark.parametrize("n,b,sizes", [(10, 10, [1] * 10), (180, 15, [12] * 15), (11, 3, [4, 4, 3])])
def test_make_batches_sizes(n, b, sizes):
    client = make_client(synthetic_client("x", 2, 2, n), CFG, plan(batches=b))
    batches = make_batches(client, b, epoch=0)
    assert [len(x) for x in batches] == sizes
    assert sorted(np.concatenate(batches).tolist()) == list(range(n))


def test_make_batches_deterministic_and_reshuffled():
    client = make_client(synthetic_client("x", 2, 2, 20), CFG, plan())
    e0 = np.concatenate(make_batches(client, 4, 0))
    assert np.array_equal(e0, np.concatenate(make_batches(client, 4, 0)))
    assert not np.array_equal(e0, np.concatenate(make_batches(client, 4, 1)))


def test_make_batches_too_few_rows():
    client = make_client(synthetic_client("x", 2, 2, 5), CFG, plan())
    with pytest.raises(FederationConfigError, match="5 rows"):
        make_batches(client, 6, 0)


# -- aggregation ----------------------------------------------------------
def test_aggregate_uniform_mean():
    out = aggregate([[np.array([1.0, 2.0])], [np.array([5.0, 5.0])]], [0.5, 0.5])
    assert out[0].tolist() == [3.0, 3.5]


def test_aggregate_scalar_examples():
    two, four = [np.array(2.0)], [np.array(4.0)]
    assert aggregate([two, four], [0.5, 0.5])[0] == 3.0
    # sample-weighted with n = (1, 3)
    assert aggregate([two, four], [0.25, 0.75])[0] == 3.5


def test_sample_weights_from_train_counts():
    from fedlayers.federation import aggregation_weights

    clients = [make_client(synthetic_client(c, 2, 2, n), CFG, plan()) for c, n in (("a", 10), ("b", 30))]
    assert aggregation_weights(clients, "sample") == [0.25, 0.75]
    assert aggregation_weights(clients, "uniform") == [0.5, 0.5]


def test_aggregate_three_clients_matches_loop(rng):
    sets = [[rng.normal(size=(3, 2)), rng.normal(size=4)] for _ in range(3)]
    out = aggregate(sets, [1 / 3] * 3)
    for j in range(2):
        expected = np.zeros_like(sets[0][j])
        for s in sets:
            expected = expected + s[j] / 3
        np.testing.assert_allclose(out[j], expected, atol=1e-15)


def test_aggregate_single_client_is_copy():
    a = np.array([1.0, 2.0])
    out = aggregate([[a]], [1.0])
    assert out[0].tolist() == [1.0, 2.0] and out[0] is not a


def test_aggregate_shape_mismatch_names_client():
    with pytest.raises(AggregationError, match="'b'.*'w'"):
        aggregate([[np.zeros(2)], [np.zeros(3)]], [0.5, 0.5], ["a", "b"], ["w"])


def test_aggregate_count_mismatch():
    with pytest.raises(AggregationError):
        aggregate([[np.zeros(2)], []], [0.5, 0.5])


def _state_with_global(value):
    c = make_client(synthetic_client("x", 2), CFG, plan())
    for _, p in c.partition.global_:
        p.data[...] = value
    return c


@pytest.mark.parametrize("eta,start,expected", [(1.0, 2.0, 4.0), (0.0, 2.0, 2.0), (0.5, 2.0, 3.0),
                                                (0.25, 2.0, 2.5), (0.5, 0.0, 1.0)])
def test_apply_update(eta, start, expected):
    c = _state_with_global(start)
    target = 2.0 if start == 0.0 else 4.0
    apply_update(c, [np.full(p.shape, target) for _, p in c.partition.global_], eta)
    assert all(np.all(p.data == expected) for _, p in c.partition.global_)


def test_plan_validation():
    with pytest.raises(FederationConfigError):
        plan(eta=1.5)
    with pytest.raises(FederationConfigError):
        plan(aggregation="median")
    with pytest.raises(FederationConfigError):
        plan(rounds=0)


# -- regimes --------------------------------------------------------------
def test_single_client_gl_equals_local_bitwise():
    d = synthetic_client("solo", 4, 3, 24)
    _, gl = run_gl([d], CFG, plan(eta=1.0))
    _, local = run_baseline("local", [d], CFG, plan())
    assert checkpoint_bytes(gl[0].model) == checkpoint_bytes(local[0].model)


def test_eta_zero_equals_independent_local_runs():
    data = three_clients()
    _, gl = run_gl(data, CFG, plan(eta=0.0))
    for d, state in zip(data, sorted(gl, key=lambda s: s.client_id)):
        _, alone = run_baseline("local", [d], CFG, plan())
        assert checkpoint_bytes(state.model) == checkpoint_bytes(alone[0].model)


def test_eta_one_keeps_global_layers_identical():
    _, states = run_gl(three_clients(), CFG, plan(eta=1.0))
    ref = states[0].partition.global_arrays()
    for s in states[1:]:
        assert all(a.tobytes() == b.tobytes() for a, b in zip(ref, s.partition.global_arrays()))
    # private layers still diverge
    assert states[0].model.head.weight.shape != states[1].model.head.weight.shape


@pytest.mark.parametrize("shape", [dict(rounds=1, d=(2, 2), n=(20, 20), c=(2, 2)),
                                   dict(rounds=2, d=(3, 5), n=(10, 13), c=(2, 3))])
def test_two_client_scripted_oracle(shape):
    """Straight-line replay of the schedule with explicit averaging."""
    data = [synthetic_client("p", shape["d"][0], shape["c"][0], shape["n"][0], seed=4),
            synthetic_client("q", shape["d"][1], shape["c"][1], shape["n"][1], seed=5)]
    p = plan(rounds=shape["rounds"], batches=2, eta=0.7)
    _, fed = run_gl(data, CFG, p)

    a, b = (make_client(d, CFG, p) for d in data)
    for epoch in range(shape["rounds"]):
        sa, sb = make_batches(a, 2, epoch), make_batches(b, 2, epoch)
        for k in range(2):
            train_step(a, sa[k])
            train_step(b, sb[k])
            for (_, pa), (_, pb) in zip(a.partition.global_, b.partition.global_):
                mean = 0.5 * pa.data + 0.5 * pb.data
                pa.data[...] = 0.7 * mean + (1 - 0.7) * pa.data
                pb.data[...] = 0.7 * mean + (1 - 0.7) * pb.data
    for mine, theirs in zip((a, b), fed):
        for (n, x), (_, y) in zip(mine.model.named_parameters(), theirs.model.named_parameters()):
            np.testing.assert_allclose(x.data, y.data, atol=1e-12, rtol=0, err_msg=n)


def test_round_log_counts():
    data = three_clients()
    rlog, _ = run_gl(data, CFG, plan(rounds=3, batches=4, val_metrics=("auroc",)))
    assert len(rlog.train) == 3 * 4 * 3
    assert rlog.steps_per_client() == {"a": 12, "b": 12, "c": 12}
    assert len(rlog.wall_clock) == 3
    assert {(e, c) for e, c, *_ in rlog.val} == {(e, c) for e in range(3) for c in "abc"}
    assert rlog.train_csv().splitlines()[0] == "epoch,batch,client_id,train_loss"
    assert len(rlog.train_csv().splitlines()) == 37


def test_thread_count_does_not_change_results(monkeypatch):
    def run(workers):
        _, states = run_gl(three_clients(), CFG, plan(workers=workers))
        return [checkpoint_bytes(s.model) for s in states]

    assert run(1) == run(3)
    monkeypatch.setenv("FEDLAYERS_THREADS", "2")
    assert run(0) == run(1)


def test_client_order_does_not_matter():
    data = three_clients()
    _, fwd = run_gl(data, CFG, plan())
    _, rev = run_gl(data[::-1], CFG, plan())
    key = lambda s: s.client_id  # noqa: E731
    for x, y in zip(sorted(fwd, key=key), sorted(rev, key=key)):
        assert checkpoint_bytes(x.model) == checkpoint_bytes(y.model)


def test_training_improves_fit():
    d = synthetic_client("solo", 3, 2, 40, seed=9)
    before = make_client(d, CFG, plan()).model.loss(d.X_train, d.y_train).item()
    _, st = run_baseline("local", [d], CFG, plan(rounds=15, batches=2))
    st[0].model.eval()
    assert st[0].model.loss(d.X_train, d.y_train).item() < before


def test_fedavg_full_requires_alignment():
    with pytest.raises(AlignmentError):
        run_baseline("fedavg_full", three_clients()[:2], CFG, plan())


def test_local_equals_empty_selector_run():
    d = synthetic_client("solo", 3, 2, 20)
    _, local = run_baseline("local", [d], CFG, plan())
    empty = make_client(d, CFG, plan(selector=set()))
    run_batch_aligned_fedavg([empty], plan(selector=set()))
    assert checkpoint_bytes(local[0].model) == checkpoint_bytes(empty.model)


def test_fedavg_full_federates_everything():
    base = synthetic_client("a", 3, 2, 20, seed=1)
    other = dataclasses.replace(synthetic_client("b", 3, 2, 10, seed=2), schema=base.schema)
    _, states = run_baseline("fedavg_full", [base, other], CFG, plan())
    assert not states[0].partition.private
    assert sum(p.data.size for _, p in states[0].partition.global_) == \
        sum(p.data.size for p in states[0].model.parameters())
    for (_, x), (_, y) in zip(states[0].model.named_parameters(), states[1].model.named_parameters()):
        assert np.array_equal(x.data, y.data)


def test_client_failure_is_reported_with_context():
    bad = synthetic_client("bad", 3, 2, 6)
    bad = dataclasses.replace(bad, y_train=np.full(6, 7))
    with pytest.raises(ClientTrainingError, match="client 'bad'"):
        run_gl([bad], CFG, plan(batches=2))


def test_mismatched_global_lists_rejected():
    data = three_clients()
    a = make_client(data[0], CFG, plan())
    b = make_client(data[1], CFG, plan(selector={"gff1"}))
    with pytest.raises(FederationConfigError):
        run_batch_aligned_fedavg([a, b], plan())


def test_shuffle_streams_differ_per_client():
    s1 = RngStream(0, "shuffle", "a").child("epoch0").permutation(50)
    s2 = RngStream(0, "shuffle", "b").child("epoch0").permutation(50)
    assert not np.array_equal(s1, s2)

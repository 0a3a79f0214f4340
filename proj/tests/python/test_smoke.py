import math

import pytest

import attrishield as ag


@pytest.fixture(scope="module")
def dataset():
    return ag.synth_generate(d=20, m=3, n=240, sparsity=4.0, signal=0.8, seed=7)


@pytest.fixture(scope="module")
def model(dataset):
    return ag.train_linear(dataset, epochs=60, batch_size=32,
                           learning_rate=0.5, l2_penalty=1e-4, seed=3)


def test_dataset_roundtrip(dataset, tmp_path):
    assert len(dataset) == 240
    assert dataset.d == 20 and dataset.m == 3
    assert all(0 <= s < 3 for s in dataset.labels())

    path = str(tmp_path / "ds.jsonl")
    ag.save_dataset(dataset, path)
    loaded = ag.load_dataset(path)
    loaded.validate()
    assert loaded.to_jsonl() == dataset.to_jsonl()

    a, b = ag.split_overlap(dataset, alpha_pct=0.0, seed=31)
    ids_a = {a.user_id(i) for i in range(len(a))}
    ids_b = {b.user_id(i) for i in range(len(b))}
    assert len(a) == len(b) == 120
    assert not ids_a & ids_b


def test_train_predict_accuracy(dataset, model):
    acc = ag.accuracy(model, dataset)
    popular = ag.baseline_most_popular(dataset.labels())
    base = sum(1 for s in dataset.labels() if s == popular) / len(dataset)
    assert acc > max(0.6, base)

    scores = model.decision_scores(dataset.features(0))
    assert len(scores) == 3
    assert math.isclose(sum(scores), 1.0, abs_tol=1e-9)
    assert model.predict(dataset.features(0)) in range(3)


def test_model_file_roundtrip(model, dataset, tmp_path):
    path = str(tmp_path / "model.json")
    ag.save_model(model, path)
    loaded = ag.load_model(path)
    x = dataset.features(5)
    assert loaded.predict(x) == model.predict(x)
    assert loaded.logits(x) == model.logits(x)


def test_evasion_reaches_target(dataset, model):
    x = dataset.features(0)
    current = model.predict(x)
    target = (current + 1) % 3
    res = ag.panda(model, x, target)
    assert res.success
    assert res.l0_cost == ag.l0_norm(res.noise)
    defended = ag.apply_noise(x, res.noise, dataset.grid)
    assert model.predict(defended) == target

    all_noises = ag.find_all_noises(model, x, ag.NoiseTypePolicy.ModifyAdd)
    assert len(all_noises) == 3
    assert all_noises[current].l0_cost == 0


def test_mechanism_solver_properties():
    p = ag.target_uniform(4)
    costs = [0.0, 1.0, 3.0, 6.0]
    dist, report = ag.solve_mechanism(p, costs, beta=1.0)
    assert math.isclose(sum(dist.probs), 1.0, abs_tol=1e-9)
    expected = sum(q * c for q, c in zip(dist.probs, costs))
    assert expected <= 1.0 + 1e-8
    assert report.binding and report.mu0 > 0

    slack_dist, slack_report = ag.solve_mechanism(p, costs, beta=100.0)
    assert not slack_report.binding
    assert slack_dist.probs == pytest.approx(p.p, abs=1e-12)
    assert ag.kl_divergence(p.p, slack_dist.probs) == pytest.approx(0.0)


def test_defense_is_deterministic_and_reduces_accuracy(dataset, model):
    p = ag.target_uniform(3)
    noises = ag.phase_one(model, dataset, ag.NoiseTypePolicy.ModifyAdd,
                          ag.PandaConfig(), threads=2)
    open_set = ag.defend_dataset(dataset, noises, p, beta=0.0, seed=11)
    defended = ag.defend_dataset(dataset, noises, p, beta=8.0, seed=11)
    again = ag.defend_dataset(dataset, noises, p, beta=8.0, seed=11, threads=4)

    rows = [defended.data.features(i) for i in range(len(defended.data))]
    assert rows == [again.data.features(i) for i in range(len(again.data))]
    assert defended.mean_l0 > 0

    acc_clear = ag.run_attack(model, open_set.data)
    acc_defended = ag.run_attack(model, defended.data)
    assert acc_defended < acc_clear - 0.2


def test_rr_defend_stays_on_grid(dataset):
    x = dataset.features(1)
    noisy = ag.rr_defend(x, epsilon=1.0, seed=5, grid=dataset.grid)
    assert len(noisy) == len(x)
    assert all(dataset.grid.contains(v) for v in noisy)


def test_game_lp_endpoints():
    joint = ag.JointDistribution([[0.4, 0.1], [0.1, 0.4]])
    f, objective = ag.solve_game_lp(joint, beta=0.0)
    assert f.f == [[1.0, 0.0], [0.0, 1.0]]
    assert objective == pytest.approx(0.8, abs=1e-9)

    _, relaxed = ag.solve_game_lp(joint, beta=2.0)
    assert relaxed == pytest.approx(max(joint.marginal_s()), abs=1e-9)
    _, brute = ag.brute_force_game(joint, beta=0.0, step=0.25)
    assert brute >= objective - 1e-12


def test_recommender_metrics(dataset):
    assert ag.relative_precision_loss(0.4, 0.3) == pytest.approx(0.25)
    assert ag.relative_precision_loss(0.4, 0.4) == 0.0

    holdout = ag.sample_holdout(dataset, per_user=2, seed=9)
    mf = ag.mf_train(dataset, rank=4, epochs=40, learning_rate=0.05,
                     l2_penalty=1e-3, seed=13, exclude=holdout)
    precision = ag.mf_topn_precision(mf, dataset, holdout, topn=5)
    assert 0.0 <= precision <= 1.0

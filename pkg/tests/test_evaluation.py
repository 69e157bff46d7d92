import csv

import numpy as np
import pytest

from conceptmem.data import SyntheticSpec, make_orthogonal_oracle, make_synthetic
from conceptmem.embedder import EmbedderConfig
from conceptmem.errors import ContractError
from conceptmem.evaluation import (
    f1,
    format_mann_table,
    format_nway_table,
    mann_eval,
    nway_kshot_eval,
    tradeoff_experiment,
    write_fewzero_csv,
    write_mann_csv,
    write_nway_csv,
    write_tradeoff_csv,
    zeroshot_eval,
)
from conceptmem.trainer import build_policy
from conftest import oracle_router_policy


# -- f1 -----------------------------------------------------------------------


def test_f1_reported_pairs():
    assert f1(0.684, 0.625) == pytest.approx(0.653, abs=0.0005)
    assert f1(0.364, 0.828) == pytest.approx(0.506, abs=0.0005)
    assert f1(0.049, 0.984) == pytest.approx(0.093, abs=0.0005)


def test_f1_properties():
    assert f1(0.3, 0.7) == f1(0.7, 0.3)
    assert f1(0.42, 0.42) == pytest.approx(0.42)
    assert f1(0.0, 0.9) == 0.0
    assert f1(0.0, 0.0) == 0.0
    for a, b in [(0.2, 0.9), (0.5, 0.5), (0.1, 0.3)]:
        assert f1(a, b) <= 2 * min(a, b) + 1e-12
    with pytest.raises(ContractError):
        f1(1.2, 0.5)
    with pytest.raises(ContractError):
        f1(0.5, -0.1)


# -- oracle evaluations ---------------------------------------------------------


def test_nway_oracle_exact():
    # identity embedder on orthogonal classes plus a label scorer that
    # clusters perfectly: the query's prototype is at distance 0
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=8)
    pol = oracle_router_policy(6)
    rep = nway_kshot_eval(pol, ds, n=5, k=1, n_episodes=60, seed=1)
    assert rep.accuracy == 1.0
    assert rep.episodes == 60
    rep2 = nway_kshot_eval(pol, ds, n=3, k=2, n_episodes=40, seed=2)
    assert rep2.accuracy == 1.0


def test_mann_oracle_every_shot_perfect():
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=20)
    pol = oracle_router_policy(6)
    rep = mann_eval(pol, ds, n_episodes=6, n_classes=4, length=30, seed=3)
    rep.check_bookkeeping()
    assert rep.shots()
    for shot in rep.shots():
        assert rep.accuracy(shot) == 1.0


def test_mann_single_class_dataset_every_prediction_correct():
    # one candidate class: any occupied slot carries the right label
    ds = make_orthogonal_oracle(n_classes=1, samples_per_class=60)
    cfg = EmbedderConfig(kind="identity", input_shape=(1,), hidden_size=1)
    pol = build_policy(cfg, seed=0)
    rep = mann_eval(pol, ds, n_episodes=5, n_classes=1, length=20,
                    slots_per_class=2, seed=3)
    rep.check_bookkeeping()
    assert rep.shots()
    for shot in rep.shots():
        assert rep.accuracy(shot) == 1.0


def test_mann_bookkeeping_counts():
    ds = make_synthetic(SyntheticSpec(n_classes=8, dim=4, center_scale=2.0,
                                      noise_sigma=1.0, samples_per_class=30), seed=4)
    cfg = EmbedderConfig(kind="identity", input_shape=(4,), hidden_size=4)
    pol = build_policy(cfg, seed=5)
    rep = mann_eval(pol, ds, n_episodes=12, n_classes=4, length=24, seed=6)
    rep.check_bookkeeping()
    counted = sum(rep.total.values())
    assert counted + rep.skipped == rep.steps
    assert rep.episodes == 12
    # first step of each episode has an empty memory
    assert rep.skipped >= 12


def test_zeroshot_oracle_geometry():
    # exact class vectors: first appearance is nearer the origin than any
    # other prototype, repeats sit on their own prototype
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=10)
    pol = oracle_router_policy(6)
    rep = zeroshot_eval(pol, ds, n_episodes=40, n_classes=4, length=10, seed=7)
    assert rep.zero_shot_accuracy == 1.0
    assert rep.one_shot_accuracy == 1.0
    assert rep.f1 == 1.0
    assert rep.zero_count == 40 * 4 or rep.zero_count > 0


def test_ci_shrinks_with_more_episodes():
    ds = make_synthetic(SyntheticSpec(n_classes=8, dim=4, center_scale=2.0,
                                      noise_sigma=1.0, samples_per_class=60), seed=8)
    cfg = EmbedderConfig(kind="identity", input_shape=(4,), hidden_size=4)
    pol = build_policy(cfg, seed=9)
    small = nway_kshot_eval(pol, ds, 3, 1, 50, seed=10)
    big = nway_kshot_eval(pol, ds, 3, 1, 400, seed=10)
    assert big.ci95 < small.ci95


# -- trade-off bookkeeping ------------------------------------------------------


def test_tradeoff_zero_episodes_degenerate():
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=12)
    pol = oracle_router_policy(6)
    series = tradeoff_experiment(pol, ds, finetune_episodes=0, interval=100,
                                 n_classes=3, length=6, eval_episodes=20, seed=11)
    assert len(series) == 1
    assert series[0]["episodes"] == 0


def test_tradeoff_series_length_and_mutation():
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=12)
    cfg = EmbedderConfig(kind="mlp", input_shape=(6,), hidden_size=4, widths=(4,))
    pol = build_policy(cfg, seed=12)
    before = pol.pset.params["embedder.fc1.w"].value.copy()
    series = tradeoff_experiment(pol, ds, finetune_episodes=64, interval=32,
                                 n_classes=2, length=4, eval_episodes=10,
                                 lr=1e-2, seed=13)
    assert [p["episodes"] for p in series] == [0, 32, 64]
    assert all(0.0 <= p["zero_shot"] <= 1.0 and 0.0 <= p["few_shot"] <= 1.0
               for p in series)
    assert not np.array_equal(pol.pset.params["embedder.fc1.w"].value, before)


def test_tradeoff_validates_interval():
    ds = make_orthogonal_oracle(n_classes=4, samples_per_class=8)
    with pytest.raises(ContractError):
        tradeoff_experiment(oracle_router_policy(4), ds, finetune_episodes=10, interval=0)


# -- emission -------------------------------------------------------------------


def test_csv_headers(tmp_path):
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=8)
    pol = oracle_router_policy(6)
    nrep = nway_kshot_eval(pol, ds, 5, 1, 10, seed=1)
    path = str(tmp_path / "nway.csv")
    write_nway_csv(path, [nrep])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["n", "k", "accuracy", "ci95", "episodes"]
    assert rows[1][0] == "5" and rows[1][4] == "10"

    mrep = mann_eval(pol, ds, 4, n_classes=3, length=9, seed=2)
    mpath = str(tmp_path / "mann.csv")
    write_mann_csv(mpath, mrep)
    rows = list(csv.reader(open(mpath)))
    assert rows[0] == ["shot", "accuracy", "ci95", "count"]

    zrep = zeroshot_eval(pol, ds, 5, n_classes=3, length=6, seed=3)
    zpath = str(tmp_path / "fz.csv")
    write_fewzero_csv(zpath, zrep)
    rows = list(csv.reader(open(zpath)))
    assert rows[0][0] == "zero_shot"

    tpath = str(tmp_path / "trade.csv")
    write_tradeoff_csv(tpath, [{"episodes": 0, "zero_shot": 0.25, "few_shot": 0.75}])
    rows = list(csv.reader(open(tpath)))
    assert rows[0] == ["zero_shot", "few_shot"]
    assert rows[1] == ["0.250000", "0.750000"]


def test_tables_render():
    ds = make_orthogonal_oracle(n_classes=6, samples_per_class=8)
    pol = oracle_router_policy(6)
    assert "1.0000" in format_nway_table(nway_kshot_eval(pol, ds, 5, 1, 10, seed=1))
    table = format_mann_table(mann_eval(pol, ds, 4, n_classes=3, length=9, seed=2))
    assert "shot" in table

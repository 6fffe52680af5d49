import json

import numpy as np
import pytest

import deglink


def small_config(**overrides):
    cfg = {
        "feature_dim": 8,
        "hidden_dim": 4,
        "embedding_dim": 8,
        "mapping_dim": 8,
        "epochs": 3,
        "lr": 0.01,
        "split": "ratio",
        "train_ratio": 0.5,
        "source_super_threshold": 12,
        "target_super_threshold": 12,
        "node2vec": {"walk_length": 10, "walks_per_node": 2, "epochs": 1},
    }
    cfg.update(overrides)
    return cfg


def test_graph_basics():
    g = deglink.Graph(4, [(0, 1), (1, 0), (1, 2), (2, 2)])
    assert g.num_nodes == 4
    assert g.num_edges == 2
    assert g.neighbors(1) == [0, 2]
    assert g.degrees() == [1, 2, 1, 0]
    assert deglink.Graph.parse(g.to_edge_list()) == g
    with pytest.raises(IndexError):
        g.neighbors(9)


def test_partition_labels():
    star = deglink.Graph(7, [(0, i) for i in range(1, 7)])
    p = deglink.partition(star, tail_threshold=2, super_threshold=5)
    assert p["classes"][0] == "super_head"
    assert set(p["classes"][1:]) == {"tail"}


def test_metrics():
    assert deglink.hits_at_k([1, 2, 7], 5) == pytest.approx(0.6)
    assert deglink.mrr([1, 2, 4]) == pytest.approx(7 / 12)
    targets = np.eye(3)
    assert deglink.rank_candidates([0.0, 1.0, 0.0], targets)[0] == 1
    assert deglink.rank_candidates([0.0, 1.0, 0.0], targets, exclude=[1]) == [0, 2]
    with pytest.raises(ValueError):
        deglink.mrr([])


def test_node2vec_shape():
    src, _, _ = deglink.synthetic_pair(n=40, seed=1)
    x = deglink.node2vec(src, dim=16, walk_length=10, walks_per_node=2, epochs=1)
    assert x.shape == (40, 16)
    assert np.isfinite(x).all()


def test_config_errors():
    assert deglink.normalize_config({})["lambda"] == pytest.approx(0.2)
    with pytest.raises(ValueError, match="lamda"):
        deglink.normalize_config({"lamda": 0.1})


def test_run_save_load(tmp_path):
    src, tgt, anchors = deglink.synthetic_pair(n=50, seed=2)
    assert len(anchors) == 50
    cfg = small_config(seed=2)
    inputs = deglink.prepare_inputs(cfg, src, tgt, anchors)
    assert inputs.source_features.shape == (50, 8)
    model, report = deglink.run_experiment(cfg, inputs)
    assert 0.0 < report["mrr"] <= 1.0
    assert sum(b["count"] for b in report["per_bucket_mrr"]) == report["num_test"]
    assert len(model.trace["loss"]) == 3

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    loaded = deglink.Model.load(path)
    a = model.parameters()
    b = loaded.parameters()
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(a[k], b[k])

    train, test = inputs.split(cfg)
    again = deglink.evaluate(loaded, inputs, train, test)
    assert json.dumps(again, sort_keys=True) == json.dumps(report, sort_keys=True)


def test_ablate_table():
    src, tgt, anchors = deglink.synthetic_pair(n=40, seed=3)
    cfg = small_config(seed=3, epochs=1)
    inputs = deglink.prepare_inputs(cfg, src, tgt, anchors)
    result = deglink.ablate(cfg, inputs)
    assert set(result) == {"full", "no_AP", "no_NR"}
    assert all(0.0 < r["mrr"] <= 1.0 for r in result.values())

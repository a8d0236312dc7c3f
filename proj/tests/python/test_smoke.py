#  Copyright (c) 2026 by Contributors
"""Smoke tests for the Python bindings."""

import json
import math
import pathlib

import pytest

import kgt


def test_version_and_types():
    assert kgt.__version__
    assert kgt.query_types() == ["1p", "2p", "3p", "2i", "3i", "ip", "pi", "2u", "up"]


def test_levi_counts():
    assert kgt.levi_counts([(0, 0, 1)]) == (3, 2)
    assert kgt.levi_counts([(0, 0, 1), (1, 1, 2)]) == (5, 4)


def test_ground_answers():
    triples = [(0, 0, 1), (1, 1, 2), (0, 0, 3), (3, 1, 4)]
    assert kgt.ground_answers(5, 2, triples, "1p", [0], [0]) == [1, 3]
    assert kgt.ground_answers(5, 2, triples, "2p", [0], [0, 1]) == [2, 4]
    with pytest.raises(kgt.ArityError):
        kgt.ground_answers(5, 2, triples, "2p", [0], [0])


def test_ranking_helpers():
    assert kgt.filtered_rank([0.9, 0.5, 0.7], 1) == 3
    assert kgt.filtered_rank([0.9, 0.5, 0.7], 1, [0]) == 2
    assert kgt.union_combine([[0.1, 0.9, 0.8, 0.7, 0.6], [0.8, 0.9, 0.1, 0.2, 0.3]])[0] == 2
    assert kgt.hits_at_k_m([[1, 4]], 3) == 0.5
    assert kgt.mrr_m([[1, 4], [2]]) == pytest.approx((0.625 + 0.5) / 2)
    y = kgt.smoothed_targets(0, 0.1, 5)
    assert math.isclose(sum(y), 1.0, abs_tol=1e-12)
    assert y[0] == pytest.approx(0.92)


def test_config_error_names_key(tmp_path):
    cfg = tmp_path / "bad.conf"
    cfg.write_text("seed = 1\nmodel.hiddn = 8\n")
    with pytest.raises(kgt.ConfigError, match="model.hiddn"):
        kgt.run("--config", cfg, "gen-queries")


def test_missing_artifact(tmp_path):
    with pytest.raises(kgt.MissingArtifactError):
        kgt.run("--seed", "1", "--out", tmp_path / "o", "evaluate", "--split", "valid")


def test_tiny_pipeline_and_model(tmp_path: pathlib.Path):
    data, out = tmp_path / "data", tmp_path / "out"
    cfg = tmp_path / "tiny.conf"
    cfg.write_text(
        "\n".join(
            [
                "seed = 5",
                f"data.dir = {data}",
                f"out = {out}",
                "model.layers = 2",
                "model.hidden = 8",
                "model.heads = 2",
                "model.experts = 2",
                "model.dropout = 0.0",
                "stage1.epochs = 1",
                "stage1.steps_per_epoch = 2",
                "stage2.epochs = 1",
                "stage2.steps_per_epoch = 2",
                "finetune.epochs = 1",
                "queries.train_types = 1p,2p",
                "queries.eval_types = 1p,2u",
                "queries.train_count = 10",
                "queries.valid_count = 4",
                "queries.test_count = 4",
                "queries.allow_fewer = true",
            ]
        )
        + "\n"
    )
    kgt.run("--seed", "2", "synth", "--dir", data, "--entities", "20")
    for cmd in (["ingest"], ["gen-queries"], ["pretrain", "--stage", "1"], ["pretrain", "--stage", "2"],
                ["finetune", "--multi-task"], ["evaluate", "--split", "valid"]):
        kgt.run("--config", cfg, *cmd)
    metrics = json.loads((out / "eval" / "valid_metrics.json").read_text())
    assert "1p" in metrics
    for row in metrics.values():
        assert 0.0 <= row["hits@3m"] <= 1.0

    model = kgt.Model(out / "finetune" / "1p.ckpt")
    assert model.config["entity_count"] == 20
    scores = model.scores("1p", [0], [0])
    assert len(scores) == 20
    assert len(model.branch_scores("2u", [0, 1], [0, 1])) == 2
    top = model.top("1p", [0], [0], k=3)
    assert len(top) == 3
    assert top[0][1] >= top[1][1] >= top[2][1]
    with pytest.raises(kgt.IntegrityError):
        model.scores("1p", [99], [0])

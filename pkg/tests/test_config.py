import json

import pytest

from logcascade.config import AppConfig, PipelineConfig, QualityConfig, RetrievalConfig
from logcascade.errors import ConfigError
from logcascade.uncertainty import RoutingPolicy


def test_default_round_trip(tmp_path):
    path = tmp_path / "config.json"
    cfg = AppConfig()
    cfg.save(path)
    loaded = AppConfig.load(path)
    assert loaded.to_dict() == cfg.to_dict()


def test_partial_file_fills_defaults(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"pipeline": {"n_passes": 3, "seed": 42}}))
    cfg = AppConfig.load(path)
    assert cfg.pipeline.n_passes == 3
    assert cfg.pipeline.seed == 42
    assert cfg.pipeline.policy == "bayesian"
    assert cfg.predictor.feature_dimension == AppConfig().predictor.feature_dimension


def test_tuple_fields_come_back_as_tuples(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps(
            {
                "predictor": {"ngram_sizes": [1, 2, 3]},
                "synth": {"split_ratios": [0.5, 0.25, 0.25]},
            }
        )
    )
    cfg = AppConfig.load(path)
    assert cfg.predictor.ngram_sizes == (1, 2, 3)
    assert cfg.synth.split_ratios == (0.5, 0.25, 0.25)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="sections"):
        AppConfig.from_dict({"pipelines": {}})


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="n_pass"):
        AppConfig.from_dict({"pipeline": {"n_pass": 10}})


def test_non_object_section_rejected():
    with pytest.raises(ConfigError):
        AppConfig.from_dict({"pipeline": [1, 2]})


def test_invalid_json_reported(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        AppConfig.load(path)


def test_pipeline_policy_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(policy="coin-flip")
    assert PipelineConfig(policy="prior-only").routing_policy is RoutingPolicy.PRIOR_ONLY


def test_pipeline_bounds():
    with pytest.raises(ConfigError):
        PipelineConfig(n_passes=0)
    with pytest.raises(ConfigError):
        PipelineConfig(top_k=0)
    with pytest.raises(ConfigError):
        PipelineConfig(workers=0)
    with pytest.raises(ConfigError):
        PipelineConfig(gateway_failure="retry-forever")


def test_retrieval_validation():
    with pytest.raises(ConfigError):
        RetrievalConfig(embedder="remote")
    RetrievalConfig(embedder="remote", remote_endpoint="http://localhost:9")


def test_quality_validation():
    with pytest.raises(ConfigError):
        QualityConfig(threshold=1.5)
    with pytest.raises(ConfigError):
        QualityConfig(regenerations=0)

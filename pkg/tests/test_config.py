import json

import pytest

from volsynth.config import ConfigError, load_config, parse_config


class TestParseConfig:
    def test_defaults_fill_everything(self):
        cfg = parse_config({})
        doc = cfg.effective()
        assert doc["schema_version"] == "1"
        assert doc["train"]["loss_weights"]["lambda1"] == 100.0
        assert doc["generator"]["depth"] == 3
        assert doc["metrics"]["window"] == 11
        assert doc["data"]["shape"] == [32, 32, 32]

    def test_unknown_top_key(self):
        with pytest.raises(ConfigError, match="unknown key bogus"):
            parse_config({"bogus": 1})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="unknown key generator.depht"):
            parse_config({"generator": {"depht": 3}})

    def test_unknown_weight_key(self):
        with pytest.raises(ConfigError, match="train.loss_weights.lambda3"):
            parse_config({"train": {"loss_weights": {"lambda3": 1.0}}})

    def test_invalid_lambda_names_field(self):
        with pytest.raises(ConfigError, match="lambda1"):
            parse_config({"train": {"loss_weights": {"lambda1": -1.0}}})

    def test_schema_version_checked(self):
        with pytest.raises(ConfigError, match="schema_version"):
            parse_config({"schema_version": "2"})

    def test_seed_override(self):
        cfg = parse_config({"seed": 5}, seed_override=9)
        assert cfg.seed == 9
        assert cfg.setup.train.seed == 9

    def test_latent_dim_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="latent_dim"):
            parse_config({"generator": {"latent_dim": 8}, "encoder": {"latent_dim": 4}})

    def test_encoder_latent_follows_generator(self):
        cfg = parse_config({"generator": {"latent_dim": 12}})
        assert cfg.setup.encoder.latent_dim == 12

    def test_effective_round_trips(self):
        cfg = parse_config({"train": {"epochs": 7}, "metrics": {"window": 5}})
        doc = cfg.effective()
        cfg2 = parse_config(doc)
        assert cfg2.effective() == doc

    def test_nonsense_ablation(self):
        with pytest.raises(ConfigError, match="ablation"):
            parse_config({"train": {"ablation": "drop_everything"}})

    def test_data_validation(self):
        with pytest.raises(ConfigError, match="n_samples"):
            parse_config({"data": {"n_samples": 0}})
        with pytest.raises(ConfigError, match="shape"):
            parse_config({"data": {"shape": [8, 32, 32]}})


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)

    def test_valid_file(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"seed": 3, "train": {"epochs": 2}}))
        cfg = load_config(p)
        assert cfg.seed == 3
        assert cfg.setup.train.epochs == 2

"""Config schema, INI parsing, presets, and manifest plumbing."""

import json

import pytest

from irriloop import config as cf


class TestLoad:
    def test_defaults_without_file(self):
        cfg = cf.load_config(None)
        assert cfg.get("zmpc", "q") == 4000.0
        assert cfg.get("soil", "ks") == 1.23e-5

    def test_default_ini_matches_defaults(self, tmp_path):
        path = tmp_path / "default.ini"
        path.write_text(cf.dump_default_ini())
        assert cf.load_config(path).values == cf.default_config().values

    def test_committed_default_ini_current(self):
        # the repo copy must stay in sync with the in-code defaults
        from pathlib import Path
        repo_ini = Path(__file__).resolve().parents[1] / "configs" / "default.ini"
        assert repo_ini.read_text() == cf.dump_default_ini()

    def test_override(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[zmpc]\nq = 123.0\nmu = 0.7\n")
        cfg = cf.load_config(path)
        assert cfg.get("zmpc", "q") == 123.0
        assert cfg.zone_spec().mu == 0.7
        assert cfg.get("zmpc", "r") == 100.0  # untouched default

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[nope]\nx = 1\n")
        with pytest.raises(cf.ConfigError, match=r":1.*nope"):
            cf.load_config(path)

    def test_unknown_key_with_line(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[zmpc]\nbogus_key = 1\n")
        with pytest.raises(cf.ConfigError, match=r":2.*bogus_key"):
            cf.load_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[zmpc]\nq = not_a_number\n")
        with pytest.raises(cf.ConfigError):
            cf.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(cf.ConfigError):
            cf.load_config(tmp_path / "absent.ini")

    def test_tuple_and_bool_parsing(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[excitation]\nm1_levels = 1e-8, 2e-8\n"
                        "gaussian_noise = true\n")
        cfg = cf.load_config(path)
        assert cfg.get("excitation", "m1_levels") == (1e-8, 2e-8)
        assert cfg.get("excitation", "gaussian_noise") is True


class TestPresets:
    def test_scale_divides_length(self):
        cfg = cf.default_config()
        full = cfg.prs_spec("m1", seed=0, scale=1)
        quarter = cfg.prs_spec("m1", seed=0, scale=4)
        assert quarter.length == full.length // 4

    def test_scale_floor(self):
        cfg = cf.default_config()
        spec = cfg.prs_spec("m1", seed=0, scale=10**6)
        assert spec.length >= 45  # still enough for one window

    def test_validation_uses_distinct_seeds(self):
        cfg = cf.default_config()
        tr = cfg.prs_spec("m2", seed=3, validation=False)
        va = cfg.prs_spec("m2", seed=3, validation=True)
        assert tr.seed != va.seed
        assert cfg.noise_seed("m2", 3, False) != cfg.noise_seed("m2", 3, True)

    def test_dataset_seeds_distinct_across_names(self):
        cfg = cf.default_config()
        seeds = {cfg.prs_spec(n, seed=0).seed for n in cf.DATASET_NAMES}
        assert len(seeds) == 4

    def test_unknown_dataset(self):
        with pytest.raises(cf.ConfigError):
            cf.default_config().prs_spec("m9", seed=0)

    def test_accessors_build_valid_objects(self):
        cfg = cf.default_config()
        assert cfg.soil_params().theta_s == 0.41
        assert cfg.zone_spec().lo_init == 0.18
        assert cfg.zmpc_config().q == 4000.0
        assert cfg.train_config(1).seed == 1
        assert cfg.correction_config().kind == "single_bias"
        assert cfg.scaler().scale_u(cfg.get("excitation", "u_max_mps")) == 1.0


class TestDigest:
    def test_stable(self):
        assert cf.default_config().digest() == cf.default_config().digest()

    def test_sensitive_to_values(self):
        cfg = cf.default_config()
        other = cf.default_config()
        other.values["zmpc"]["q"] = 1.0
        assert cfg.digest() != other.digest()


class TestManifest:
    def test_written_fields(self, tmp_path):
        cfg = cf.default_config()
        path = cf.write_manifest(tmp_path, "datagen", cfg, seed=5, scale=4,
                                 outputs=[tmp_path / "a.csv"])
        data = json.loads(path.read_text())
        assert data["command"] == "datagen"
        assert data["seed"] == 5 and data["scale"] == 4
        assert data["config_sha256_16"] == cfg.digest()
        assert data["version"] and data["timestamp_utc"]
        assert data["outputs"] == [str(tmp_path / "a.csv")]

import pytest

from slowsep.config import ConfigError, ExperimentConfig, parse_config


def test_minimal_hydrodynamics_defaults():
    cfg = parse_config("kind = hydrodynamics\n")
    assert cfg.kind == "hydrodynamics"
    assert cfg.dt == 1e-3
    assert cfg.M == 400
    assert cfg.replicas == 1000
    assert cfg.n == [200]
    assert cfg.t_grid == [0.01, 0.05, 0.1]
    assert cfg.tol_l1 == 0.02


def test_comments_and_blank_lines():
    cfg = parse_config("""
# an experiment
kind = gaussianity   # trailing comment
replicas = 2000
lambdas = 0.5, 1.0
""")
    assert cfg.replicas == 2000
    assert cfg.lambdas == [0.5, 1.0]


def test_unknown_key_suggests_nearest():
    with pytest.raises(ConfigError) as err:
        parse_config("kind = hydrodynamics\nthetaa = 1\n")
    msg = str(err.value)
    assert "unknown key 'thetaa'" in msg
    assert "did you mean 'theta'" in msg


def test_negative_theta_aggregated_error():
    with pytest.raises(ConfigError) as err:
        parse_config("kind = exact-check\ntheta = -1\n")
    assert "theta must be >= 0" in str(err.value)


def test_all_errors_reported_not_just_first():
    doc = "kind = hydrodynamics\nthetaa = 1\nreplicas = -5\nn = 1\ndt = soon\n"
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    msg = str(err.value)
    assert "thetaa" in msg
    assert "replicas must be >= 1" in msg
    assert "n must be an integer >= 2" in msg
    assert "expects float" in msg


def test_type_mismatch_reported():
    with pytest.raises(ConfigError, match="expects int"):
        parse_config("kind = qv-check\nreplicas = many\n")


def test_unknown_kind():
    with pytest.raises(ConfigError, match="unknown kind"):
        parse_config("kind = hydro\n")


def test_missing_kind():
    with pytest.raises(ConfigError, match="missing required key 'kind'"):
        parse_config("n = 100\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("kind = gaussianity\nrho = 0.4\nrho = 0.5\n")


def test_malformed_line():
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("kind = gaussianity\njust some words\n")


def test_key_valid_only_for_other_kind():
    # burn_in belongs to hydrostatics, not gaussianity
    with pytest.raises(ConfigError, match="unknown key 'burn_in'"):
        parse_config("kind = gaussianity\nburn_in = 2.0\n")


def test_exact_n_cap():
    with pytest.raises(ConfigError, match="exact_n"):
        parse_config("kind = qv-check\nexact_n = 12\n")


def test_to_dict_roundtrip():
    cfg = parse_config("kind = ou-covariance\nseed = 42\nt_grid = 0.01, 0.02\n")
    d = cfg.to_dict()
    assert d["seed"] == 42
    assert d["t_grid"] == [0.01, 0.02]
    assert ExperimentConfig(**d).kind == "ou-covariance"

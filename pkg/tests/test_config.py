import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadnpg import config as C
from quadnpg.rollout import RolloutConfig


def test_defaults_echo_vehicle_and_training_constants():
    d = C.to_dict(C.TrainConfig())
    assert d["sim"]["mass"] == 0.665
    assert d["sim"]["inertia"] == [0.007, 0.007, 0.012]
    assert d["sim"]["arm_length"] == 0.17
    assert d["sim"]["dt"] == 0.01
    r = d["rollout"]
    assert (r["n_initial"], r["n_branch"], r["noise"]["depth"]) == (512, 1024, 2)
    assert d["value"]["max_iterations"] == 200 and d["value"]["loss_threshold"] == 1e-4
    assert d["policy"]["cg_iterations"] == 10
    assert d["cost"]["gamma"] == 0.99
    assert d["eval_rollouts"] == 10
    assert C.TrainConfig().policy_sizes == (18, 64, 64, 4)


def test_toml_roundtrip_default_and_smoke():
    for cfg in (C.TrainConfig(), C.smoke_config(3)):
        assert C.loads(C.dumps(cfg)) == cfg


def test_smoke_sizes():
    cfg = C.smoke_config()
    assert cfg.rollout == dataclasses.replace(cfg.rollout, n_initial=8, n_branch=16, t_initial=100, t_branch=100)
    assert cfg.iterations == 20


def test_unknown_key_named():
    with pytest.raises(C.ConfigError, match="rollout.n_brunch"):
        C.loads("[rollout]\nn_brunch = 3\n")


def test_type_errors_named():
    with pytest.raises(C.ConfigError, match="rollout.n_initial"):
        C.loads('[rollout]\nn_initial = "many"\n')
    with pytest.raises(C.ConfigError, match="policy"):
        C.loads("[policy]\nsolver = \"lu\"\n")


def test_missing_file_names_path(tmp_path):
    with pytest.raises(C.ConfigError, match="nothere.toml"):
        C.load(tmp_path / "nothere.toml")


def test_overrides():
    cfg = C.apply_overrides(C.smoke_config(), ["rollout.n_branch=32", "policy.solver='cg'", "seed=5", "rollout.noise.sigma=0.1"])
    assert cfg.rollout.n_branch == 32 and cfg.policy.solver == "cg" and cfg.seed == 5
    assert cfg.rollout.noise.sigma == 0.1
    with pytest.raises(C.ConfigError):
        C.apply_overrides(cfg, ["no_equals_sign"])
    with pytest.raises(C.ConfigError):
        C.apply_overrides(cfg, ["rollout.bogus=1"])


def test_int_accepted_for_float():
    assert C.loads("[sim]\nmass = 1\n").sim.mass == 1.0


@given(st.integers(1, 64), st.integers(1, 64), st.floats(0.01, 2.0), st.integers(0, 10**6))
@settings(max_examples=25)
def test_roundtrip_random(n_init, n_branch, sigma, seed):
    cfg = C.apply_overrides(C.TrainConfig(seed=seed), [f"rollout.n_initial={n_init}", f"rollout.n_branch={n_branch}", f"rollout.noise.sigma={sigma!r}"])
    assert C.loads(C.dumps(cfg)) == cfg
    assert isinstance(cfg.rollout, RolloutConfig)

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tofsi.config import RunConfig, format_config, parse_config, parse_config_text
from tofsi.errors import ConfigError


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    assert cfg == RunConfig()
    p = cfg.physics
    assert (p.v_max, p.rho_f, p.mu, p.E_max, p.E_min, p.nu) == (1.0, 1.0, 1.0, 1e4, 1e-6, 0.3)
    assert cfg.optimizer.volume_fraction == 0.1
    assert cfg.toggles.mesh_deformation is True


def test_p_alpha_parsed_exactly():
    cfg = parse_config_text("interpolation.p_alpha = 18e-7\n")
    assert cfg.interpolation.p_alpha == 18e-7
    assert cfg.interpolation_params().p_alpha == 18e-7


@pytest.mark.parametrize("text,needle", [
    ("physics.nu = 0.7", "physics.nu"),
    ("physics.bogus = 1", "physics.bogus"),
    ("nosuch.key = 1", "nosuch.key"),
    ("optimizer.iterations = ten", "optimizer.iterations"),
    ("toggles.mesh_deformation = maybe", "toggles.mesh_deformation"),
    ("geometry.h = -1", "geometry.h"),
    ("physics.mu", "expected"),
    ("physics.mu = 1\nphysics.mu = 2", "physics.mu"),
])
def test_bad_config_names_the_key(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert needle in str(info.value)


def test_comments_and_toggles():
    cfg = parse_config_text("# header\ntoggles.mesh_deformation = off  # fixed mesh\nverify.elements = 3, 4,9\n")
    assert cfg.toggles.mesh_deformation is False
    assert cfg.verify.elements == (3, 4, 9)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


@settings(max_examples=40)
@given(st.floats(1e-9, 1e3, allow_nan=False), st.floats(0.0, 0.49), st.integers(1, 500), st.booleans())
def test_echo_round_trip(mu, nu, iters, moving):
    cfg = RunConfig()
    cfg.physics.mu = mu
    cfg.physics.nu = nu
    cfg.optimizer.iterations = iters
    cfg.toggles.mesh_deformation = moving
    again = parse_config_text(format_config(cfg))
    assert again == cfg


def test_echo_lists_every_key():
    text = format_config(RunConfig())
    n = sum(len(dataclasses.fields(getattr(RunConfig(), f.name))) for f in dataclasses.fields(RunConfig))
    assert len(text.splitlines()) == n

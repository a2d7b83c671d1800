import logging

import numpy as np
import pytest

from src.utils import mixed_radix
from src.utils.config_loader import OUT_DIR_ENV, load_config, parse_config_text
from src.utils.errors import ConfigError, StateSpaceError, TwoWayError, ValidationError
from src.utils.logging_setup import setup_logging
from src.utils.rng import make_rng, split


def test_make_rng_is_reproducible():
    a = make_rng(11).integers(0, 1 << 30, size=8)
    b = make_rng(11).integers(0, 1 << 30, size=8)
    np.testing.assert_array_equal(a, b)


def test_make_rng_rejects_negative_seed():
    with pytest.raises(ValueError):
        make_rng(-1)


def test_split_children_are_independent_and_reproducible():
    first = [g.random() for g in split(make_rng(3), 3)]
    second = [g.random() for g in split(make_rng(3), 3)]
    assert first == second
    assert len(set(first)) == 3


def test_mixed_radix_big_endian():
    assert mixed_radix.encode(np.array([1, 0, 1]), (2, 2, 2)) == 5
    assert mixed_radix.encode(np.array([2, 1]), (3, 2)) == 5
    np.testing.assert_array_equal(mixed_radix.decode(np.array(5), (3, 2)), [2, 1])


def test_mixed_radix_inverts_on_every_index():
    radices = (3, 2, 4)
    idx = np.arange(mixed_radix.size(radices))
    np.testing.assert_array_equal(mixed_radix.encode(mixed_radix.decode(idx, radices), radices), idx)


def test_mixed_radix_empty_radices():
    assert mixed_radix.size(()) == 1
    out = mixed_radix.encode(np.zeros((4, 0), dtype=np.int64), ())
    np.testing.assert_array_equal(out, np.zeros(4))


def test_mixed_radix_width_mismatch():
    with pytest.raises(ValueError):
        mixed_radix.encode(np.array([1, 0]), (2, 2, 2))


def test_error_hierarchy():
    assert issubclass(StateSpaceError, ValidationError)
    assert issubclass(ValidationError, ValueError)
    e = StateSpaceError("joint", 2**30, 2**24)
    assert isinstance(e, TwoWayError)
    assert e.required == 2**30 and e.ceiling == 2**24
    c = ConfigError("channel1.bsc", "too large")
    assert c.field == "channel1.bsc"
    assert "channel1.bsc" in str(c)


def test_load_config_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    path = tmp_path / "exp.yml"
    path.write_text("experiment: capacity\noutput:\n  out_dir: a\n", encoding="utf-8")
    assert load_config(path)["output"]["out_dir"] == "a"
    monkeypatch.setenv(OUT_DIR_ENV, "elsewhere")
    assert load_config(path)["output"]["out_dir"] == "elsewhere"


def test_load_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.yml")


def test_parse_config_text_rejects_scalars():
    with pytest.raises(ValueError):
        parse_config_text("- 1\n- 2\n")


def test_setup_logging_levels(tmp_path):
    setup_logging("debug", tmp_path / "logs" / "run.log")
    assert logging.getLogger().level == logging.DEBUG
    assert (tmp_path / "logs" / "run.log").exists()
    setup_logging("INFO")

import pytest

from src.channel.dmc import bsc
from src.protocol.codes import Alphabets, Schedule
from src.protocol.engine import exact_distortions
from src.protocol.random_codes import random_general_code, random_staggered_code
from src.protocol.serialization import code_from_dict, code_to_dict, load_code, save_code
from src.protocol.transforms import separate
from src.source.source import dsbs
from src.utils.errors import ValidationError

A = Alphabets.binary()
MODEL = (dsbs(0.2), bsc(0.1), bsc(0.25))


def test_staggered_code_file(tmp_path, rng):
    code = random_staggered_code(2, (1, 2), A, rng)
    path = save_code(code, tmp_path / "codes" / "k.yml")
    loaded = load_code(path)
    assert loaded.round_lengths == code.round_lengths
    assert code_to_dict(loaded) == code_to_dict(code)


def test_transformed_code_keeps_behaviour(tmp_path, rng):
    code = separate(random_general_code(1, Schedule((0, 1), (1, 1)), A, rng), H=2)
    loaded = load_code(save_code(code, tmp_path / "sep.yml"))
    assert loaded.schedule == code.schedule
    assert exact_distortions(loaded, *MODEL) == pytest.approx(exact_distortions(code, *MODEL), abs=1e-15)


def test_bad_documents(rng, tmp_path):
    data = code_to_dict(random_staggered_code(1, (1, 1), A, rng))
    with pytest.raises(ValidationError, match="version"):
        code_from_dict({**data, "version": 9})
    with pytest.raises(ValidationError, match="kind"):
        code_from_dict({**data, "kind": "spiral"})
    broken = dict(data)
    del broken["decoder1"]
    with pytest.raises(ValidationError, match="decoder1"):
        code_from_dict(broken)
    (tmp_path / "list.yml").write_text("- 1\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_code(tmp_path / "list.yml")
    with pytest.raises(FileNotFoundError):
        load_code(tmp_path / "missing.yml")

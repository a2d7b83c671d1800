import re

import numpy as np
import pytest

from src.channel.dmc import bsc, capacity, identity, z_channel
from src.converse.checks import (
    CHECK_FAMILIES,
    EQUALITY,
    INEQUALITY,
    VANISHING,
    InequalityCheck,
    check_identity_lemmas,
    check_markov_structure,
    check_round_bounds,
    family_of,
    verify_code,
)
from src.infotheory.pmf import Pmf, Variable, mi
from src.protocol.codes import Alphabets, StaggeredCode
from src.protocol.engine import exact_joint
from src.protocol.random_codes import random_general_code, random_staggered_code
from src.protocol.tables import ConstantTable, LookupTable
from src.protocol.transforms import as_general
from src.source.source import dsbs, independent
from src.utils.config_loader import get_project_root
from src.utils.errors import ValidationError
from src.utils.rng import make_rng

A = Alphabets.binary()


def test_check_semantics():
    assert InequalityCheck("x", 1.0, 1.0 + 5e-10).holds
    assert not InequalityCheck("x", 1.0, 1.0 + 2e-9).holds
    assert InequalityCheck("x", 0.3, 0.3 + 5e-10, EQUALITY).holds
    assert not InequalityCheck("x", 0.3, 0.2, EQUALITY).holds
    assert InequalityCheck("x", 1e-11, 0.0, VANISHING).holds
    assert not InequalityCheck("x", 1e-8, 0.0, VANISHING).holds
    row = InequalityCheck("fwd-dp-r2", 2.0, 0.5).as_row()
    assert row["slack"] == 1.5 and row["kind"] == INEQUALITY


def test_random_q2_code_all_checks_hold(rng):
    code = random_staggered_code(1, (1, 1), A, rng)
    report = verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.1))
    assert report.holds, [c.label for c in report.violations]
    assert {c.label for c in report.final_bounds} == {"fwd-total", "bwd-total"}
    assert report.rates == (1.0, 1.0)


@pytest.mark.parametrize("seed", range(10))
def test_random_codes_never_violate(seed):
    g = make_rng(seed)
    q = int(g.choice([2, 4]))
    lengths = tuple(int(x) for x in g.choice([1, 2], size=q))
    code = random_staggered_code(int(g.choice([1, 2])), lengths, A, g)
    report = verify_code(code, dsbs(0.2), bsc(0.1), z_channel(0.3))
    assert report.holds, [(c.label, c.slack) for c in report.violations]
    for c in report.checks:
        if c.kind == EQUALITY:
            assert abs(c.slack) < 1e-9
        elif c.kind == VANISHING:
            assert c.lhs <= 1e-10


def test_noiseless_deterministic_slack():
    code = random_staggered_code(1, (1, 1), A, make_rng(4))
    joint = exact_joint(code, dsbs(0.2), identity(2), identity(2), include_reconstructions=False)
    report = check_round_bounds(joint, (1, 1), 1.0, 1.0)
    fwd = report.get("fwd-round-r2")
    assert fwd.lhs == 1.0
    assert fwd.slack == pytest.approx(1.0 - mi(joint, ["X1"], ["V1", "V2"], ["X2"]), abs=1e-12)
    assert fwd.slack >= 0
    for c in check_markov_structure(joint, 2):
        assert c.lhs <= 1e-12


def test_constant_user1_carries_nothing():
    code = StaggeredCode(
        1, (1, 1), A,
        (ConstantTable(1, 2, 1), LookupTable((2, 2), 2, 1, [0, 1, 1, 0])),
        ConstantTable(2, 2, 1),
        ConstantTable(2, 2, 1),
    )
    C1 = capacity(bsc(0.1)).upper
    joint = exact_joint(code, dsbs(0.2), bsc(0.1), bsc(0.1), include_reconstructions=False)
    report = check_round_bounds(joint, code.round_lengths, C1, C1)
    total = report.get("fwd-total")
    assert total.rhs == pytest.approx(0.0, abs=1e-12)
    assert total.slack == pytest.approx(total.lhs, abs=1e-12)


def test_identity_residuals_q2(rng):
    code = random_staggered_code(1, (1, 1), A, rng)
    joint = exact_joint(code, dsbs(0.3), bsc(0.1), bsc(0.2), include_reconstructions=False)
    checks = {c.label: c for c in check_identity_lemmas(joint)}
    fwd = checks["identity-fwd-r2"]
    assert fwd.rhs == pytest.approx(mi(joint, ["X2"], ["V1"]), abs=1e-12)
    assert abs(fwd.slack) < 1e-9
    assert checks["identity-bwd-r2"].rhs == pytest.approx(mi(joint, ["V2"], ["X1", "V1"]), abs=1e-12)


def test_identity_independent_sources_user1_only():
    # X1 independent of X2 and V1 a function of X1: both sides of the forward identity vanish
    code = StaggeredCode(
        1, (1, 1), A,
        (LookupTable((2,), 2, 1, [0, 1]), ConstantTable(2, 2, 1)),
        ConstantTable(2, 2, 1),
        ConstantTable(2, 2, 1),
    )
    joint = exact_joint(code, independent([0.5, 0.5], [0.3, 0.7]), bsc(0.1), bsc(0.1), include_reconstructions=False)
    fwd = next(c for c in check_identity_lemmas(joint) if c.label == "identity-fwd-r2")
    assert fwd.rhs == pytest.approx(0.0, abs=1e-12)
    assert fwd.lhs == pytest.approx(0.0, abs=1e-12)


def test_q4_labels_and_shifted_markov(rng):
    code = random_staggered_code(1, (1, 1, 1, 1), A, rng)
    report = verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.2))
    labels = [c.label for c in report.checks]
    assert len(labels) == len(set(labels)) == 24
    assert "fwd-cumulative-r2" in labels and "bwd-round-r4" in labels
    assert report.get("markov-bwd-r4").lhs <= 1e-10
    joint = exact_joint(code, dsbs(0.2), bsc(0.1), bsc(0.2), include_reconstructions=False)
    assert mi(joint, ["X1", "V2"], ["V4"], ["X2", "V1", "V3"]) <= 1e-10


def test_missing_variables_are_named():
    p = Pmf.uniform((Variable("X1", 2), Variable("X2", 2), Variable("V1", 2)))
    with pytest.raises(ValidationError, match="V2"):
        check_round_bounds(p, (1, 1), 1.0, 1.0)
    with pytest.raises(ValidationError):
        check_round_bounds(p, (1,), 1.0, 1.0)


def test_verify_accepts_staggered_shaped_general_code(rng):
    code = random_staggered_code(1, (2, 1), A, rng)
    a = verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.2))
    b = verify_code(as_general(code), dsbs(0.2), bsc(0.1), bsc(0.2))
    assert [c.slack for c in a.checks] == [c.slack for c in b.checks]


def test_verify_rejects_simultaneous_code(rng):
    from src.protocol.codes import Schedule

    code = random_general_code(1, Schedule((1,), (1,)), A, rng)
    with pytest.raises(ValidationError):
        verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.1))


def test_slack_is_reproducible():
    code = random_staggered_code(2, (1, 2), A, make_rng(8))
    first = [c.slack for c in verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.2)).checks]
    second = [c.slack for c in verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.2)).checks]
    assert first == second


def test_check_map_covers_every_family(rng):
    text = (get_project_root() / "docs" / "check_map.md").read_text(encoding="utf-8")
    documented = set(re.findall(r"^\| `([a-z-]+)` \|", text, flags=re.MULTILINE))
    assert documented == set(CHECK_FAMILIES)

    code = random_staggered_code(1, (1, 1, 1, 1), A, rng)
    report = verify_code(code, dsbs(0.2), bsc(0.1), bsc(0.1))
    assert {family_of(c.label) for c in report.checks} == set(CHECK_FAMILIES)

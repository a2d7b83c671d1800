import numpy as np
import pytest

from src.infotheory.pmf import (
    CELL_CEILING,
    MiQuery,
    Pmf,
    Variable,
    conditional_entropy,
    entropy,
    marginalize,
    mi,
    mutual_information,
)
from src.utils.errors import StateSpaceError, ValidationError
from src.utils.rng import make_rng


def _copy_bit():
    return Pmf((Variable("X", 2), Variable("Y", 2)), np.array([[0.5, 0.0], [0.0, 0.5]]))


def test_variable_needs_positive_alphabet():
    with pytest.raises(ValidationError):
        Variable("A", 0)


def test_pmf_rejects_unnormalised_and_negative(two_bits):
    with pytest.raises(ValidationError):
        Pmf(two_bits, np.full((2, 2), 0.3))
    with pytest.raises(ValidationError):
        Pmf(two_bits, np.array([[1.5, -0.5], [0.0, 0.0]]))


def test_pmf_rejects_duplicate_names():
    with pytest.raises(ValidationError):
        Pmf.uniform((Variable("A", 2), Variable("A", 2)))


def test_cell_ceiling():
    with pytest.raises(StateSpaceError) as e:
        Pmf.uniform((Variable("A", 2 ** 13), Variable("B", 2 ** 12)))
    assert e.value.ceiling == CELL_CEILING


def test_marginalize_examples(two_bits):
    p = Pmf.uniform(two_bits)
    np.testing.assert_allclose(marginalize(p, {"A"}).mass, [0.5, 0.5])
    np.testing.assert_allclose(marginalize(p, ["A", "B"]).mass, p.mass)
    np.testing.assert_allclose(marginalize(_copy_bit(), ["X"]).mass, [0.5, 0.5])


def test_marginalize_unknown_name(two_bits):
    with pytest.raises(ValidationError, match="'Z'"):
        marginalize(Pmf.uniform(two_bits), ["Z"])


def test_entropy_examples():
    assert entropy(Pmf.uniform((Variable("A", 2),)), ["A"]) == pytest.approx(1.0, abs=1e-12)
    point = Pmf((Variable("A", 2),), np.array([1.0, 0.0]))
    assert entropy(point, ["A"]) == 0.0
    biased = Pmf((Variable("A", 2),), np.array([0.1, 0.9]))
    assert entropy(biased, ["A"]) == pytest.approx(0.4689955935892812, abs=1e-12)


def test_entropy_empty_set(two_bits):
    with pytest.raises(ValidationError):
        entropy(Pmf.uniform(two_bits), [])


def test_entropy_of_uniform_bits_is_exact():
    bits = tuple(Variable(f"B{i}", 2) for i in range(6))
    assert entropy(Pmf.uniform(bits), [v.name for v in bits]) == pytest.approx(6.0, abs=1e-12)


def test_mutual_information_examples(two_bits):
    assert mi(Pmf.uniform(two_bits), ["A"], ["B"]) == pytest.approx(0.0, abs=1e-12)
    assert mi(_copy_bit(), ["X"], ["Y"]) == pytest.approx(1.0, abs=1e-12)


def test_overlapping_query():
    with pytest.raises(ValidationError):
        MiQuery(frozenset({"A"}), frozenset({"A", "B"}))


def test_query_parse_and_str():
    q = MiQuery.parse("A,B;C|D")
    assert q.left == {"A", "B"} and q.right == {"C"} and q.given == {"D"}
    assert str(q) == "I(A,B ; C | D)"
    with pytest.raises(ValidationError):
        MiQuery.parse("A,B")


@pytest.mark.parametrize("seed", range(5))
def test_chain_rule_symmetry_nonnegativity(seed):
    g = make_rng(seed)
    variables = (Variable("A", 2), Variable("B", 3), Variable("C", 2), Variable("D", 2))
    p = Pmf.from_counts(variables, g.random((2, 3, 2, 2)))
    whole = mi(p, ["A", "B"], ["C"])
    assert whole == pytest.approx(mi(p, ["A"], ["C"]) + mi(p, ["B"], ["C"], ["A"]), abs=1e-9)
    assert mi(p, ["A"], ["B"], ["C"]) == pytest.approx(mi(p, ["B"], ["A"], ["C"]), abs=1e-12)
    for left, right, given in ((["A"], ["B"], []), (["A"], ["D"], ["B", "C"]), (["C"], ["A", "B"], ["D"])):
        assert mi(p, left, right, given) >= -1e-10


def test_markov_chain_vanishes():
    g = make_rng(5)
    # A - C - B by construction: p(c) p(a|c) p(b|c)
    pc = g.dirichlet(np.ones(3))
    pa = g.dirichlet(np.ones(2), size=3)
    pb = g.dirichlet(np.ones(2), size=3)
    mass = np.einsum("c,ca,cb->acb", pc, pa, pb)
    p = Pmf((Variable("A", 2), Variable("C", 3), Variable("B", 2)), mass)
    assert abs(mi(p, ["A"], ["B"], ["C"])) <= 1e-10


def test_conditional_entropy(random_pmf):
    h = conditional_entropy(random_pmf, ["A"], ["B"])
    assert h == pytest.approx(entropy(random_pmf, ["A", "B"]) - entropy(random_pmf, ["B"]))
    assert conditional_entropy(random_pmf, ["A"]) == pytest.approx(entropy(random_pmf, ["A"]))


def test_product_and_from_function():
    a = Pmf((Variable("A", 2),), np.array([0.25, 0.75]))
    b = Pmf((Variable("B", 3),), np.array([0.2, 0.3, 0.5]))
    p = Pmf.product(a, b)
    assert p.names == ("A", "B")
    assert mi(p, ["A"], ["B"]) == pytest.approx(0.0, abs=1e-12)
    q = Pmf.from_function((Variable("A", 2), Variable("B", 3)), lambda i, j: a.mass[i] * b.mass[j])
    np.testing.assert_allclose(q.mass, p.mass)


def test_mutual_information_unknown_variable(random_pmf):
    with pytest.raises(ValidationError):
        mutual_information(random_pmf, MiQuery.parse("A;Z"))

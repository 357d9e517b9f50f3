import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowsep.lattice import (BondEvent, Configuration, Parameters, Regime,
                             apply_event, bernoulli_sample, classify_regime,
                             jump_rates, new_parameters)


def test_new_parameters_valid():
    p = new_parameters(4, 0.0, 0.3, 0.7, 0.5)
    assert p.regime is Regime.DIRICHLET
    assert p.n_sites == 3 and p.n_bonds == 4


def test_new_parameters_lattice_too_small():
    with pytest.raises(ValueError, match="n must be"):
        new_parameters(1, 0.0, 0.3, 0.7, 0.5)


def test_new_parameters_density_out_of_range():
    with pytest.raises(ValueError, match="beta"):
        new_parameters(10, 1.0, 0.5, 1.2, 0.5)


def test_new_parameters_negative_theta():
    with pytest.raises(ValueError, match="theta"):
        new_parameters(10, -0.5, 0.5, 0.5, 0.5)


def test_regime_classification():
    assert classify_regime(0.0) is Regime.DIRICHLET
    assert classify_regime(0.999) is Regime.DIRICHLET
    assert classify_regime(1.0) is Regime.ROBIN
    assert classify_regime(1.001) is Regime.NEUMANN


def test_jump_rates_empty_lattice_example():
    p = new_parameters(4, 0.0, 0.3, 0.7, 0.5)
    eta = Configuration.from_sites([0, 0, 0])
    assert np.allclose(jump_rates(p, eta), [0.3, 1.0, 1.0, 0.7])


def test_jump_rates_occupied_left_slow():
    p = new_parameters(10, 1.0, 0.2, 0.5, 0.5)
    occ = np.zeros(9, dtype=np.uint8)
    occ[0] = 1
    assert jump_rates(p, Configuration(occ))[0] == pytest.approx(0.8 / 10)


def test_jump_rates_bulk_always_one():
    p = new_parameters(7, 2.0, 0.4, 0.6, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        eta = bernoulli_sample(p, 0.5, rng)
        assert np.all(jump_rates(p, eta)[1:-1] == 1.0)


def test_jump_rates_boundary_scaling():
    # rates at (n, theta) and (n, 0) differ exactly by n**-theta at the ends
    rng = np.random.default_rng(1)
    for theta in (0.5, 1.0, 2.0):
        p0 = new_parameters(12, 0.0, 0.25, 0.85, 0.5)
        pt = new_parameters(12, theta, 0.25, 0.85, 0.5)
        eta = bernoulli_sample(p0, 0.5, rng)
        r0 = jump_rates(p0, eta)
        rt = jump_rates(pt, eta)
        scale = 12.0 ** -theta
        assert rt[0] == pytest.approx(r0[0] * scale)
        assert rt[-1] == pytest.approx(r0[-1] * scale)


def test_jump_rates_length_mismatch():
    p = new_parameters(4, 0.0, 0.3, 0.7, 0.5)
    with pytest.raises(ValueError, match="sites"):
        jump_rates(p, Configuration.from_sites([0, 1]))


def test_apply_event_bulk_swap():
    eta = Configuration.from_sites([1, 0, 0])
    out = apply_event(eta, BondEvent(1))
    assert list(out.occupations) == [0, 1, 0]
    assert list(eta.occupations) == [1, 0, 0]  # input untouched


def test_apply_event_left_flip():
    out = apply_event(Configuration.from_sites([1, 0, 0]), 0)
    assert list(out.occupations) == [0, 0, 0]


def test_apply_event_noop_swap_of_equal_values():
    eta = Configuration.from_sites([1, 1, 0])
    assert list(apply_event(eta, 1).occupations) == [1, 1, 0]


def test_apply_event_bond_out_of_range():
    with pytest.raises(ValueError, match="bond"):
        apply_event(Configuration.from_sites([1, 0, 0]), 4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=12), st.data())
def test_apply_event_involution_and_conservation(bits, data):
    eta = Configuration.from_sites(bits)
    bond = data.draw(st.integers(0, len(bits)))
    once = apply_event(eta, bond)
    twice = apply_event(once, bond)
    assert list(twice.occupations) == bits
    delta = once.particle_count() - eta.particle_count()
    if 0 < bond < len(bits):
        assert delta == 0  # bulk bonds conserve particles
    else:
        assert delta in (-1, 1)


def test_configuration_rejects_bad_values():
    with pytest.raises(ValueError, match="0/1"):
        Configuration.from_sites([0, 2, 1])


def test_configuration_is_write_protected():
    eta = Configuration.from_sites([1, 0])
    with pytest.raises(ValueError):
        eta.occupations[0] = 0


def test_bernoulli_sample_mean():
    p = new_parameters(201, 0.0, 0.3, 0.3, 0.3)
    rng = np.random.default_rng(7)
    draws = np.array([bernoulli_sample(p, 0.3, rng).occupations.mean()
                      for _ in range(500)])
    # CLT band: 500 x 200 sites
    assert abs(draws.mean() - 0.3) < 4 * np.sqrt(0.21 / (500 * 200))


def test_bernoulli_sample_uniform_at_half():
    # at rho = 1/2 every configuration of 3 sites has probability 1/8
    p = new_parameters(4, 0.0, 0.5, 0.5, 0.5)
    rng = np.random.default_rng(11)
    counts = np.zeros(8)
    for _ in range(8000):
        occ = bernoulli_sample(p, 0.5, rng).occupations
        counts[occ[0] + 2 * occ[1] + 4 * occ[2]] += 1
    freq = counts / 8000
    assert np.abs(freq - 0.125).max() < 4 * np.sqrt(0.125 * 0.875 / 8000)


def test_bernoulli_sample_rho_validation():
    p = new_parameters(4, 0.0, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError, match="rho"):
        bernoulli_sample(p, 1.0, np.random.default_rng(0))

import pytest
import sys
import os
from itertools import product

import numpy as np

# Adiciona a raiz do projeto ao sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../..")))

from errors import InputError
from measures import (bump_measure, bump_transform, deposit, mollifier_decay_profile, mollifier_density, seminorm,
                      support_distance, uniform_measure)
from models.configuration import WeightedConfiguration
from models.measure import GridMeasure

# Fixtures
@pytest.fixture
def random_measure():
    rng = np.random.default_rng(31)
    dens = rng.random((32, 32))
    return GridMeasure(2, 32, dens / dens.mean())

# Tests
def test_mollifier_is_a_probability_density():
    """Testa massa 1 e transformada 1 na origem"""
    mu = mollifier_density(0.05, 1024)
    assert mu.is_probability(1e-9)
    assert abs(mu.transform([[0]])[0]) == pytest.approx(1.0, abs=1e-9)

def test_mollifier_support_within_radius():
    """Testa que o suporte fica no raio r, a menos de uma célula"""
    G, r = 1024, 0.05
    mu = mollifier_density(r, G)
    idx = np.flatnonzero(mu.density > 0)
    dist = np.minimum(idx, G - idx) / G
    assert dist.max() <= r + 1.0 / G

def test_mollifier_needs_resolution():
    """Testa o erro quando 1/G >= r"""
    with pytest.raises(InputError):
        mollifier_density(0.001, 512)
    with pytest.raises(InputError):
        mollifier_density(2.0, 512)

def test_mollifier_decay_is_scale_free():
    """Testa que |phi_r^(xi)| |xi r|^T varia menos de 2x entre escalas"""
    _, spread = mollifier_decay_profile([2.0 ** -k for k in range(4, 8)])
    assert spread[2] < 2.0
    assert spread[4] < 2.0

def test_bump_transform_at_zero():
    """Testa que a bossa normalizada tem transformada 1 em zero"""
    assert bump_transform(0.0, 1) == pytest.approx(1.0)
    assert bump_transform(0.0, 2) == pytest.approx(1.0)
    assert bump_transform(1000.0, 1) == 0.0

def test_fast_transform_matches_direct(random_measure):
    """Testa a transformada rápida contra a soma direta"""
    rng = np.random.default_rng(8)
    freqs = rng.integers(-15, 16, size=(20, 2))
    assert np.allclose(random_measure.transform(freqs), random_measure.direct_transform(freqs), atol=1e-9)

def test_seminorm_of_uniform_is_zero():
    """Testa que a densidade uniforme tem seminorma nula"""
    assert seminorm(uniform_measure(128), 0.7).value < 1e-12

def test_seminorm_of_spike():
    """Testa o pico de uma célula com lambda = 0"""
    dens = np.zeros(128)
    dens[5] = 128.0
    assert seminorm(GridMeasure(1, 128, dens), 0.0).value == pytest.approx(1.0)

def test_seminorm_matches_direct_scan(random_measure):
    """Testa a seminorma contra uma varredura direta da caixa"""
    lam, xi_max = 1.3, 6
    best = 0.0
    for xi in product(range(-xi_max, xi_max + 1), repeat=2):
        if xi != (0, 0):
            value = abs(random_measure.direct_transform([xi])[0]) * (xi[0] ** 2 + xi[1] ** 2) ** (lam / 4)
            best = max(best, value)
    assert seminorm(random_measure, lam, xi_max).value == pytest.approx(best, rel=1e-9)

def test_seminorm_monotone_in_box(random_measure):
    """Testa que a seminorma não diminui com xi_max"""
    values = [seminorm(random_measure, 1.0, k).value for k in range(1, 16)]
    assert all(b >= a for a, b in zip(values, values[1:]))

def test_seminorm_rejects_beyond_nyquist(random_measure):
    """Testa xi_max acima de Nyquist"""
    with pytest.raises(InputError):
        seminorm(random_measure, 1.0, 16)

def test_deposit_keeps_weighted_mass():
    """Testa que a rasterização preserva a massa (1/N) soma a_k"""
    config = WeightedConfiguration(1, [[0.1], [0.1], [0.9]], [1.0, 2.0, 3.0], 0.01)
    masses = deposit(config, 64)
    assert masses.sum() == pytest.approx(2.0)
    assert masses[6] == pytest.approx(1.0)

def test_support_distance_identity():
    """Testa que a distância de uma medida a ela mesma é zero"""
    mu = bump_measure([0.5], 0.2, 512)
    assert support_distance(mu, mu, 1e-9) == 0.0

def test_support_distance_of_disjoint_bumps():
    """Testa duas bossas a distância 0.3"""
    G = 1024
    a = bump_measure([0.2], 0.1, G)
    b = bump_measure([0.5], 0.1, G)
    assert support_distance(a, b, 1e-9) == pytest.approx(0.3, abs=2.0 / G)

def test_support_distance_errors():
    """Testa limiar inválido e suporte vazio"""
    mu = bump_measure([0.5], 0.2, 256)
    with pytest.raises(InputError):
        support_distance(mu, mu, 0.0)
    with pytest.raises(InputError):
        support_distance(GridMeasure(1, 256, np.zeros(256)), mu, 1e-9)

import pytest
import sys
import os
import math
from itertools import product

import numpy as np

# Adiciona a raiz do projeto ao sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from errors import InputError
from expsum import (annulus_sup, bound_constant_term, calibrate_C, consecutive_sums, exp_sums, lattice_annulus,
                    sampled_annulus, sweep, weighted_exp_sum)
from models.configuration import WeightedConfiguration
from models.measure import GridMeasure
from models.torus import Frequency

# Helpers
def equally_spaced(N):
    return WeightedConfiguration.unit(np.arange(N) / N)

def reference_sum(config, xi):
    """Soma exata com math.fsum, termo a termo"""
    re, im = [], []
    for x, w in zip(config.points, config.weights):
        phase = 2 * math.pi * (float(np.dot(x, xi)) % 1.0)
        re.append(w * math.cos(phase))
        im.append(w * math.sin(phase))
    return complex(math.fsum(re), math.fsum(im)) / config.N

# Fixtures
@pytest.fixture
def random_config():
    rng = np.random.default_rng(77)
    return WeightedConfiguration(2, rng.random((200, 2)), rng.uniform(0.5, 2.0, 200), 0.01)

# Tests
def test_zero_frequency_is_one():
    """Testa que xi = 0 com pesos unitários dá exatamente 1"""
    config = WeightedConfiguration.unit(np.random.default_rng(1).random((50, 1)))
    assert weighted_exp_sum(config, Frequency.of(0)) == 1.0

def test_single_point_modulus_is_weight():
    """Testa que N = 1 dá módulo igual ao peso"""
    config = WeightedConfiguration(1, [[0.3]], [2.5], 0.0)
    assert abs(weighted_exp_sum(config, Frequency.of(7))) == pytest.approx(2.5)

def test_dimension_mismatch():
    """Testa o erro de dimensão entre frequência e configuração"""
    with pytest.raises(InputError):
        weighted_exp_sum(WeightedConfiguration.unit([[0.1, 0.2]]), Frequency.of(1))

def test_matches_reference_summation(random_config):
    """Testa a soma contra a referência compensada"""
    rng = np.random.default_rng(5)
    freqs = rng.integers(-500, 501, size=(20, 2))
    fast = exp_sums(random_config.points, random_config.weights, freqs, random_config.N)
    for xi, got in zip(freqs, fast):
        assert abs(got - reference_sum(random_config, xi)) < 1e-10
        assert abs(weighted_exp_sum(random_config, Frequency(tuple(xi))) - got) < 1e-10

def test_modulus_bounded_by_mean_weight(random_config):
    """Testa |soma| <= (soma dos pesos)/N"""
    freqs = np.array(list(product(range(-6, 7), repeat=2)))
    values = np.abs(exp_sums(random_config.points, random_config.weights, freqs))
    assert values.max() <= random_config.total_weight / random_config.N + 1e-12

def test_equally_spaced_geometric_series():
    """Testa a série geométrica dos pontos igualmente espaçados"""
    config = equally_spaced(16)
    assert abs(weighted_exp_sum(config, Frequency.of(3))) < 1e-12
    assert abs(weighted_exp_sum(config, Frequency.of(16))) == pytest.approx(1.0)

def test_consecutive_sums_match_direct():
    """Testa a recorrência de fase contra a avaliação direta"""
    rng = np.random.default_rng(9)
    x = rng.random(300)
    w = rng.uniform(0.5, 1.5, 300)
    rec = consecutive_sums(x, w, 100, 700)
    direct = exp_sums(x.reshape(-1, 1), w, np.arange(100, 800).reshape(-1, 1))
    assert np.allclose(rec, direct, atol=1e-10)

def test_conjugate_symmetry(random_config):
    """Testa soma(-xi) = conjugado(soma(xi))"""
    freqs = np.array([[3, -4], [17, 2], [0, 9]])
    plus = exp_sums(random_config.points, random_config.weights, freqs)
    minus = exp_sums(random_config.points, random_config.weights, -freqs)
    assert np.allclose(minus, np.conj(plus), atol=1e-12)

def test_weight_scaling(random_config):
    """Testa que multiplicar os pesos por c multiplica |soma| por c"""
    freqs = np.array([[5, 1], [2, 9]])
    base = np.abs(exp_sums(random_config.points, random_config.weights, freqs))
    scaled = np.abs(exp_sums(random_config.points, 3.0 * random_config.weights, freqs))
    assert np.allclose(scaled, 3.0 * base)

def test_translation_keeps_annulus_sups(random_config):
    """Testa que transladar os pontos não muda os supremos por anel"""
    moved = random_config.shifted([0.137, 0.911])
    for j in range(5):
        assert annulus_sup(moved, j)[0] == pytest.approx(annulus_sup(random_config, j)[0], abs=1e-10)

def test_half_annulus_counts():
    """Testa a enumeração do meio anel em d=2"""
    assert sorted(map(tuple, lattice_annulus(0, 2))) == [(0, 1), (1, -1), (1, 0), (1, 1)]
    full = lattice_annulus(3, 2, half=False)
    half = lattice_annulus(3, 2)
    assert full.shape[0] == 2 * half.shape[0]

def test_sampled_annulus_stays_inside():
    """Testa que a amostra fica dentro do anel"""
    freqs = sampled_annulus(14, 2, size=1024)
    norms = np.sqrt(np.sum(freqs.astype(float) ** 2, axis=1))
    assert freqs.shape[0] > 0
    assert np.all((norms >= 2 ** 14) & (norms < 2 ** 15))

def test_annulus_sup_matches_full_enumeration(random_config):
    """Testa o supremo por anel contra a varredura exaustiva em d=2"""
    for j in range(5):
        R = 2 ** (j + 1)
        best = 0.0
        for xi in product(range(-R, R + 1), repeat=2):
            n2 = xi[0] ** 2 + xi[1] ** 2
            if 4 ** j <= n2 < 4 ** (j + 1):
                best = max(best, abs(reference_sum(random_config, np.array(xi))))
        assert annulus_sup(random_config, j)[0] == pytest.approx(best, abs=1e-10)

def test_annulus_sup_of_flat_density():
    """Testa que a densidade constante tem supremo nulo"""
    mu = GridMeasure(1, 256, np.ones(256))
    for j in range(6):
        assert annulus_sup(mu, j)[0] < 1e-12

def test_annulus_sup_of_one_cell_spike():
    """Testa que um único pico tem coeficientes de módulo 1"""
    dens = np.zeros(256)
    dens[40] = 256.0
    mu = GridMeasure(1, 256, dens)
    for j in range(4):
        assert annulus_sup(mu, j)[0] == pytest.approx(1.0)

def test_annulus_sup_rejects_bad_input():
    """Testa j negativo e anéis além de Nyquist"""
    with pytest.raises(InputError):
        annulus_sup(equally_spaced(4), -1)
    with pytest.raises(InputError):
        annulus_sup(GridMeasure(1, 16, np.ones(16)), 3)

def test_periodic_configuration_fails_at_N():
    """Testa que a configuração periódica viola o limite em xi = N"""
    report = sweep(equally_spaced(16), kappa=0.2, C=1.0)
    assert not report.verdict
    assert (16,) in [xi for xi, _, _ in report.violating]

def test_single_point_fails():
    """Testa que um único ponto sempre falha"""
    report = sweep(WeightedConfiguration.unit([[0.25]]), C=1.0)
    assert not report.verdict

def test_random_points_pass():
    """Testa que pontos uniformes passam com C = 4"""
    config = WeightedConfiguration.unit(np.random.default_rng(12).random((1024, 1)))
    report = sweep(config, kappa=0.2, C=4.0)
    assert report.verdict
    assert report.violating == ()
    assert report.max_ratio < 1.0

def test_sweep_covers_range_without_gaps():
    """Testa que os anéis cobrem 1 <= |xi| <= N^(1+kappa)"""
    config = WeightedConfiguration.unit(np.random.default_rng(3).random((100, 1)))
    report = sweep(config, kappa=0.2, C=4.0)
    upper = 100 ** 1.2
    assert [a.j for a in report.annuli] == list(range(len(report.annuli)))
    assert sum(a.count for a in report.annuli) == math.floor(upper)
    assert report.to_dict()["verdict"] == report.verdict

def test_sweep_rejects_bad_constant():
    """Testa C <= 0 e a configuração vazia"""
    with pytest.raises(InputError):
        sweep(equally_spaced(8), C=0.0)
    with pytest.raises(InputError):
        sweep(WeightedConfiguration.unit(np.empty((0, 1))), C=1.0)

def test_bound_constant_term():
    """Testa o termo C log N / sqrt N"""
    assert bound_constant_term(1, 3.0) == 0.0
    assert bound_constant_term(100, 2.0) == pytest.approx(2.0 * math.log(100) / 10.0)

def test_calibrate_C_is_deterministic():
    """Testa que a calibração é determinística e positiva"""
    first = calibrate_C(64, 1, trials=5, seed=4)
    assert first > 0
    assert calibrate_C(64, 1, trials=5, seed=4) == first

def test_sweep_is_thread_independent():
    """Testa que o resultado da varredura não depende do número de threads"""
    config = WeightedConfiguration.unit(np.random.default_rng(9).random((256, 2)))
    kwargs = {"kappa": 0.2, "C": 4.0, "exhaustive_cutoff": 64, "sample_size": 512}
    single = sweep(config, threads=1, **kwargs)
    pooled = sweep(config, threads=4, **kwargs)
    assert pooled.to_dict() == single.to_dict()

def test_calibrate_C_is_thread_independent():
    """Testa a calibração com uma e com várias threads"""
    assert calibrate_C(64, 1, trials=6, seed=2, threads=3) == calibrate_C(64, 1, trials=6, seed=2, threads=1)

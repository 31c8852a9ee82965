import pytest
import sys
import os
import math

import numpy as np

# Adiciona a raiz do projeto ao sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../..")))

from demos import ap3_pattern
from errors import InputError
from harness import (hoeffding_check, mcdiarmid_check, perturbation_check, phase_sum_samples, split_sum_check)
from models.configuration import ConstructionParams, WeightedConfiguration
from sampler import build

# Helpers
def stratified_config(seed, M=256, removal=0.2, stratum_weights=(0.5, 0.5, 1.0)):
    """Configuração com três estratos uniformes e remoção independente no último"""
    rng = np.random.default_rng(seed)
    strata = [rng.random((M, 1)) for _ in range(3)]
    drop = rng.random(M) < removal
    blocks = strata[:2] + [strata[2][~drop]]
    labels = np.concatenate([np.full(b.shape[0], i) for i, b in enumerate(blocks)])
    raw = np.asarray(stratum_weights)[labels]
    scale = labels.size / raw.sum()
    provenance = {"M": M, "weight_scale": scale, "stratum_weights": list(stratum_weights),
                  "removed_points": strata[2][drop].tolist()}
    return WeightedConfiguration(1, np.concatenate(blocks), raw * scale, 1e-4, removed_count=int(drop.sum()),
                                 provenance=provenance, strata=labels)

# Fixtures
@pytest.fixture(scope="module")
def ap3_configs():
    params = ConstructionParams(M=32, lambda_=0.3)
    return [build(params.with_seed(s), ap3_pattern()) for s in range(50)]

# Tests
def test_hoeffding_with_zero_coefficients():
    """Testa A = 0: a cauda é nula para todo t > 0"""
    table = hoeffding_check(np.zeros(10), np.zeros(200), [0.1, 0.5, 1.0])
    assert not table["exceeds"].any()
    assert (table["bound"] == 0.0).all()

def test_hoeffding_bound_formula():
    """Testa o limite 4 exp(-t^2 / (2 soma A^2))"""
    A = np.full(25, 0.2)
    table = hoeffding_check(A, np.zeros(300), [0.5, 2.0])
    s2 = float(np.sum(A ** 2))
    assert table["bound"].tolist() == pytest.approx([min(1.0, 4 * math.exp(-t * t / (2 * s2))) for t in (0.5, 2.0)])

def test_hoeffding_random_phases():
    """Testa que a parte real da soma de fases respeita o limite"""
    A = np.linspace(0.1, 1.0, 40)
    samples = phase_sum_samples(A, 2000, seed=4).real
    table = hoeffding_check(A, samples, np.linspace(0.5, 8.0, 16), mean=0.0)
    assert not table["exceeds"].any()

def test_mcdiarmid_bounded_differences():
    """Testa a soma de uniformes com diferenças limitadas por 1"""
    rng = np.random.default_rng(6)
    samples = rng.random((1000, 30)).sum(axis=1)
    table = mcdiarmid_check(np.ones(30), samples, [1.0, 2.0, 4.0], mean=15.0)
    assert not table["exceeds"].any()

def test_tail_checks_need_enough_samples():
    """Testa que menos de 200 amostras é erro de entrada"""
    with pytest.raises(InputError):
        hoeffding_check(np.ones(3), np.zeros(199), [1.0])

def test_split_sum_needs_fifty_trials(ap3_configs):
    """Testa o mínimo de 50 tentativas"""
    with pytest.raises(InputError):
        split_sum_check(ap3_configs[:49])

def test_split_sum_reconstructs(ap3_configs):
    """Testa F = G - H e a tabela de escores z"""
    result = split_sum_check(ap3_configs, C=1.0, count=12, seed=3)
    assert result["reconstruction_error"] < 1e-10
    assert result["trials"] == 50
    assert len(result["table"]) == 12
    assert 0.0 <= result["tail_pass_rate"] <= 1.0
    assert result["bound"] == pytest.approx(math.sqrt(32) * math.sqrt(math.log(32)))
    assert result["table"]["within_3sigma"].all()

def test_split_sum_random_removals():
    """Testa média de H dentro de 3 sigma e taxa de cauda >= 0.9 com remoções aleatórias"""
    configs = [stratified_config(s) for s in range(60)]
    result = split_sum_check(configs, C=1.0, count=20, seed=1)

    assert result["reconstruction_error"] < 1e-10
    assert result["max_abs_H"] > 0
    assert result["table"]["within_3sigma"].mean() >= 0.8
    assert result["tail_pass_rate"] >= 0.9

def test_split_sum_without_removals():
    """Testa I vazio: H nulo e F = G"""
    configs = [stratified_config(s, removal=0.0) for s in range(50)]
    result = split_sum_check(configs, count=8)

    assert result["max_abs_H"] == 0.0
    assert result["reconstruction_error"] < 1e-10
    assert (result["table"]["mean_re"] == 0.0).all()
    assert (result["table"]["mean_im"] == 0.0).all()
    assert result["tail_pass_rate"] == 1.0

def test_split_sum_detects_weight_mismatch():
    """Testa que pesos gravados inconsistentes com os estratos quebram F = G - H"""
    configs = [stratified_config(s) for s in range(50)]
    for config in configs:
        # pesos declarados diferentes dos usados na normalização
        config.provenance["stratum_weights"] = [1.0, 1.0, 1.0]
    result = split_sum_check(configs, count=8)

    assert result["reconstruction_error"] > 1e-3

def test_perturbation_check_runs(ap3_configs):
    """Testa a tabela de K_d entre execuções"""
    table, spread = perturbation_check(ap3_configs[:3], G=1024)
    assert len(table) == 3
    assert (table["K_d"] > 0).all()
    assert table["chain_ok"].all()
    assert spread >= 1.0
    assert (table["r"] >= 4.0 / 1024).all()

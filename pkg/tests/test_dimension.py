import pytest
import sys
import os

import numpy as np

# Adiciona a raiz do projeto ao sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from demos import get_pattern, rough_from_relation
from dimension import box_dimension, content_surrogate, fourier_dimension
from errors import InputError
from models.configuration import ConstructionParams, WeightedConfiguration
from models.measure import GridMeasure
from models.patterns import RoughPattern
from sampler import build
from torus import cube

# Helpers
DYADIC = [2.0 ** -k for k in range(2, 7)]

def grid_points(g, d):
    axes = [(np.arange(g) + 0.5) / g] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)

# Tests
def test_single_point_has_dimension_zero():
    """Testa que um único ponto tem dimensão 0"""
    config = WeightedConfiguration.unit([[0.3, 0.7]])
    for method in ("slope", "minkowski"):
        assert box_dimension(config, DYADIC, method=method).value == pytest.approx(0.0, abs=0.05)

def test_full_square_has_dimension_two():
    """Testa que o quadrado cheio tem dimensão 2"""
    config = WeightedConfiguration.unit(grid_points(128, 2))
    estimate = box_dimension(config, DYADIC)
    assert estimate.value == pytest.approx(2.0, abs=0.05)
    assert estimate.kind == "box-slope"
    assert [row["count"] for row in estimate.table] == [16, 64, 256, 1024, 4096]

def test_full_cell_set_has_dimension_two():
    """Testa o conjunto de células cheio em T^2"""
    Z = RoughPattern.full(1, 2, 64)
    assert box_dimension(Z, DYADIC).value == pytest.approx(2.0, abs=0.05)

def test_segment_in_plane_has_dimension_one():
    """Testa que um segmento em T^2 tem dimensão 1"""
    t = (np.arange(4096) + 0.5) / 4096
    config = WeightedConfiguration.unit(np.stack([t, np.full_like(t, 0.3)], axis=1))
    assert box_dimension(config, DYADIC, method="minkowski").value == pytest.approx(1.0, abs=0.05)

def test_rasterized_plane_has_dimension_two():
    """Testa o plano x1 - 2 x2 + x3 = 0 rasterizado em T^3"""
    def plane(params):
        t1, t2 = params[:, 0], params[:, 1]
        return np.stack([t1, t2, 2 * t2 - t1], axis=1)

    Z = rough_from_relation(3, 1, 64, plane, [cube([0.5], 1.0), cube([0.5], 1.0)], claimed_alpha=2.0)
    scales = [2.0 ** -k for k in range(1, 6)]
    assert box_dimension(Z, scales).value == pytest.approx(2.0, abs=0.15)

def test_box_dimension_input_errors():
    """Testa poucas escalas, escala fora de (0, 1] e conjunto vazio"""
    config = WeightedConfiguration.unit([[0.5]])
    with pytest.raises(InputError):
        box_dimension(config, DYADIC[:3])
    with pytest.raises(InputError):
        box_dimension(config, [2.0] + DYADIC)
    with pytest.raises(InputError):
        box_dimension(WeightedConfiguration.unit(np.empty((0, 1))), DYADIC)
    with pytest.raises(InputError):
        box_dimension(config, DYADIC, method="median")

def test_content_surrogate():
    """Testa N r^alpha"""
    config = WeightedConfiguration.unit(np.random.default_rng(0).random((100, 1)), radius_r=0.01)
    assert content_surrogate(config, 0.5) == pytest.approx(100 * 0.1)

def test_fourier_of_one_atom_is_zero():
    """Testa que um átomo tem |mu^| constante e dimensão 0"""
    dens = np.zeros(1024)
    dens[100] = 1024.0
    estimate = fourier_dimension(GridMeasure(1, 1024, dens))
    assert estimate.value == pytest.approx(0.0, abs=0.05)
    assert estimate.kind == "fourier"

def test_fourier_of_uniform_is_capped():
    """Testa que a densidade uniforme é limitada à dimensão ambiente com aviso"""
    estimate = fourier_dimension(GridMeasure(1, 1024, np.ones(1024)))
    assert estimate.value == 1.0
    assert any("capped" in note for note in estimate.notes)

def test_fourier_of_mollified_random_points():
    """Testa o expoente de decaimento de pontos aleatórios mollificados"""
    N, lam = 4096, 0.5
    r = N ** (-1.0 / lam)
    config = WeightedConfiguration.unit(np.random.default_rng(21).random((N, 1)), radius_r=r)
    estimate = fourier_dimension(config, sample_size=1024)
    assert 0.4 <= estimate.value <= 0.6

def test_fourier_input_errors():
    """Testa raio ausente e anéis além de Nyquist"""
    with pytest.raises(InputError):
        fourier_dimension(WeightedConfiguration.unit([[0.2], [0.4]]))
    with pytest.raises(InputError):
        fourier_dimension(GridMeasure(1, 64, np.ones(64)), j_range=range(1, 6))
    with pytest.raises(InputError):
        fourier_dimension(np.zeros((3, 1)))

@pytest.mark.parametrize("lam", [0.3, 0.45])
def test_constructed_configuration_dimension_balance(lam):
    """Testa caixas e Fourier perto de lambda numa configuração construída, com beta <= alpha + 0.1"""
    params = ConstructionParams(M=4096, lambda_=lam, seed=13)
    config = build(params, get_pattern("empty", n=2, d=1))
    r = config.radius_r
    assert config.N == 4096

    alpha_hat = box_dimension(config, [r * 2 ** k for k in range(5)], method="minkowski").value
    beta_hat = fourier_dimension(config, sample_size=1024).value

    assert alpha_hat == pytest.approx(lam, abs=0.1)
    assert beta_hat == pytest.approx(lam, abs=0.1)
    assert beta_hat <= alpha_hat + 0.1

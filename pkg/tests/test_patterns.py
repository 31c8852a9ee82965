import pytest
import sys
import os
from fractions import Fraction
from itertools import permutations

import numpy as np

# Adiciona a raiz do projeto ao sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from demos import ap3_surface, line, parabola
from errors import InputError, ResourceError
from models.configuration import WeightedConfiguration
from models.patterns import RoughPattern, TranslationalPattern
from models.torus import TorusPoint
from patterns import isosceles_functional, periodize, rough_tuples, thickened_membership, violation_scan
from torus import tdist_many

# Helpers
def constant_targets(value):
    """Alvo constante T(x) = {value}"""
    return lambda p: np.full((p.shape[0], 1, 1), value)

def ap3_plain():
    """Padrão x3 - 2 x2 = -x1 sem periodização"""
    return TranslationalPattern(3, 1, Fraction(2), lambda p: -p[:, :1, :], lipschitz_L=1.0, pattern_id="ap3-plain")

def cell_distance(x, coords, g):
    """Distância no toro de x a uma célula fechada, calculada direto"""
    gaps = []
    for xi, c in zip(x, coords):
        lo, hi = c / g, (c + 1) / g
        gaps.append(min(max(0.0, lo - (xi + k), (xi + k) - hi) for k in (-1, 0, 1)))
    return float(np.sqrt(np.sum(np.square(gaps))))

def naive_scan(points, relation, n, separation):
    """Enumeração ingênua de todas as tuplas ordenadas"""
    found = []
    for idx in permutations(range(points.shape[0]), n):
        pts = points[list(idx)]
        if any(tdist_many(pts[i], pts[j]) < separation for i in range(n) for j in range(i + 1, n)):
            continue
        if relation(pts):
            found.append(tuple(idx))
    return sorted(found)

def random_rough(seed):
    """Padrão rugoso aleatório com 10 células numa grade 8 x 8"""
    coords = np.random.default_rng(seed).integers(0, 8, size=(10, 2))
    return RoughPattern.from_cell_coords(2, 1, 8, coords, pattern_id="random")

def sparse_rough(points, rng):
    """Padrão rugoso de ordem 3 com duas tuplas plantadas e duas células aleatórias"""
    planted = [points[rng.choice(points.shape[0], 3, replace=False), 0] for _ in range(2)]
    cells = RoughPattern.from_points(3, 1, 32, np.array(planted)).cell_coords()
    extra = rng.integers(0, 32, size=(2, 3))
    return RoughPattern.from_cell_coords(3, 1, 32, np.concatenate([cells, extra]), pattern_id="sparse")

# Tests
def test_thickened_membership_empty_pattern():
    """Testa que o padrão vazio não contém nenhuma tupla"""
    Z = RoughPattern.empty_pattern(2, 1)
    assert thickened_membership(Z, [TorusPoint.of(0.1), TorusPoint.of(0.2)], 0.5) is False

def test_thickened_membership_occupied_cell():
    """Testa que uma tupla numa célula ocupada pertence com eps = 0"""
    Z = RoughPattern.from_points(2, 1, 4, np.array([[0.3, 0.6]]))
    assert thickened_membership(Z, [TorusPoint.of(0.3), TorusPoint.of(0.6)], 0.0)
    assert not thickened_membership(Z, [TorusPoint.of(0.8), TorusPoint.of(0.1)], 0.0)

def test_thickened_membership_dimension_mismatch():
    """Testa erro quando a tupla não tem dimensão dn"""
    Z = RoughPattern.full(2, 1, 4)
    with pytest.raises(InputError):
        thickened_membership(Z, [TorusPoint.of(0.1)], 0.0)

def test_thickened_membership_matches_brute_force():
    """Testa 100 tuplas aleatórias contra a varredura de todas as células"""
    Z = random_rough(3)
    rng = np.random.default_rng(11)
    cells = Z.cell_coords()
    for _ in range(100):
        x = rng.random(2)
        expected = min(cell_distance(x, c, 8) for c in cells) <= 0.03
        assert thickened_membership(Z, [x[:1], x[1:]], 0.03) == expected

def test_rough_pattern_requires_cells():
    """Testa que um padrão rugoso sem células precisa ser marcado como vazio"""
    with pytest.raises(InputError):
        RoughPattern(2, 1, 4, np.empty(0, dtype=np.int64))
    with pytest.raises(InputError):
        RoughPattern.full(2, 1, 1)

def test_periodize_unit_period_unchanged():
    """Testa que m = 1 não altera os alvos"""
    P = TranslationalPattern(3, 1, Fraction(2), constant_targets(0.1), lipschitz_L=0.0)
    assert periodize(P).target_set((0.4,)) == P.target_set((0.4,))

def test_periodize_half_period():
    """Testa o fecho por 1/2: {0.1} vira {0.1, 0.6}"""
    P = periodize(TranslationalPattern(3, 1, Fraction(2), constant_targets(0.1), lipschitz_L=0.0, period_m=2))
    targets = [t[0] for t in P.target_set((0.4,))]
    assert targets == pytest.approx([0.1, 0.6])

def test_periodize_third_period():
    """Testa o fecho por 1/3 com espaçamento 1/3"""
    P = periodize(TranslationalPattern(3, 1, Fraction(1), constant_targets(0.05), lipschitz_L=0.0, period_m=3))
    targets = [t[0] for t in P.target_set((0.4,))]
    assert targets == pytest.approx([0.05, 0.05 + 1 / 3, 0.05 + 2 / 3])

def test_periodize_idempotent():
    """Testa que periodizar duas vezes não muda nada"""
    P = periodize(TranslationalPattern(3, 1, Fraction(2), constant_targets(0.1), lipschitz_L=0.0, period_m=2))
    assert periodize(P) is P

def test_translational_period_must_clear_denominator():
    """Testa que m * a precisa ser inteiro"""
    with pytest.raises(InputError):
        TranslationalPattern(3, 1, Fraction(1, 3), constant_targets(0.0), lipschitz_L=0.0, period_m=2)
    with pytest.raises(InputError):
        TranslationalPattern(3, 1, Fraction(0), constant_targets(0.0), lipschitz_L=0.0)

def test_violation_scan_single_point():
    """Testa que um único ponto não forma tuplas distintas"""
    config = WeightedConfiguration.unit(np.array([0.5]))
    assert violation_scan(config, ap3_plain(), 0.01, 0.0) == []

def test_violation_scan_planted_progression():
    """Testa que a progressão (0.1, 0.2, 0.3) é encontrada com margem 0"""
    config = WeightedConfiguration.unit(np.array([0.1, 0.2, 0.3]))
    assert violation_scan(config, ap3_plain(), 0.01, 0.0) == [(0, 1, 2), (2, 1, 0)]

def test_violation_scan_rejects_bad_arguments():
    """Testa erros de entrada na varredura"""
    config = WeightedConfiguration.unit(np.array([0.1, 0.2, 0.3]))
    with pytest.raises(InputError):
        violation_scan(config, ap3_plain(), 0.01, -1.0)
    with pytest.raises(InputError):
        violation_scan(config, ap3_plain(), 0.0, 0.0)

@pytest.mark.parametrize("seed", range(100))
def test_violation_scan_translational_matches_oracle(seed):
    """Testa a varredura translacional contra o laço ingênuo"""
    points = np.random.default_rng(seed).random((12, 1))
    config = WeightedConfiguration.unit(points)

    def relation(pts):
        v = pts[2, 0] - 2 * pts[1, 0] + pts[0, 0]
        return abs(v - np.round(v)) <= 0.05

    assert violation_scan(config, ap3_plain(), 1e-3, 0.05) == naive_scan(points, relation, 3, 1e-3)

@pytest.mark.parametrize("seed", range(100))
def test_violation_scan_rough_matches_oracle(seed):
    """Testa a varredura rugosa contra o laço ingênuo"""
    Z = random_rough(seed)
    points = np.random.default_rng(1000 + seed).random((16, 1))
    config = WeightedConfiguration.unit(points)

    def relation(pts):
        return thickened_membership(Z, [pts[0], pts[1]], 0.02)

    expected = naive_scan(points, relation, 2, 1e-3)
    assert violation_scan(config, Z, 1e-3, 0.02) == expected

@pytest.mark.parametrize("seed", range(100))
def test_violation_scan_surface_matches_oracle(seed):
    """Testa a varredura de superfície contra o laço ingênuo dentro das janelas"""
    P = ap3_surface()
    rng = np.random.default_rng(seed)
    blocks = [c.center.as_array() + (rng.random((5, 1)) - 0.5) * c.sidelength for c in P.domain_cubes]
    points = np.concatenate(blocks + [rng.random((4, 1))])
    config = WeightedConfiguration.unit(points)
    inside = [c.contains(points) for c in P.domain_cubes]

    expected = []
    for idx in permutations(range(points.shape[0]), 3):
        if not all(inside[i][k] for i, k in enumerate(idx)):
            continue
        x1, x2, x3 = (points[k, 0] for k in idx)
        if tdist_many(np.array([x3]), np.array([2 * x2 - x1]))[()] <= 0.01:
            expected.append(idx)
    assert violation_scan(config, P, 1e-3, 0.01) == sorted(expected)

@pytest.mark.parametrize("seed", range(20))
def test_rough_tuples_pruned_matches_full(seed):
    """Testa que a poda por projeções devolve as mesmas tuplas que a enumeração completa"""
    rng = np.random.default_rng(seed)
    points = rng.random((20, 1))
    Z = sparse_rough(points, rng)

    full = rough_tuples(points, Z, 0.01, budget=10 ** 9)
    # orçamento abaixo de 20^3 força o caminho com poda
    pruned = rough_tuples(points, Z, 0.01, budget=20 ** 3 - 1)

    assert full.shape[0] >= 2
    assert sorted(map(tuple, pruned.tolist())) == sorted(map(tuple, full.tolist()))

def test_rough_tuples_budget_exhausted():
    """Testa ResourceError quando nem a poda cabe no orçamento"""
    rng = np.random.default_rng(0)
    points = rng.random((20, 1))
    Z = sparse_rough(points, rng)
    with pytest.raises(ResourceError):
        rough_tuples(points, Z, 0.01, budget=10)
    with pytest.raises(ResourceError):
        rough_tuples(points, RoughPattern.full(2, 1, 4), 0.0, budget=10)

def test_violation_scan_monotone_in_margin():
    """Testa que aumentar a margem só acrescenta violações"""
    points = np.random.default_rng(8).random((14, 1))
    config = WeightedConfiguration.unit(points)
    small = set(violation_scan(config, ap3_plain(), 1e-3, 0.01))
    large = set(violation_scan(config, ap3_plain(), 1e-3, 0.05))
    assert small <= large

def test_surface_and_translational_agree():
    """Testa que a mesma relação em duas representações dá o mesmo veredito"""
    P = ap3_surface()
    c1, c2, c3 = (c.center.coords[0] for c in P.domain_cubes)
    points = np.array([[c1], [c2], [2 * c2 - c1], [c1 + 0.004], [c3 - 0.006]])
    config = WeightedConfiguration.unit(points)
    surface = violation_scan(config, P, 1e-3, 0.001)
    inside = [c.contains(points) for c in P.domain_cubes]
    translational = [t for t in violation_scan(config, ap3_plain(), 1e-3, 0.001)
                     if all(inside[i][k] for i, k in enumerate(t))]
    assert surface == translational
    assert (0, 1, 2) in surface

def test_isosceles_functional_symmetry():
    """Testa F = 0 quando t1 = t3"""
    assert isosceles_functional(parabola, 0.7, 0.2, 0.7) == pytest.approx(0.0)

def test_isosceles_functional_line():
    """Testa F = 0 para pontos igualmente espaçados numa reta"""
    assert isosceles_functional(line, 0.1, 0.2, 0.3) == pytest.approx(0.0, abs=1e-15)

def test_isosceles_functional_parabola():
    """Testa F na parábola contra a conta direta"""
    t1, t2, t3 = 0.13, 0.42, 0.77
    direct = (t1 - t2) ** 2 + (t1 ** 2 - t2 ** 2) ** 2 - (t2 - t3) ** 2 - (t2 ** 2 - t3 ** 2) ** 2
    assert isosceles_functional(parabola, t1, t2, t3) == pytest.approx(direct)

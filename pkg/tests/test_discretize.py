import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voltlift.discretize import (build_component, component_to_csv,
                                 component_to_json, epsilon_k, observe,
                                 reconstructed_kernel)
from voltlift.kernelbasis import (DIFFUSION, DRIFT, DensitySegment,
                                  LiftingBasis, make_expsum_basis,
                                  make_tempered_fractional_basis)

EYE = np.eye(1)


def uniform_basis(lo=1.0, hi=2.0):
    seg = DensitySegment(lower=lo, upper=hi,
                         rho=lambda t: np.ones_like(np.asarray(t, float)),
                         Mb=lambda t: EYE, Ms=lambda t: EYE,
                         family="table", params={})
    return LiftingBasis(n=1, atoms=[], segments=[seg], closed_forms={})


def test_atoms_kept_exactly():
    basis = make_expsum_basis([(0.5, 2.0 * EYE, EYE), (4.0, EYE, 3.0 * EYE)])
    comp = build_component(basis, 2, theta_max=8.0)
    assert comp.size == 2
    np.testing.assert_allclose(comp.a, [0.5, 4.0])
    np.testing.assert_allclose(comp.w, [1.0, 1.0])
    np.testing.assert_allclose(comp.Mb[0], 2.0 * EYE)
    np.testing.assert_allclose(comp.Ms[1], 3.0 * EYE)


def test_cells_partition_and_nodes_inside():
    basis = make_tempered_fractional_basis(0.5, 0.75, 1.0, 1.0)
    comp = build_component(basis, 32, theta_max=100.0)
    assert np.all(comp.w > 0)
    assert np.all(comp.a >= comp.lo) and np.all(comp.a <= comp.hi)
    # cells tile [kappa, theta_max] without gaps
    order = np.argsort(comp.lo)
    np.testing.assert_allclose(comp.lo[order][1:], comp.hi[order][:-1],
                               rtol=1e-12)
    assert comp.lo[order][0] == pytest.approx(1.0)
    assert comp.hi[order][-1] == pytest.approx(100.0)


def test_reconstruction_exact_for_atomic_basis():
    basis = make_expsum_basis([(1.0, EYE, EYE), (3.0, 2.0 * EYE, EYE)])
    comp = build_component(basis, 2, theta_max=10.0)
    for t in (0.0, 0.7, 2.0):
        want = np.exp(-t) + 2.0 * np.exp(-3.0 * t)
        assert reconstructed_kernel(comp, DRIFT, t)[0, 0] == pytest.approx(
            want, rel=1e-14)


def test_epsilon_zero_for_pure_expsum():
    basis = make_expsum_basis([(1.0, EYE, EYE), (3.0, EYE, EYE)])
    comp = build_component(basis, 2, theta_max=10.0)
    assert epsilon_k(basis, comp) == 0.0


def test_epsilon_displacement_oracle_single_uniform_cell():
    # One cell on [1, 2] with unit density: the mean node is 1.5 and the
    # displacement term is max(0.5/2, 0.5/3) = 1/4; constant matrices and
    # a fully covered support contribute nothing else.
    basis = uniform_basis(1.0, 2.0)
    comp = build_component(basis, 1, theta_max=2.0)
    assert comp.size == 1
    assert comp.a[0] == pytest.approx(1.5, rel=1e-10)
    assert comp.w[0] == pytest.approx(1.0, rel=1e-10)
    assert epsilon_k(basis, comp) == pytest.approx(0.25, abs=1e-8)


def test_epsilon_requires_matching_basis():
    b1 = make_expsum_basis([(1.0, EYE, EYE)])
    b2 = make_expsum_basis([(1.0, EYE, EYE)])
    comp = build_component(b1, 1, theta_max=2.0)
    with pytest.raises(ValueError):
        epsilon_k(b2, comp)


def test_build_component_validates_arguments():
    basis = make_tempered_fractional_basis(0.5, 0.75, 1.0, 1.0)
    with pytest.raises(ValueError):
        build_component(basis, 0)
    with pytest.raises(ValueError):
        build_component(basis, 8, theta_max=0.5)
    two_atoms = make_expsum_basis([(1.0, EYE, EYE), (2.0, EYE, EYE)])
    with pytest.raises(ValueError):
        build_component(two_atoms, 1, theta_max=10.0)


def test_observe_shapes_and_values():
    basis = make_expsum_basis([(1.0, EYE, EYE), (3.0, EYE, EYE)])
    comp = build_component(basis, 2, theta_max=10.0)
    z = np.array([[2.0], [1.0]])
    x, nh, nv = observe(comp, z)
    assert x[0] == pytest.approx(3.0)
    assert nh == pytest.approx(np.sqrt(4.0 / np.sqrt(2.0) + 1.0 / 2.0))
    assert nv == pytest.approx(np.sqrt(4.0 * np.sqrt(2.0) + 1.0 * 2.0))
    batch = np.stack([z, 2.0 * z])
    xb, nhb, nvb = observe(comp, batch)
    assert xb.shape == (2, 1) and nhb.shape == (2,)
    assert nhb[1] == pytest.approx(2.0 * nh)
    with pytest.raises(ValueError):
        observe(comp, np.zeros((3, 1)))


def test_serialization_round_trips():
    basis = make_tempered_fractional_basis(0.5, 0.75, 1.0, 1.0)
    comp = build_component(basis, 8, theta_max=50.0)
    doc = json.loads(component_to_json(comp))
    assert len(doc["cells"]) == comp.size
    csv_text = component_to_csv(comp)
    assert csv_text.splitlines()[0] == "i,a,w,hH,hV"
    assert len(csv_text.splitlines()) == comp.size + 1


# Cauchy-Schwarz ties the norm weights to the cell mass:
# hH * hV >= w^2 and w / sqrt(1 + hi) <= hH <= w / sqrt(1 + lo).
@settings(max_examples=15, deadline=None)
@given(alpha_b=st.floats(0.3, 0.8), kappa=st.floats(0.5, 3.0),
       k=st.integers(2, 24))
def test_cell_weight_inequalities(alpha_b, kappa, k):
    basis = make_tempered_fractional_basis(alpha_b, 0.75, kappa, kappa)
    comp = build_component(basis, k, theta_max=kappa + 40.0, quad_tol=1e-9)
    # near-equality cases sit on top of float cancellation in (theta - kappa)
    # inside the sliver cell, so the comparison needs a loose slack
    slack = 1.0 + 1e-4
    assert np.all(comp.hH * comp.hV * slack >= comp.w ** 2)
    assert np.all(comp.hH <= slack * comp.w / np.sqrt(1.0 + comp.lo))
    assert np.all(comp.hH * slack >= comp.w / np.sqrt(1.0 + comp.hi))


def test_epsilon_strictly_decreasing_on_refinement():
    basis = make_tempered_fractional_basis(0.5, 0.75, 1.0, 1.0)
    eps = [epsilon_k(basis, build_component(basis, k, theta_max=200.0))
           for k in (4, 8, 16)]
    assert eps[0] > eps[1] > eps[2]

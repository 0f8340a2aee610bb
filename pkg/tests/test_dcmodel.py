import csv

import numpy as np
import pytest

from blindfdi.casefile import parse_case
from blindfdi.dcmodel import (
    FLOW_FROM, FLOW_TO, INJECTION, build_jacobian, evaluate, export_csv, injection_sensitivity,
    operating_point, reduced_susceptance,
)
from blindfdi.errors import ContractError

from conftest import TRIANGLE, TWO_BUS


def test_two_bus_jacobian():
    jac = build_jacobian(parse_case(TWO_BUS))
    # P12 = (theta1 - theta2)/x with theta1 = 0
    np.testing.assert_allclose(jac.H[:, 0], [-10.0, 10.0, -10.0, 10.0])
    assert jac.sensor_meta == ((FLOW_FROM, 1), (FLOW_TO, 1), (INJECTION, 1), (INJECTION, 2))
    assert jac.state_meta == (2,) and jac.psi == 3


def test_triangle_against_hand_built_b():
    case = parse_case(TRIANGLE)
    jac = build_jacobian(case)
    B = np.array([[9.0, -5.0, -4.0], [-5.0, 7.0, -2.0], [-4.0, -2.0, 6.0]])
    np.testing.assert_allclose(jac.H[jac.rows(INJECTION)], B[:, 1:])
    np.testing.assert_allclose(reduced_susceptance(jac), B[1:, 1:])
    flows = jac.H[jac.rows(FLOW_FROM)]
    np.testing.assert_allclose(flows, [[-5, 0], [0, -4], [2, -2]])
    np.testing.assert_allclose(jac.H[jac.rows(FLOW_TO)], -flows)
    x = operating_point(case, jac)
    np.testing.assert_allclose(B[1:, 1:] @ x, [0.1, -0.4])
    np.testing.assert_allclose(injection_sensitivity(jac) @ B[1:, 1:], np.eye(2), atol=1e-12)


@pytest.mark.parametrize("name,m,n", [("case14", 54, 13), ("case30", 112, 29), ("case57", 217, 56)])
def test_fixture_jacobians(systems, name, m, n):
    case, jac, x0 = systems[name]
    assert jac.H.shape == (m, n)
    assert np.linalg.matrix_rank(jac.H) == n
    assert jac.psi == m - n
    assert not jac.H.flags.writeable
    # injections are incidence-weighted sums of from-end flows
    z = evaluate(jac, x0)
    inj = z[jac.rows(INJECTION)]
    np.testing.assert_allclose(inj.sum(), 0.0, atol=1e-9)  # lossless network
    p = np.array([b.p_injection for b in case.buses]) / case.base_mva
    ref = [i for i, b in enumerate(case.buses) if b.id == case.reference_bus]
    keep = np.ones(len(p), bool)
    keep[ref] = False
    np.testing.assert_allclose(inj[keep], p[keep], atol=1e-10)


def test_evaluate_rows_and_contract(ieee14, rng):
    _, jac, _ = ieee14
    X = rng.standard_normal((5, jac.n))
    np.testing.assert_allclose(evaluate(jac, X), X @ jac.H.T)
    with pytest.raises(ContractError):
        evaluate(jac, np.zeros(jac.n + 1))


def test_export_csv(tmp_path):
    jac = build_jacobian(parse_case(TRIANGLE))
    path = tmp_path / "h.csv"
    export_csv(jac, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["kind", "id", "theta_2", "theta_3"]
    assert rows[-1][:2] == [INJECTION, "3"]
    np.testing.assert_allclose(np.array([r[2:] for r in rows[1:]], float), jac.H)

"""DC measurement Jacobian and noiseless measurement evaluation.

States are the voltage angles (radians) of every non-reference bus; the
reference angle is pinned at zero and its column dropped. Measurements are
per-unit active power: a flow meter at each end of every live branch and an
injection meter at every bus.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .casefile import GridCase
from .errors import ContractError, ObservabilityError

FLOW_FROM, FLOW_TO, INJECTION = "flow_from", "flow_to", "injection"


@dataclass(frozen=True, eq=False)
class DcJacobian:
    H: np.ndarray
    sensor_meta: tuple[tuple[str, int], ...]
    state_meta: tuple[int, ...]
    reference_bus: int
    bus_ids: tuple[int, ...] = field(default=())

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def psi(self) -> int:
        """Degrees of freedom of the WSSE statistic."""
        return self.m - self.n

    def rows(self, kind: str) -> np.ndarray:
        return np.array([i for i, (k, _) in enumerate(self.sensor_meta) if k == kind], dtype=int)

    def sensor_labels(self) -> list[str]:
        return [f"{kind}:{ident}" for kind, ident in self.sensor_meta]


def build_jacobian(case: GridCase) -> DcJacobian:
    """Assemble H with rows ordered flow_from (branch order), flow_to, injection (bus order)."""
    index = case.bus_index
    states = [b.id for b in case.buses if b.id != case.reference_bus]
    col = {bus: j for j, bus in enumerate(states)}
    live = [(k, br) for k, br in enumerate(case.branches) if br.in_service]

    flows = np.zeros((len(live), len(states)))
    for row, (_, br) in enumerate(live):
        y = 1.0 / br.reactance_x
        if br.from_bus in col:
            flows[row, col[br.from_bus]] += y
        if br.to_bus in col:
            flows[row, col[br.to_bus]] -= y

    incidence = np.zeros((len(case.buses), len(live)))
    for row, (_, br) in enumerate(live):
        incidence[index[br.from_bus], row] += 1.0
        incidence[index[br.to_bus], row] -= 1.0

    H = np.vstack([flows, -flows, incidence @ flows])
    meta = (
        [(FLOW_FROM, k + 1) for k, _ in live]
        + [(FLOW_TO, k + 1) for k, _ in live]
        + [(INJECTION, b.id) for b in case.buses]
    )
    if np.linalg.matrix_rank(H) < len(states):
        raise ObservabilityError("measurement Jacobian is rank deficient")
    H.setflags(write=False)
    return DcJacobian(H, tuple(meta), tuple(states), case.reference_bus, tuple(b.id for b in case.buses))


def evaluate(jac: DcJacobian, x) -> np.ndarray:
    """Noiseless measurements ``H @ x``; ``x`` may be one state vector or rows of states."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != jac.n:
        raise ContractError(f"state has length {x.shape[-1]}, expected {jac.n}")
    return x @ jac.H.T


def reduced_susceptance(jac: DcJacobian) -> np.ndarray:
    """B restricted to non-reference buses; its rows are the injection rows of H."""
    inj = jac.rows(INJECTION)
    keep = [r for r, (_, bus) in zip(inj, (jac.sensor_meta[i] for i in inj)) if bus != jac.reference_bus]
    return jac.H[keep]


def injection_sensitivity(jac: DcJacobian) -> np.ndarray:
    """Angle response to per-unit injections at the non-reference buses (B^-1)."""
    return np.linalg.inv(reduced_susceptance(jac))


def operating_point(case: GridCase, jac: DcJacobian | None = None) -> np.ndarray:
    """DC power-flow angles for the case's scheduled injections; the reference bus is slack."""
    jac = jac or build_jacobian(case)
    p = {b.id: b.p_injection / case.base_mva for b in case.buses}
    rhs = np.array([p[bus] for bus in jac.state_meta])
    return np.linalg.solve(reduced_susceptance(jac), rhs)


def export_csv(jac: DcJacobian, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "id", *(f"theta_{b}" for b in jac.state_meta)])
        for (kind, ident), row in zip(jac.sensor_meta, jac.H):
            writer.writerow([kind, ident, *(repr(float(v)) for v in row)])

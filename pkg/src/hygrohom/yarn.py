"""Yarn fibre directions from a potential-flow solve along each yarn.

A potential ``phi`` is solved on the yarn's own sub-mesh with ``phi = 0`` on
the inlet face set, ``phi = 1`` on the outlet face set and zero flux
elsewhere.  The normalised gradient of ``phi`` (order-1 basis, hence
constant per element) is the local fibre axis.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from hygrohom.errors import SolverError, YarnFlowError
from hygrohom.fe.assembly import assemble_conductivity
from hygrohom.fe.saddle import SpdFactor
from hygrohom.fe.space import function_space
from hygrohom.mesh import Mesh

__all__ = ["DirectionField", "solve_yarn_directions", "solve_all_yarn_directions"]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DirectionField:
    """Unit fibre directions on the elements of one yarn phase."""

    phase: int
    elements: np.ndarray  # parent element ids, mesh order
    vectors: np.ndarray  # (n_elems, 3) unit vectors
    potential: np.ndarray  # nodal phi on the yarn sub-mesh
    node_map: np.ndarray  # sub-mesh node -> parent node
    inlet_flux: float
    outlet_flux: float

    def at_quadrature(self, nq: int) -> np.ndarray:
        """(n_elems, nq, 3) directions, one per quadrature point."""
        return np.repeat(self.vectors[:, None, :], nq, axis=1)

    def nodal_potential(self, n_nodes: int) -> np.ndarray:
        """Potential on the parent mesh nodes (NaN outside the yarn)."""
        out = np.full(n_nodes, np.nan)
        out[self.node_map] = self.potential
        return out

    def element_vectors(self, n_elements: int) -> np.ndarray:
        """Directions on the parent mesh elements (zero outside the yarn)."""
        out = np.zeros((n_elements, 3))
        out[self.elements] = self.vectors
        return out


def _components(sub: Mesh) -> tuple[int, np.ndarray]:
    t = sub.tets
    rows = np.repeat(np.arange(len(t)), 4)
    inc = sp.csr_matrix((np.ones(t.size), (rows, t.ravel())), shape=(len(t), sub.n_nodes))
    return connected_components(inc.T @ inc, directed=False)


def solve_yarn_directions(mesh: Mesh, yarn_phase, inlet: str, outlet: str) -> DirectionField:
    """Potential-flow direction field for one yarn phase.

    Raises
    ------
    YarnFlowError
        If the yarn is disconnected from its inlet or outlet, the face sets
        are empty, or the gradient vanishes in an element.
    """
    tag = mesh.phase_tag(yarn_phase)
    mask = mesh.phases == tag
    if not mask.any():
        raise YarnFlowError(f"phase {mesh.phase_label(tag)} has no elements")
    sub, node_map, elems = mesh.submesh(mask)
    inlet_nodes = np.unique(sub.face_set(inlet)) if inlet in sub.face_sets else np.zeros(0, dtype=np.int64)
    outlet_nodes = np.unique(sub.face_set(outlet)) if outlet in sub.face_sets else np.zeros(0, dtype=np.int64)
    for name, nodes in ((inlet, inlet_nodes), (outlet, outlet_nodes)):
        if len(nodes) == 0:
            raise YarnFlowError(f"face set {name!r} has no faces on the boundary of phase {mesh.phase_label(tag)}")
    if np.intersect1d(inlet_nodes, outlet_nodes).size:
        raise YarnFlowError(f"inlet {inlet!r} and outlet {outlet!r} share nodes")

    n_comp, labels = _components(sub)
    for c in range(n_comp):
        has_in = np.isin(inlet_nodes, np.where(labels == c)[0]).any()
        has_out = np.isin(outlet_nodes, np.where(labels == c)[0]).any()
        if not (has_in and has_out):
            raise YarnFlowError(
                f"yarn {mesh.phase_label(tag)} is disconnected: component {c} of {n_comp} "
                f"({int(np.sum(labels == c))} nodes) does not reach both inlet and outlet; "
                "the potential problem is singular"
            )

    K = assemble_conductivity(sub, {tag: 1.0}, order=1)
    phi = np.zeros(sub.n_nodes)
    phi[outlet_nodes] = 1.0
    fixed = np.zeros(sub.n_nodes, dtype=bool)
    fixed[inlet_nodes] = fixed[outlet_nodes] = True
    free = ~fixed
    Kff = K[free][:, free]
    try:
        phi[free] = SpdFactor(Kff).solve(-(K[free][:, fixed] @ phi[fixed]))
    except SolverError as exc:
        raise YarnFlowError(f"potential solve failed for yarn {mesh.phase_label(tag)}: {exc}") from None

    reactions = K @ phi
    q_in = float(reactions[inlet_nodes].sum())
    q_out = float(reactions[outlet_nodes].sum())

    grad = function_space(sub, 1).gradient(phi)[:, 0, :]
    norm = np.linalg.norm(grad, axis=1)
    scale = np.median(norm) if len(norm) else 1.0
    bad = np.where(norm <= 1e-12 * max(scale, np.finfo(float).tiny))[0]
    if len(bad):
        raise YarnFlowError(
            f"degenerate yarn direction: zero potential gradient in element {int(elems[bad[0]])}"
            + (f" and {len(bad) - 1} more" if len(bad) > 1 else "")
        )
    log.debug("yarn %s: %d elements, inlet flux %.3e", mesh.phase_label(tag), len(elems), q_in)
    return DirectionField(tag, elems, grad / norm[:, None], phi, node_map, q_in, q_out)


def solve_all_yarn_directions(
    mesh: Mesh, yarns: Iterable[Sequence], workers: int = 1
) -> list[DirectionField]:
    """Solve several ``(phase, inlet, outlet)`` yarns, optionally in threads."""
    yarns = [tuple(y) for y in yarns]
    if workers <= 1 or len(yarns) <= 1:
        return [solve_yarn_directions(mesh, *y) for y in yarns]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda y: solve_yarn_directions(mesh, *y), yarns))

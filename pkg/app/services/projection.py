"""Pressure projection on the staggered (MAC) grid.

The discrete gradient ``G`` maps cell pressures to open faces and the
divergence is its negative transpose, so the Poisson operator ``G^T G`` is
assembled from the same stencils that measure the divergence afterwards.
Faces touching a solid cell or a wall keep their value (Neumann); the outflow
face sees a ghost pressure of zero (Dirichlet). Fluid pockets that never reach
the outflow have their pressure pinned at one cell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from app.core.metrics import PROJECTION_FAILURES
from app.models.grid import BuildingMask, Grid3

logger = logging.getLogger(__name__)

Side = Literal["lo", "hi"]


class ProjectionError(ArithmeticError):
    pass


@dataclass
class ProjectionResult:
    residual: float  # max |div| in lattice units after the correction
    iterations: int
    converged: bool
    pressure: np.ndarray


def divergence(u: np.ndarray, v: np.ndarray, w: np.ndarray, grid: Grid3) -> np.ndarray:
    """Face-flux divergence per cell (1/s)."""

    return (
        (u[1:, :, :] - u[:-1, :, :]) / grid.dx
        + (v[:, 1:, :] - v[:, :-1, :]) / grid.dy
        + (w[:, :, 1:] - w[:, :, :-1]) / grid.dz
    )


def max_divergence(
    u: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    mask: BuildingMask,
    u_ref: float,
) -> float:
    """Max-norm divergence over fluid cells in lattice units (``div * h_min / U_ref``)."""

    div = divergence(u, v, w, mask.grid)[mask.fluid]
    if div.size == 0:
        return 0.0
    return float(np.abs(div).max() * mask.grid.min_spacing / u_ref)


class PressureProjector:
    """Holds the Poisson operator (and its LU factors) for one geometry."""

    def __init__(
        self,
        mask: BuildingMask,
        outflow: tuple[int, Side] | None = None,
        method: Literal["direct", "jacobi"] = "direct",
        tolerance: float = 1e-4,
        max_iters: int = 400,
        omega: float = 6.0 / 7.0,
    ) -> None:
        self.mask = mask
        self.grid = mask.grid
        self.outflow = outflow
        self.method = method
        self.tolerance = tolerance
        self.max_iters = max_iters
        self.omega = omega

        fluid = mask.fluid
        self.n_fluid = int(fluid.sum())
        self.cell_id = np.full(self.grid.shape, -1, dtype=np.int64)
        self.cell_id[fluid] = np.arange(self.n_fluid)
        self._assemble()

    def _assemble(self) -> None:
        fluid = self.mask.fluid
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        data: list[np.ndarray] = []
        self.faces: list[tuple[int, tuple[np.ndarray, ...], slice]] = []
        dirichlet = np.zeros(self.n_fluid, dtype=bool)
        offset = 0

        for axis in range(3):
            n = self.grid.shape[axis]
            h = self.grid.spacing[axis]
            lower = [slice(None)] * 3
            upper = [slice(None)] * 3
            lower[axis] = slice(0, n - 1)
            upper[axis] = slice(1, n)
            open_faces = fluid[tuple(lower)] & fluid[tuple(upper)]
            left = np.nonzero(open_faces)
            right = list(left)
            right[axis] = left[axis] + 1
            face = tuple(right)  # face i+1 sits between cells i and i+1
            count = left[0].size
            face_rows = np.arange(offset, offset + count)
            rows += [face_rows, face_rows]
            cols += [self.cell_id[left], self.cell_id[tuple(right)]]
            data += [np.full(count, -1.0 / h), np.full(count, 1.0 / h)]
            self.faces.append((axis, face, slice(offset, offset + count)))
            offset += count

            if self.outflow is not None and self.outflow[0] == axis:
                side = self.outflow[1]
                edge = [slice(None)] * 3
                edge[axis] = n - 1 if side == "hi" else 0
                cells = np.nonzero(fluid[tuple(edge)])
                cell = list(cells)
                cell.insert(axis, np.full(cells[0].size, n - 1 if side == "hi" else 0))
                boundary_face = list(cell)
                boundary_face[axis] = np.full(cells[0].size, n if side == "hi" else 0)
                count = cells[0].size
                face_rows = np.arange(offset, offset + count)
                ids = self.cell_id[tuple(cell)]
                rows.append(face_rows)
                cols.append(ids)
                data.append(np.full(count, (-1.0 if side == "hi" else 1.0) / h))
                dirichlet[ids] = True
                self.faces.append((axis, tuple(boundary_face), slice(offset, offset + count)))
                offset += count

        self.n_faces = offset
        self.gradient = sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_fluid),
        )
        laplacian = (self.gradient.T @ self.gradient).tocsr()

        n_comp, labels = connected_components(laplacian, directed=False)
        touched = np.zeros(n_comp, dtype=bool)
        touched[labels[dirichlet]] = True
        pinned = []
        for comp in np.nonzero(~touched)[0]:
            pinned.append(int(np.nonzero(labels == comp)[0][0]))
        self.pinned = np.array(sorted(pinned), dtype=np.int64)
        keep = np.ones(self.n_fluid, dtype=bool)
        keep[self.pinned] = False
        self.unknowns = np.nonzero(keep)[0]
        self.operator = laplacian[self.unknowns][:, self.unknowns].tocsc()
        self._lu = None
        logger.debug(
            "Assembled pressure operator: %d fluid cells, %d open faces, %d pinned components",
            self.n_fluid,
            self.n_faces,
            len(self.pinned),
        )

    def _factor(self):
        if self._lu is None:
            self._lu = splu(self.operator)
        return self._lu

    def _solve(self, rhs: np.ndarray, lattice: float) -> tuple[np.ndarray, int, float]:
        if self.method == "direct":
            solution = self._factor().solve(rhs)
            residual = float(np.abs(rhs - self.operator @ solution).max(initial=0.0)) * lattice
            return solution, 1, residual

        diag = self.operator.diagonal()
        solution = np.zeros_like(rhs)
        residual = np.inf
        for iteration in range(1, self.max_iters + 1):
            r = rhs - self.operator @ solution
            residual = float(np.abs(r).max(initial=0.0)) * lattice
            if residual <= self.tolerance:
                return solution, iteration - 1, residual
            solution = solution + self.omega * r / diag
        r = rhs - self.operator @ solution
        residual = float(np.abs(r).max(initial=0.0)) * lattice
        return solution, self.max_iters, residual

    def project(
        self, u: np.ndarray, v: np.ndarray, w: np.ndarray, u_ref: float
    ) -> ProjectionResult:
        """Remove the divergent part of ``(u, v, w)`` in place."""

        lattice = self.grid.min_spacing / u_ref
        div = divergence(u, v, w, self.grid)[self.mask.fluid]
        pressure = np.zeros(self.n_fluid)
        iterations = 0
        if self.unknowns.size:
            rhs = -div[self.unknowns]
            solution, iterations, _ = self._solve(rhs, lattice)
            pressure[self.unknowns] = solution

        correction = self.gradient @ pressure
        components = (u, v, w)
        for axis, face, rows in self.faces:
            components[axis][face] -= correction[rows]

        residual = max_divergence(u, v, w, self.mask, u_ref)
        converged = residual <= self.tolerance
        if not converged:
            PROJECTION_FAILURES.inc()
            logger.warning(
                "Pressure projection stopped at residual %.3e after %d iterations (tolerance %.1e)",
                residual,
                iterations,
                self.tolerance,
            )
        field = np.zeros(self.grid.shape)
        field[self.mask.fluid] = pressure
        return ProjectionResult(residual, iterations, converged, field)


__all__ = [
    "PressureProjector",
    "ProjectionError",
    "ProjectionResult",
    "divergence",
    "max_divergence",
]

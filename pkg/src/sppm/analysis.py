"""Elastic homogenization, engineering constants, isotropy deviation and compression curves.

Tensors use engineering Voigt order (11, 22, 33, 23, 13, 12) with shear
strains as engineering strains, so the isotropic shear modulus sits on the
last three diagonal entries.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from sppm.voxel import VoxelGrid


class SingularSystem(ArithmeticError):
    pass


class SingularTensor(ArithmeticError):
    pass


class MonotoneViolation(ValueError):
    pass


@dataclass(frozen=True)
class BaseMaterial:
    E: float = 1.0
    nu: float = 0.3

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")


@dataclass(frozen=True, eq=False)
class ElasticTensor:
    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (6, 6):
            raise ValueError("stiffness must be 6x6")
        object.__setattr__(self, "C", C)

    def is_symmetric(self, rtol=1e-8) -> bool:
        scale = max(np.abs(self.C).max(), 1e-300)
        return bool(np.abs(self.C - self.C.T).max() <= rtol * scale)

    def is_psd(self, tol=1e-8) -> bool:
        w = np.linalg.eigvalsh(0.5 * (self.C + self.C.T))
        return bool(w.min() >= -tol * max(np.trace(self.C), 0.0))


def isotropic_tensor(E: float, nu: float) -> ElasticTensor:
    """Isotropic stiffness from Young's modulus and Poisson ratio."""
    BaseMaterial(E, nu)
    Eh = E / ((1 - 2 * nu) * (1 + nu))
    G = E / (2 * (1 + nu))
    C = np.zeros((6, 6))
    C[:3, :3] = Eh * nu
    C[np.arange(3), np.arange(3)] = Eh * (1 - nu)
    C[np.arange(3, 6), np.arange(3, 6)] = G
    return ElasticTensor(C)


def _strain_matrix(dN):
    """6x24 engineering strain-displacement matrix from shape-function gradients (8x3)."""
    B = np.zeros((6, 24))
    for a in range(8):
        dx, dy, dz = dN[a]
        c = 3 * a
        B[0, c] = dx
        B[1, c + 1] = dy
        B[2, c + 2] = dz
        B[3, c + 1], B[3, c + 2] = dz, dy
        B[4, c], B[4, c + 2] = dz, dx
        B[5, c], B[5, c + 1] = dy, dx
    return B


# local node order of the trilinear brick
HEX_CORNERS = np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                        (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)])


def hex8_stiffness(D: np.ndarray, size=(1.0, 1.0, 1.0)) -> np.ndarray:
    """24x24 stiffness of a trilinear brick with edge lengths ``size`` (2x2x2 Gauss)."""
    h = np.asarray(size, dtype=float)
    s = 2 * HEX_CORNERS - 1
    g = 1 / math.sqrt(3)
    K = np.zeros((24, 24))
    for xi in (-g, g):
        for eta in (-g, g):
            for zeta in (-g, g):
                p = np.array([xi, eta, zeta])
                # dN/dxi for N = prod(1 + s p) / 8, then chain rule to physical axes
                f = 1 + s * p
                dN = np.stack([s[:, 0] * f[:, 1] * f[:, 2],
                               s[:, 1] * f[:, 0] * f[:, 2],
                               s[:, 2] * f[:, 0] * f[:, 1]], axis=1) / 8 * (2 / h)
                B = _strain_matrix(dN)
                K += B.T @ D @ B * np.prod(h) / 8
    return K


def _unit_strain_displacements(size):
    """24x6 nodal displacements of the six unit macroscopic strains on one element."""
    x = HEX_CORNERS * np.asarray(size, dtype=float)
    U = np.zeros((24, 6))
    for case in range(6):
        eps = np.zeros((3, 3))
        if case < 3:
            eps[case, case] = 1.0
        else:
            i, j = [(1, 2), (0, 2), (0, 1)][case - 3]
            eps[i, j] = eps[j, i] = 0.5
        U[:, case] = (x @ eps.T).ravel()
    return U


def _element_dofs(shape):
    nx, ny, nz = shape
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    nodes = np.empty((nx, ny, nz, 8), dtype=np.int64)
    for a, (di, dj, dk) in enumerate(HEX_CORNERS):
        nodes[..., a] = (i + di) % nx + nx * (((j + dj) % ny) + ny * ((k + dk) % nz))
    return nodes


def _periodic_components(occ) -> int:
    """Number of face-connected solid components with periodic wrap."""
    shape = occ.shape
    idx = -np.ones(shape, dtype=np.int64)
    idx[occ] = np.arange(int(occ.sum()))
    rows, cols = [], []
    for axis in range(3):
        nb = np.roll(idx, -1, axis=axis)
        both = (idx >= 0) & (nb >= 0)
        rows.append(idx[both])
        cols.append(nb[both])
    n = int(occ.sum())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = sparse.coo_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(n, n))
    return connected_components(g, directed=False)[0]


@dataclass
class HomogenizationResult:
    tensor: ElasticTensor
    iterations: list
    residuals: list
    solid_fraction: float


def homogenize(grid, base: BaseMaterial = BaseMaterial(), rtol: float = 1e-6,
               maxiter: Optional[int] = None, preconditioner: str = "amg",
               full_output: bool = False):
    """Effective stiffness of a periodic voxel microstructure.

    Solid voxels become trilinear bricks, void voxels are left out, and the
    grid is treated as one period.  Opposite boundary nodes are the same
    unknown, and one node is pinned to remove rigid translation.  The six
    unit strain cases are solved by preconditioned CG to ``rtol`` and the
    stiffness is the energy average over the period.
    """
    occ = np.asarray(grid.occupancy if isinstance(grid, VoxelGrid) else grid, dtype=bool)
    pitch = np.broadcast_to(np.asarray(grid.pitch if isinstance(grid, VoxelGrid) else 1.0, float), (3,))
    if not occ.any():
        raise SingularSystem("grid has no solid voxels")
    if _periodic_components(occ) > 1:
        raise SingularSystem("solid phase is not one connected body")
    D = isotropic_tensor(base.E, base.nu).C
    Ke = hex8_stiffness(D, pitch)
    U0 = _unit_strain_displacements(pitch)

    nodes = _element_dofs(occ.shape)[occ]  # (Ne, 8)
    edof = (3 * nodes[:, :, None] + np.arange(3)).reshape(len(nodes), 24)
    n_dof = 3 * occ.size
    # compact numbering of dofs that touch solid, minus the pinned first node
    used = np.unique(edof)
    keep = np.full(n_dof, -1, dtype=np.int64)
    free = used[3:]
    keep[free] = np.arange(len(free))
    ld = keep[edof].astype(np.int32)

    rows = np.repeat(ld, 24, axis=1).ravel()
    cols = np.tile(ld, (1, 24)).ravel()
    vals = np.broadcast_to(Ke.ravel(), (len(ld), 576)).ravel()
    m = (rows >= 0) & (cols >= 0)
    K = sparse.csr_matrix((vals[m], (rows[m], cols[m])), shape=(len(free), len(free)))
    del rows, cols, vals, m
    K.sum_duplicates()

    fe = Ke @ U0  # (24, 6) element loads
    F = np.zeros((len(free), 6))
    for c in range(24):
        ok = ld[:, c] >= 0
        np.add.at(F, ld[ok, c], fe[c])

    M = _preconditioner(K, preconditioner)
    chi = np.zeros((len(free), 6))
    iters, resid = [], []
    for case in range(6):
        b = F[:, case]
        nb = np.linalg.norm(b)
        if nb == 0.0:
            iters.append(0)
            resid.append(0.0)
            continue
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = cg(K, b, rtol=rtol, atol=0.0, maxiter=maxiter or 20 * len(free), M=M, callback=cb)
        r = np.linalg.norm(b - K @ x) / nb
        if info != 0 or not np.isfinite(r) or r > 10 * rtol:
            raise SingularSystem(f"CG did not converge on load case {case} (residual {r:.3g})")
        chi[:, case] = x
        iters.append(count[0])
        resid.append(float(r))

    # element displacement fields u0 - chi, energy-averaged
    chi_full = np.zeros((n_dof, 6))
    chi_full[free] = chi
    ue = U0[None, :, :] - chi_full[edof]
    del chi_full
    C = np.einsum("eia,ij,ejb->ab", ue, Ke, ue, optimize=True) / (occ.size * np.prod(pitch))
    C = 0.5 * (C + C.T)
    result = ElasticTensor(C)
    if full_output:
        return HomogenizationResult(result, iters, resid, float(occ.mean()))
    return result


def _preconditioner(K, kind):
    if kind == "amg":
        import pyamg

        B = np.kron(np.ones((K.shape[0] // 3, 1)), np.eye(3))
        ml = pyamg.smoothed_aggregation_solver(K, B=B, max_coarse=500)
        return ml.aspreconditioner(cycle="V")
    if kind == "jacobi":
        from scipy.sparse.linalg import LinearOperator

        d = 1.0 / K.diagonal()
        return LinearOperator(K.shape, matvec=lambda v: d * v)
    if kind in (None, "none"):
        return None
    raise ValueError(f"unknown preconditioner {kind!r}")


def engineering_constants(C) -> tuple:
    """``(E_x, nu_xy)`` from the compliance ``S = C^-1``."""
    C = C.C if isinstance(C, ElasticTensor) else np.asarray(C, dtype=float)
    if np.linalg.cond(C) > 1e14:
        raise SingularTensor("stiffness tensor is singular")
    S = np.linalg.inv(C)
    return 1.0 / S[0, 0], -S[1, 0] / S[0, 0]


def _iso_distance(C, E, nu):
    return float(((isotropic_tensor(E, nu).C - C) ** 2).sum())


NU_BOUNDS = (-1.0 + 1e-9, 0.5 - 1e-9)


def isotropy_deviation(C, E_max: float, grid_size: int = 64, full_output: bool = False):
    """Smallest squared Frobenius distance from ``C`` to the isotropic family.

    Coarse grid over ``0 < E < E_max`` and ``-1 < nu < 0.5``, then a bounded
    Nelder-Mead refinement from the best grid point.
    """
    if not E_max > 0:
        raise ValueError("E_max must be positive")
    C = C.C if isinstance(C, ElasticTensor) else np.asarray(C, dtype=float)
    Es = (np.arange(grid_size) + 0.5) * E_max / grid_size
    nus = NU_BOUNDS[0] + (np.arange(grid_size) + 0.5) * (NU_BOUNDS[1] - NU_BOUNDS[0]) / grid_size
    vals = iso_grid_scan(C, Es, nus)
    a, b = np.unravel_index(int(np.argmin(vals)), vals.shape)

    def obj(p):
        E, nu = p
        if not (0.0 <= E <= E_max and NU_BOUNDS[0] <= nu <= NU_BOUNDS[1]):
            return np.inf
        if E == 0.0:
            return float((C ** 2).sum())
        return _iso_distance(C, E, nu)

    res = minimize(obj, [Es[a], nus[b]], method="Nelder-Mead",
                   bounds=[(0.0, E_max), NU_BOUNDS],
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    best = min(float(res.fun), float(vals[a, b]))
    if full_output:
        return best, tuple(res.x)
    return best


def iso_grid_scan(C, Es, nus) -> np.ndarray:
    """Squared distance from ``C`` to ``isotropic_tensor(E, nu)`` on a grid."""
    C = np.asarray(C, dtype=float)
    nus = np.asarray(nus, dtype=float)
    # the family is linear in E: C_iso = E A(nu)
    A = np.stack([isotropic_tensor(1.0, nu).C for nu in nus])  # (m, 6, 6)
    AA = (A * A).sum(axis=(1, 2))
    AC = (A * C).sum(axis=(1, 2))
    CC = (C * C).sum()
    Es = np.asarray(Es, dtype=float)
    return Es[:, None] ** 2 * AA[None, :] - 2 * Es[:, None] * AC[None, :] + CC


@dataclass
class CompressionCurve:
    displacement: np.ndarray  # mm
    force: np.ndarray  # N
    angle: float = 0.0  # radians

    def __post_init__(self):
        self.displacement = np.asarray(self.displacement, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        if self.displacement.shape != self.force.shape or self.displacement.ndim != 1:
            raise ValueError("displacement and force must be 1-D of equal length")
        if len(self.displacement) < 2:
            raise ValueError("need at least two samples")
        if (np.diff(self.displacement) < 0).any():
            raise MonotoneViolation("displacement decreases")


@dataclass(frozen=True)
class CurveMetrics:
    yield_strength: float  # MPa
    effective_displacement: float  # mm
    energy: float  # J
    yield_index: int


def yield_index(force, drop: float = 0.95) -> int:
    """Index of the largest force before the first sample below ``drop`` times the running maximum."""
    f = np.asarray(force, dtype=float)
    run = np.maximum.accumulate(f)
    below = np.flatnonzero(f < drop * run)
    end = below[0] if len(below) else len(f)
    return int(np.argmax(f[:end]))


def analyze_compression_curve(curve: CompressionCurve, area_mm2: float, drop: float = 0.95) -> CurveMetrics:
    """Yield strength, effective displacement and absorbed energy up to yield.

    Energy is the trapezoidal integral of ``F cos(alpha)`` over displacement,
    converted from N mm to J.
    """
    if not area_mm2 > 0:
        raise ValueError("cross-section area must be positive")
    if not isinstance(curve, CompressionCurve):
        curve = CompressionCurve(*curve)
    s, f = curve.displacement, curve.force
    if not f.any():
        return CurveMetrics(0.0, 0.0, 0.0, 0)
    k = yield_index(f, drop)
    w = f[: k + 1] * math.cos(curve.angle)
    energy = float(np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(s[: k + 1]))) / 1000.0
    return CurveMetrics(float(f[k]) / area_mm2, float(s[k]), energy, k)


def read_curve_csv(path, angle: float = 0.0) -> CompressionCurve:
    """Two-column CSV (displacement mm, force N); a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise
    a = np.array(rows, dtype=float).reshape(-1, 2)
    return CompressionCurve(a[:, 0], a[:, 1], angle)


SWEEP_COLUMNS = ("omega", "mu", "target", "seed", "porosity", "E_x", "nu_xy", "xi", "status")


def sweep(specs: Sequence, resolution: int = 32, base: BaseMaterial = BaseMaterial(),
          model=None) -> list:
    """Generate, homogenize and summarize each spec; failures become rows with a status message."""
    from sppm.designer import generate_unit

    rows = []
    for spec in specs:
        row = {"omega": spec.omega, "mu": spec.mu, "target": spec.target_porosity,
               "seed": spec.seed, "porosity": "", "E_x": "", "nu_xy": "", "xi": "", "status": "ok"}
        try:
            unit = generate_unit(spec, model=model)
            grid = unit.voxelize(resolution)
            C = homogenize(grid, base)
            Ex, nu = engineering_constants(C)
            row.update(porosity=round(1.0 - float(grid.occupancy.mean()), 6), E_x=round(Ex, 8),
                       nu_xy=round(nu, 8), xi=round(isotropy_deviation(C, base.E), 10))
        except Exception as exc:  # recorded, the sweep goes on
            row["status"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def format_csv(rows, columns=SWEEP_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()

"""Factor graph assembly and iterative sparse least squares.

Every factor contributes whitened rows ``H dx = z - h(x)`` where ``H`` is the
Jacobian of the prediction ``h``. The stacked system is solved through its
normal equations with :mod:`msam.sparse_cholesky`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from msam import models
from msam.core import LandmarkId, Pose2, PoseId, StateVector, VarId, wrap_angles
from msam.errors import (
    AssemblyError,
    InvalidInputError,
    NonConvergenceError,
    SingularSystemError,
    VariableLookupError,
)
from msam.models import WheelOdometry
from msam.sparse_cholesky import NotPositiveDefiniteError, SparseCholesky

log = logging.getLogger(__name__)

MAX_DAMPING = 1e8
MIN_DAMPING = 1e-6


@dataclass(frozen=True)
class PriorFactor:
    var: PoseId
    value: Pose2
    sigma: tuple[float, float, float]

    dim = 3


@dataclass(frozen=True)
class OdometryFactor:
    prev: PoseId
    curr: PoseId
    odom: WheelOdometry
    wheel_base: float
    sigma: tuple[float, float, float]

    dim = 3


@dataclass(frozen=True)
class MeasurementFactor:
    pose: PoseId
    landmark: LandmarkId
    dx: float
    dy: float
    sigma: tuple[float, float]

    dim = 2


Factor = PriorFactor | OdometryFactor | MeasurementFactor


class FactorGraph:
    """Ordered factors over a fixed :class:`StateVector` layout."""

    def __init__(self, layout: StateVector, factors=()):
        self.layout = layout.with_values(np.zeros(layout.dim))
        self.factors: list[Factor] = []
        self._compiled = None
        for f in factors:
            self.add(f)

    def add(self, factor: Factor) -> None:
        if not isinstance(factor, (PriorFactor, OdometryFactor, MeasurementFactor)):
            raise AssemblyError(f"not a factor: {factor!r}")
        self.factors.append(factor)
        self._compiled = None

    def add_prior(self, var: PoseId, value: Pose2, sigma) -> None:
        self.add(PriorFactor(var, value, tuple(sigma)))

    def add_odometry(self, prev: PoseId, curr: PoseId, odom: WheelOdometry, wheel_base: float, sigma) -> None:
        self.add(OdometryFactor(prev, curr, odom, float(wheel_base), tuple(sigma)))

    def add_measurement(self, pose: PoseId, landmark: LandmarkId, dx: float, dy: float, sigma) -> None:
        self.add(MeasurementFactor(pose, landmark, float(dx), float(dy), tuple(sigma)))

    def __len__(self):
        return len(self.factors)

    def count(self, kind) -> int:
        return sum(isinstance(f, kind) for f in self.factors)

    @property
    def n_rows(self) -> int:
        return sum(f.dim for f in self.factors)

    def validate(self) -> None:
        """Check references and gauge anchoring.

        Every connected group of variables must contain a prior; otherwise the
        linearized system is singular and the first variable of the
        unanchored group is named in the error.
        """
        self._compile()
        parent = list(range(self.layout.dim))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        def union(i, j):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

        c = self._compiled
        for a, b in zip(c["odom_prev"], c["odom_curr"]):
            union(a, b)
        for a, b in zip(c["meas_pose"], c["meas_lm"]):
            union(a, b)
        anchored = {find(i) for i in c["prior_idx"]}
        for var in self.layout.variables():
            off = self.layout.index_of(var)
            if find(off) not in anchored:
                raise SingularSystemError(f"variable {var} is not connected to any prior (gauge is free)", var)

    def _compile(self):
        if self._compiled is not None:
            return self._compiled
        idx = self.layout.index_of
        rows = {"prior": [], "odom": [], "meas": []}
        cols = {k: [] for k in ("prior_idx", "odom_prev", "odom_curr", "meas_pose", "meas_lm")}
        data = {"prior_val": [], "prior_w": [], "odom_v": [], "odom_wb": [], "odom_w": [], "meas_z": [], "meas_w": []}
        row = 0
        try:
            for f in self.factors:
                if isinstance(f, PriorFactor):
                    if not isinstance(f.var, PoseId):
                        raise AssemblyError(f"prior must constrain a pose: {f}")
                    cols["prior_idx"].append(idx(f.var))
                    data["prior_val"].append(f.value.as_array())
                    data["prior_w"].append(1.0 / np.asarray(f.sigma, dtype=float))
                    rows["prior"].append(row)
                elif isinstance(f, OdometryFactor):
                    if not (isinstance(f.prev, PoseId) and isinstance(f.curr, PoseId)):
                        raise AssemblyError(f"odometry factor must link two poses: {f}")
                    cols["odom_prev"].append(idx(f.prev))
                    cols["odom_curr"].append(idx(f.curr))
                    data["odom_v"].append((f.odom.v_l, f.odom.v_r))
                    data["odom_wb"].append(f.wheel_base)
                    data["odom_w"].append(1.0 / np.asarray(f.sigma, dtype=float))
                    rows["odom"].append(row)
                else:
                    if not isinstance(f.pose, PoseId) or not isinstance(f.landmark, LandmarkId):
                        raise AssemblyError(f"measurement factor must link a pose and a landmark: {f}")
                    cols["meas_pose"].append(idx(f.pose))
                    cols["meas_lm"].append(idx(f.landmark))
                    data["meas_z"].append((f.dx, f.dy))
                    data["meas_w"].append(1.0 / np.asarray(f.sigma, dtype=float))
                    rows["meas"].append(row)
                row += f.dim
        except VariableLookupError as exc:
            raise AssemblyError(f"factor references an unregistered variable: {exc}") from exc
        c = {k: np.asarray(v, dtype=np.int64) for k, v in cols.items()}
        c.update({f"{k}_row": np.asarray(v, dtype=np.int64) for k, v in rows.items()})
        shapes = {"prior_val": 3, "prior_w": 3, "odom_v": 2, "odom_w": 3, "meas_z": 2, "meas_w": 2}
        for k, v in data.items():
            arr = np.asarray(v, dtype=float)
            c[k] = arr.reshape(-1, shapes[k]) if k in shapes else arr
        for k in ("prior_w", "odom_w", "meas_w"):
            if not np.all(np.isfinite(c[k]) & (c[k] > 0)):
                raise AssemblyError("noise sigmas must be positive and finite")
        c["n_rows"] = row
        self._compiled = c
        return c


@dataclass(frozen=True)
class SparseSystem:
    """Whitened linear system ``A dx ≈ b`` (``A`` is CSR)."""

    A: sp.csr_matrix
    b: np.ndarray
    layout: StateVector | None = None

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise InvalidInputError(f"A has {A.shape[0]} rows but b has {b.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def cost(self) -> float:
        return float(self.b @ self.b)


def _as_values(graph: FactorGraph, x0) -> np.ndarray:
    x = x0.values if isinstance(x0, StateVector) else np.asarray(x0, dtype=float)
    if x.shape != (graph.layout.dim,):
        raise AssemblyError(f"estimate has shape {x.shape}, graph expects ({graph.layout.dim},)")
    return x


def assemble(graph: FactorGraph, x0, heading_terms: bool = False) -> SparseSystem:
    """Linearize every factor at ``x0`` into whitened rows, in factor order.

    Odometry rows use the constant ``[-I, I]`` block. With ``heading_terms``
    they also carry the derivative of the motion delta with respect to the
    previous heading, which makes the steps true Gauss-Newton steps.
    """
    c = graph._compile()
    x = _as_values(graph, x0)
    b = np.empty(c["n_rows"])
    ri, ci, vals = [], [], []

    # priors: h(x) = x, H = I
    if len(c["prior_idx"]):
        cols = c["prior_idx"][:, None] + np.arange(3)
        r = c["prior_val"] - x[cols]
        r[:, 2] = wrap_angles(r[:, 2])
        rows = c["prior_row"][:, None] + np.arange(3)
        b[rows] = r * c["prior_w"]
        ri.append(rows.ravel())
        ci.append(cols.ravel())
        vals.append(c["prior_w"].ravel())

    # odometry: h = x_curr - x_prev, z = motion delta at the current heading
    if len(c["odom_prev"]):
        prev = c["odom_prev"][:, None] + np.arange(3)
        curr = c["odom_curr"][:, None] + np.arange(3)
        z = models.motion_deltas(c["odom_v"][:, 0], c["odom_v"][:, 1], x[prev[:, 2]], c["odom_wb"])
        r = z - (x[curr] - x[prev])
        r[:, 2] = wrap_angles(r[:, 2])
        rows = c["odom_row"][:, None] + np.arange(3)
        w = c["odom_w"]
        b[rows] = r * w
        ri += [rows.ravel(), rows.ravel()]
        ci += [prev.ravel(), curr.ravel()]
        vals += [-w.ravel(), w.ravel()]
        if heading_terms:
            th = x[prev[:, 2]]
            d = 0.5 * (c["odom_v"][:, 0] + c["odom_v"][:, 1])
            ri += [rows[:, 0], rows[:, 1]]
            ci += [prev[:, 2], prev[:, 2]]
            vals += [d * np.sin(th) * w[:, 0], -d * np.cos(th) * w[:, 1]]

    if len(c["meas_pose"]):
        pcols = c["meas_pose"][:, None] + np.arange(3)
        lcols = c["meas_lm"][:, None] + np.arange(2)
        poses, points = x[pcols], x[lcols]
        r = c["meas_z"] - models.predict_measurements(poses, points)
        J = models.measurement_jacobians(poses, points) * c["meas_w"][:, :, None]
        rows = c["meas_row"][:, None] + np.arange(2)
        b[rows] = r * c["meas_w"]
        cols = np.concatenate([pcols, lcols], axis=1)
        ri.append(np.repeat(rows, 5, axis=1).ravel())
        ci.append(np.tile(cols, (1, 2)).ravel())
        vals.append(J.ravel())

    if ri:
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))),
            shape=(c["n_rows"], graph.layout.dim),
        )
    else:
        A = sp.csr_matrix((0, graph.layout.dim))
    A.sort_indices()
    return SparseSystem(A, b, graph.layout)


def _singular(exc: NotPositiveDefiniteError, layout: StateVector | None) -> SingularSystemError:
    var = None
    if layout is not None and exc.column < layout.dim:
        var = layout.variable_at(exc.column)
    where = f" near variable {var}" if var is not None else f" at column {exc.column}"
    return SingularSystemError(f"normal equations are rank deficient{where}", var)


class _NormalEquations:
    """Symbolic analysis shared by every damped solve at one linearization point."""

    def __init__(self, system: SparseSystem, ordering="auto"):
        self.system = system
        At = system.A.T.tocsr()
        self.N = (At @ system.A).tocsc()
        n = self.N.shape[0]
        # diagonal must be structurally present for the damping shift
        self.N = (self.N + sp.csc_matrix((np.zeros(n), (np.arange(n), np.arange(n))), shape=(n, n))).tocsc()
        self.N.sort_indices()
        self.rhs = At @ system.b
        self.chol = SparseCholesky(self.N, ordering=ordering)

    def solve(self, damping: float = 0.0) -> np.ndarray:
        try:
            self.chol.factorize(self.N, shift=damping)
        except NotPositiveDefiniteError as exc:
            raise _singular(exc, self.system.layout) from None
        return self.chol.solve(self.rhs)


def solve_normal_equations(sys: SparseSystem, damping: float = 0.0, ordering: str = "auto") -> np.ndarray:
    """Least-squares step ``argmin |A d - b|^2 (+ damping |d|^2)`` by sparse Cholesky of ``A'A``."""
    if not isinstance(sys, SparseSystem):
        sys = SparseSystem(*sys)
    if sys.A.shape[1] == 0:
        return np.zeros(0)
    return _NormalEquations(sys, ordering).solve(damping)


@dataclass(frozen=True)
class SolveConfig:
    max_iterations: int = 100
    rel_tol: float = 1e-6
    abs_tol: float = 1e-20
    damping_init: float = 0.0
    damping_factor: float = 10.0
    ordering: str = "auto"
    heading_jacobian: bool = False
    exact_fallback: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")
        if not self.rel_tol > 0:
            raise InvalidInputError("rel_tol must be > 0")
        if self.abs_tol < 0:
            raise InvalidInputError("abs_tol must be >= 0")
        if self.damping_init < 0:
            raise InvalidInputError("damping_init must be >= 0")
        if not self.damping_factor > 1:
            raise InvalidInputError("damping_factor must be > 1")


@dataclass
class SolveResult:
    estimate: StateVector
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _step(graph, theta_mask, x, delta, heading_terms):
    x_new = x + delta
    x_new[theta_mask] = wrap_angles(x_new[theta_mask])
    sys = assemble(graph, x_new, heading_terms)
    return x_new, sys


def _predicted_decrease(sys: SparseSystem, delta: np.ndarray) -> float:
    r = sys.b - sys.A @ delta
    return sys.cost - float(r @ r)


def optimize(graph: FactorGraph, init, cfg: SolveConfig | None = None) -> SolveResult:
    """Iterate linearize-solve-update until the squared whitened residual stops improving.

    Steps are pure Gauss-Newton unless ``damping_init > 0``. A step that
    raises the residual is retried with Levenberg damping grown by
    ``damping_factor`` until it no longer does. The constant odometry block
    is not the true Jacobian, so even a heavily damped step can fail to
    descend; with ``exact_fallback`` the solve then continues from the same
    iterate with heading terms switched on. Past ``MAX_DAMPING`` otherwise a
    :class:`NonConvergenceError` carrying the best iterate is raised.
    """
    cfg = cfg or SolveConfig()
    graph.validate()
    x = np.array(_as_values(graph, init), dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("initial estimate must be finite")
    theta_mask = graph.layout.theta_mask()
    x[theta_mask] = wrap_angles(x[theta_mask])

    heading = cfg.heading_jacobian
    sys = assemble(graph, x, heading)
    cost = sys.cost
    history = [cost]
    iterations = 0
    converged = False
    last_decrease = np.inf

    def result(done):
        return SolveResult(graph.layout.with_values(x), iterations, list(history), done)

    while True:
        normal = _NormalEquations(sys, cfg.ordering)
        delta = normal.solve(cfg.damping_init)
        if iterations > 0 and (
            cost <= cfg.abs_tol
            or last_decrease <= cfg.rel_tol * history[-2]
            or _predicted_decrease(sys, delta) <= cfg.rel_tol * cost
        ):
            converged = True
            break
        if iterations >= cfg.max_iterations:
            break
        x_new, sys_new = _step(graph, theta_mask, x, delta, heading)
        cost_new = sys_new.cost
        if cost_new > cost:
            if cost_new - cost <= cfg.rel_tol * cost:
                converged = True
                break
            lam = max(cfg.damping_init, MIN_DAMPING)
            while cost_new > cost and lam <= MAX_DAMPING:
                x_new, sys_new = _step(graph, theta_mask, x, normal.solve(lam), heading)
                cost_new = sys_new.cost
                lam *= cfg.damping_factor
            if cost_new > cost:
                if heading or not cfg.exact_fallback:
                    raise NonConvergenceError(
                        f"damping exceeded {MAX_DAMPING:g} after {iterations} iterations", result(False)
                    )
                log.debug("iteration %d: switching to exact odometry Jacobian", iterations + 1)
                heading = True
                sys = assemble(graph, x, heading)
                continue
            log.debug("iteration %d accepted with damping %.3g", iterations + 1, lam / cfg.damping_factor)
        last_decrease = cost - cost_new
        x, sys, cost = x_new, sys_new, cost_new
        iterations += 1
        history.append(cost)
        log.debug("iteration %d: cost %.6g", iterations, cost)
    return result(converged)

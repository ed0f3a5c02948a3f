"""Region-of-attraction estimates for the voltage-regulation loop.

A quadratic Lyapunov function ``V(z) = z' P z`` is built from the
linearisation at the Mode-2 equilibrium, then the largest sublevel set
``{V <= c}`` on which the nonlinear reduced dynamics decrease ``V`` is
found by sampling. Sampling can miss a violating point, so a certified
level is a reproducible estimate rather than a proof.

Coordinates are translated: ``z = (k - k*, x2 - x2_ref, x3 - x3*)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import mode2_dynamic_matrix, mode2_steady_state, voltage_reference
from .errors import DomainError, InfeasibleError
from .plant import PlantParams, StateBox

__all__ = [
    "QuadraticLyapunov",
    "RoaEstimate",
    "lyapunov_solve",
    "max_decay_gevp",
    "mode2_translated_rhs",
    "level_schedule",
    "certify_level",
    "contains",
    "project_roa",
    "roa_for",
    "build_roa_table",
    "roa_table_csv",
    "projection_csv",
]

_AXES = {"k": 0, "x2": 1, "x3": 2}


@dataclass(frozen=True)
class QuadraticLyapunov:
    P: np.ndarray
    center: np.ndarray
    decay: float = 0.0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 3) or not np.allclose(P, P.T, rtol=0, atol=1e-12 * np.abs(P).max()):
            raise DomainError("P must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(P).min() <= 0:
            raise DomainError("P must be positive definite")
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return np.einsum("...i,ij,...j->...", z, self.P, z)


@dataclass(frozen=True)
class RoaEstimate:
    lyap: QuadraticLyapunov
    level: float
    grid_res: int = 0
    n_random: int = 0
    seed: int = 0
    margin: float = float("nan")
    c_max: float = float("nan")
    levels_passed: int = 0
    meta: dict = field(default_factory=dict)

    def translated(self, state, k):
        """``z`` for a plant state ``(x1, x2, x3)`` and gain ``k``."""
        _, x2, x3 = state
        return np.array([k, x2, x3], dtype=float) - self.lyap.center

    def V(self, state, k) -> float:
        return float(self.lyap.value(self.translated(state, k)))

    def contains(self, state, k) -> bool:
        return contains(self, state, k)


def lyapunov_solve(A, shift: float = 0.0) -> np.ndarray:
    """Solve ``(A + s I)' P + P (A + s I) = -I`` through the 9x9 Kronecker system.

    Raises :class:`InfeasibleError` if the system is singular or the
    solution is not positive definite.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    As = A + shift * np.eye(n)
    eye = np.eye(n)
    # column-major vec: vec(As' P + P As) = (I kron As' + As' kron I) vec(P)
    M = np.kron(eye, As.T) + np.kron(As.T, eye)
    rhs = -eye.reshape(-1, order="F")
    try:
        v = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleError(f"Lyapunov system singular for shift {shift!r}") from exc
    # one round of iterative refinement
    v = v + np.linalg.solve(M, rhs - M @ v)
    P = v.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise InfeasibleError(f"Lyapunov system singular for shift {shift!r}")
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleError(f"no positive-definite solution for shift {shift!r}") from exc
    return P


def _feasible(A, lam):
    try:
        return lyapunov_solve(A, lam)
    except InfeasibleError:
        return None


def max_decay_gevp(A, tol: float = 1e-6):
    """Largest ``lam`` with ``A'P + PA + 2 lam P <= 0`` for some ``P > 0``.

    Bisection on ``lam`` with the shifted Lyapunov solve as feasibility
    test. Returns ``(lam_star, P)`` where ``P`` is feasible at ``lam_star``.
    The constraint is homogeneous in ``P``; near the optimum the Lyapunov
    solution blows up, so ``P`` is returned scaled to unit spectral norm.
    """
    A = np.asarray(A, dtype=float)
    P = _feasible(A, 0.0)
    if P is None:
        raise DomainError("matrix is not Hurwitz")
    lo, hi = 0.0, max(1.0, float(np.abs(A).sum(axis=1).max()))
    while _feasible(A, hi) is not None:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        Pm = _feasible(A, mid)
        if Pm is None:
            hi = mid
        else:
            lo, P = mid, Pm
    return lo, P / np.linalg.norm(P, 2)


def mode2_translated_rhs(z, k_star, x2_ref, x3_star, gamma2, p: PlantParams):
    """Nonlinear sliding dynamics of the voltage loop in translated coordinates.

    ``z`` has shape ``(..., 3)``; the switch is replaced by its
    equivalent control.
    """
    z = np.asarray(z, dtype=float)
    z1, z2, z3 = z[..., 0], z[..., 1], z[..., 2]
    alpha = (p.R_D + p.R_H) / (p.R_D * p.R_H * p.C_H)
    k = z1 + k_star
    x2 = z2 + x2_ref
    dz1 = gamma2 * z2
    dz2 = (-p.L * k * x2 * gamma2 * z2 - alpha * p.C_H * z2 - z3 * k - x3_star * z1) / (
        p.L * k * k + p.C_H)
    dz3 = -z3 / (p.R_L * p.C_L) + (z1 * z2 + k_star * z2 + x2_ref * z1) / p.C_L
    return np.stack(np.broadcast_arrays(dz1, dz2, dz3), axis=-1)


def level_schedule(c_max: float, n_levels: int = 21, ratio: float = 1024.0) -> np.ndarray:
    """Geometric levels from ``c_max`` down to ``c_max / ratio``."""
    return c_max * ratio ** (-np.arange(n_levels) / (n_levels - 1))


def _shell_samples(c, grid_res, n_random, rng):
    """Whitened samples ``w`` with ``c/2 <= |w|^2 <= c``."""
    r = math.sqrt(c)
    g = np.linspace(-r, r, grid_res)
    W = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    n2 = np.einsum("ij,ij->i", W, W)
    W = W[(n2 >= 0.5 * c) & (n2 <= c)]
    d = rng.standard_normal((n_random, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # radius distributed uniformly in volume over the shell
    r_in = math.sqrt(0.5 * c)
    u = rng.random(n_random)
    rad = np.cbrt(r_in ** 3 + u * (r ** 3 - r_in ** 3))
    return np.vstack([W, d * rad[:, None]])


def _ascend(W, score, n_iter):
    """Projected gradient ascent of ``score`` over directions, radius fixed per row."""
    rad = np.linalg.norm(W, axis=1, keepdims=True)
    s = score(W)
    step = np.full((len(W), 1), 0.1)
    eye = np.eye(3)
    for _ in range(n_iter):
        h = 1e-6 * rad
        grad = np.stack([(score(W + h * e) - score(W - h * e)) for e in eye], axis=1) / (2 * h)
        grad -= np.einsum("ij,ij->i", grad, W)[:, None] * W / rad ** 2  # tangential part
        gn = np.linalg.norm(grad, axis=1, keepdims=True)
        gn[gn == 0] = 1.0
        trial = W + step * rad * grad / gn
        trial *= rad / np.linalg.norm(trial, axis=1, keepdims=True)
        st = score(trial)
        up = st > s
        W = np.where(up[:, None], trial, W)
        s = np.where(up, st, s)
        step = np.where(up[:, None], step * 1.5, step * 0.5)
    return W, s


def certify_level(lyap: QuadraticLyapunov, reduced_dynamics, grid_res: int = 33,
                  n_random: int = 100_000, seed: int = 0, c_max: float = 1.0,
                  n_levels: int = 21, n_ascent: int = 32, ascent_iter: int = 60) -> RoaEstimate:
    """Largest schedule level whose shell samples all have ``dV/dt < 0``.

    Levels are tested from the smallest upwards and the search stops at the
    first failure, so every level below the returned one was also
    certified. ``reduced_dynamics`` maps ``(N, 3)`` translated states to
    their derivatives. Returns ``level = 0`` if even the smallest fails.

    Violating regions can be thin caps that plain sampling hits only by
    luck, so the ``n_ascent`` worst samples of each shell are pushed
    uphill in ``dV/dt / V`` before the level is accepted.
    """
    rng = np.random.default_rng(seed)
    P = lyap.P
    # z = G^{-T} w  maps the unit ball onto {V <= 1}
    G = np.linalg.cholesky(P)
    Ginv_T = np.linalg.inv(G).T

    def score(W):
        Z = W @ Ginv_T.T
        with np.errstate(all="ignore"):
            vdot = 2.0 * np.einsum("ij,jk,ik->i", Z, P, reduced_dynamics(Z))
        return vdot / np.einsum("ij,ij->i", W, W)

    levels = level_schedule(c_max, n_levels)[::-1]
    best = 0.0
    margin = float("nan")
    passed = 0
    for c in levels:
        W = _shell_samples(c, grid_res, n_random, rng)
        ratio = score(W)
        if n_ascent > 0 and np.all(ratio < 0):
            top = np.argsort(ratio)[-n_ascent:]
            _, refined = _ascend(W[top], score, ascent_iter)
            ratio = np.concatenate([ratio, refined])
        if not np.all(ratio < 0):
            break
        best = float(c)
        margin = float(ratio.max())
        passed += 1
    return RoaEstimate(
        lyap=lyap, level=best, grid_res=grid_res, n_random=n_random, seed=seed,
        margin=margin, c_max=c_max, levels_passed=passed,
    )


def contains(roa: RoaEstimate, state, k) -> bool:
    """Closed sublevel-set test ``V(z) <= c``."""
    if not roa.level > 0:
        raise InfeasibleError("ROA estimate is not certified")
    return roa.V(state, k) <= roa.level


def project_roa(roa: RoaEstimate, plane=("x3", "k"), n_points: int = 128) -> np.ndarray:
    """Boundary of the projection of ``{V <= c}`` onto two original coordinates.

    Returns an ``(n_points, 2)`` array ordered as ``plane``.
    """
    if n_points < 3:
        raise ValueError("need at least 3 points")
    i, j = (_AXES[a] for a in plane)
    S = np.linalg.inv(roa.lyap.P)[np.ix_([i, j], [i, j])]
    G = np.linalg.cholesky(S)
    th = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    circ = np.stack([np.cos(th), np.sin(th)])
    pts = math.sqrt(roa.level) * (G @ circ)
    return pts.T + roa.lyap.center[[i, j]]


def _c_max(P, center, box: StateBox, K_max):
    corners = np.array([[k, x2, x3] for k in (-K_max, K_max)
                        for x2 in (box.X2_minus, box.X2_plus)
                        for x3 in (box.X3_minus, box.X3_plus)]) - center
    return float(np.einsum("ij,jk,ik->i", corners, P, corners).max())


def roa_for(R_D, I_OL, p: PlantParams, gamma2, box: StateBox, K_max,
            shift: float = 0.75, grid_res: int = 33, n_random: int = 100_000,
            seed: int = 0) -> RoaEstimate:
    """Certified ROA of the voltage loop for one load and overload set-point."""
    q = p.with_load(R_D)
    x2_ref = voltage_reference(I_OL, q)
    ss = mode2_steady_state(x2_ref, q)
    A = mode2_dynamic_matrix(ss.k_star, x2_ref, ss.x3_star, gamma2, q)
    lam, _ = max_decay_gevp(A)
    used = shift
    try:
        P = lyapunov_solve(A, shift)
    except InfeasibleError:
        used = 0.5 * lam
        P = lyapunov_solve(A, used)
    lyap = QuadraticLyapunov(P, ss.center, decay=used)
    est = certify_level(
        lyap,
        lambda Z: mode2_translated_rhs(Z, ss.k_star, x2_ref, ss.x3_star, gamma2, q),
        grid_res=grid_res, n_random=n_random, seed=seed,
        c_max=_c_max(P, ss.center, box, K_max),
    )
    meta = {"R_D": float(R_D), "I_OL": float(I_OL), "lambda_star": lam, "shift": used}
    return RoaEstimate(**{**est.__dict__, "meta": meta})


def build_roa_table(p: PlantParams, gamma2, loads, currents, box: StateBox, K_max,
                    **kw) -> dict:
    """``{(R_D, I_OL): RoaEstimate}`` over the product of both ladders."""
    return {(float(r), float(i)): roa_for(r, i, p, gamma2, box, K_max, **kw)
            for r in loads for i in currents}


def roa_table_csv(table: dict, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R_D", "I_OL", "k_star", "x2_ref", "x3_star", "lambda_star", "shift",
                "c", "c_max", "P11", "P12", "P13", "P22", "P23", "P33",
                "grid_res", "n_random", "seed", "margin", "levels_passed"])
    for (r, i), e in sorted(table.items()):
        P = e.lyap.P
        w.writerow([f"{r:g}", f"{i:g}", *(f"{v:.10g}" for v in e.lyap.center),
                    f"{e.meta['lambda_star']:.10g}", f"{e.meta['shift']:.10g}",
                    f"{e.level:.10g}", f"{e.c_max:.10g}",
                    *(f"{P[a, b]:.10g}" for a, b in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))),
                    e.grid_res, e.n_random, e.seed, f"{e.margin:.6g}", e.levels_passed])
    text = ("# sampled certification: levels are estimates, not proofs\n"
            + buf.getvalue())
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def projection_csv(points, plane=("x3", "k"), path=None) -> str:
    lines = [",".join(plane)] + [f"{a:.10g},{b:.10g}" for a, b in points]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text

"""Reference density matrices for high-risk clusters.

A cluster of unit feature vectors ``e_1..e_m`` is summarized by the density
matrix maximizing the aggregate pure-state fidelity

    f(rho) = sum_j sqrt(e_j^T rho e_j),   rho >= 0, Tr(rho) = 1.

``f`` is concave, so the maximizer is found with a conditional-gradient
(Frank-Wolfe) ascent over the spectrahedron: the linear subproblem is solved
exactly by the top eigenvector of the gradient, and the Frank-Wolfe gap
certifies optimality. Away steps along the iterate's own eigenvectors let the
iterate shed spurious rank, which matters because optima are typically of
rank one.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyClusterError
from .preprocess import FeatureVector
from .symmat import DensityMatrix, fidelity_pure, jacobi_eigh

log = logging.getLogger(__name__)

GRADIENT_FLOOR = 1e-14
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SolverWarning(UserWarning):
    pass


class TailRule(str, enum.Enum):
    MEAN = "mean"
    MEAN_PLUS_STD = "mean_std"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str) and value.replace("-", "_") in ("mean_plus_std", "mean_std"):
            return cls.MEAN_PLUS_STD
        return None


@dataclass(frozen=True)
class HeuristicVector:
    components: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class SimilarityEntry:
    locality_id: str
    vector: FeatureVector
    similarity: float


@dataclass(frozen=True)
class SimilaritySet:
    entries: tuple[SimilarityEntry, ...]

    @property
    def values(self) -> np.ndarray:
        return np.array([e.similarity for e in self.entries], dtype=float)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class TailCluster:
    members: tuple[FeatureVector, ...]
    threshold: float
    rule: TailRule
    inclusive: bool = False

    def __post_init__(self):
        if not self.members:
            raise EmptyClusterError("tail cluster must have at least one member")

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def matrix(self) -> np.ndarray:
        """Members stacked as rows."""
        return np.array([m.components for m in self.members], dtype=float)


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-8
    max_iter: int = 10_000
    line_search_tol: float = 1e-13
    away_steps: bool = True

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise ValueError(f"gap_tol must be positive, got {self.gap_tol!r}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter!r}")


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_gap: float
    objective: float
    estimate: DensityMatrix
    converged: bool
    history: tuple[float, ...] = field(default=(), repr=False)


def heuristic_vector(dim: int) -> HeuristicVector:
    """Uniform unit vector with every component ``1/sqrt(dim)``."""
    if dim < 1:
        raise ValueError(f"heuristic vector needs a positive dimension, got {dim}")
    c = np.full(dim, 1.0 / math.sqrt(dim))
    c.setflags(write=False)
    return HeuristicVector(c)


def similarity_set(vectors: Sequence[FeatureVector], h: HeuristicVector) -> SimilaritySet:
    entries = []
    for v in vectors:
        if v.dim != h.dim:
            raise DimensionMismatchError(
                f"{v.locality_id}: vector dimension {v.dim} does not match heuristic dimension {h.dim}"
            )
        sim = min(max(float(v.components @ h.components), 0.0), 1.0)
        entries.append(SimilarityEntry(v.locality_id, v, sim))
    return SimilaritySet(tuple(entries))


def tail_threshold(values, rule: TailRule | str) -> float:
    """Sample mean, or sample mean plus sample standard deviation (ddof=1)."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise EmptyClusterError("similarity set is empty")
    mean = float(np.mean(vals))
    if TailRule(rule) is TailRule.MEAN:
        return mean
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    return mean + std


def tail_cluster(s: SimilaritySet, rule: TailRule | str, inclusive: bool = False) -> TailCluster:
    """Members of ``s`` on the right tail: similarity above the rule's threshold.

    The comparison is strict unless ``inclusive`` is set.
    """
    rule = TailRule(rule)
    threshold = tail_threshold(s.values, rule)
    if inclusive:
        members = tuple(e.vector for e in s.entries if e.similarity >= threshold)
    else:
        members = tuple(e.vector for e in s.entries if e.similarity > threshold)
    if not members:
        raise EmptyClusterError(
            f"no similarity exceeds the {rule.value} threshold {threshold:.8g}; "
            "try the looser 'mean' rule or inclusive comparison"
        )
    return TailCluster(members, threshold, rule, inclusive)


def aggregate_fidelity(vectors, rho) -> float:
    """Sum of pure-state fidelities ``sqrt(e^T rho e)`` over ``vectors``."""
    return float(sum(fidelity_pure(v, rho) for v in vectors))


def _cluster_rows(cluster) -> np.ndarray:
    if isinstance(cluster, TailCluster):
        return cluster.matrix()
    rows = [np.asarray(getattr(v, "components", v), dtype=float) for v in cluster]
    if not rows:
        raise EmptyClusterError("cluster is empty")
    return np.array(rows, dtype=float)


def _golden_max(phi: Callable[[float], float], hi: float, tol: float) -> tuple[float, float]:
    """Maximize a concave ``phi`` on ``[0, hi]``; endpoints are always candidates."""
    a, b = 0.0, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol * max(1.0, hi):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = phi(d)
    best_t, best_f = (c, fc) if fc >= fd else (d, fd)
    for t in (0.0, hi):
        ft = phi(t)
        if ft > best_f:
            best_t, best_f = t, ft
    return best_t, best_f


def _quad(rows: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", rows, rho, rows)


def estimate_reference(cluster, opts: SolverOptions | None = None) -> SolverReport:
    """Maximize the aggregate fidelity of ``cluster`` over unit-trace PSD matrices.

    Starts from the maximally mixed state and alternates Frank-Wolfe steps
    (towards the top eigenvector of the gradient) with away steps (out of the
    iterate's least useful eigenvector), each with an exact golden-section line
    search, so the recorded objective never decreases.

    Args:
        cluster: a TailCluster or a sequence of unit (or zero) vectors.
        opts: stopping tolerances; defaults to gap 1e-8 and 10,000 iterations.

    Returns:
        SolverReport with the estimate, its objective and the final gap. If the
        gap tolerance is not met, ``converged`` is False and a SolverWarning is
        issued.

    Raises:
        EmptyClusterError: if the cluster has no non-zero member.
    """
    opts = opts or SolverOptions()
    all_rows = _cluster_rows(cluster)
    norms = np.linalg.norm(all_rows, axis=1)
    rows = all_rows[norms > 0]
    if rows.shape[0] == 0:
        raise EmptyClusterError("every cluster member is a zero vector")
    q = rows.shape[1]

    rho = np.eye(q) / q
    a = _quad(rows, rho)
    f = float(np.sum(np.sqrt(np.maximum(a, 0.0))))
    history = [f]
    gap = math.inf
    converged = False
    it = 0

    for it in range(1, opts.max_iter + 1):
        w = 0.5 / np.sqrt(np.maximum(a, GRADIENT_FLOOR))
        grad = (rows.T * w) @ rows
        g_eig = jacobi_eigh(grad)
        u = g_eig.eigenvectors[:, -1]
        inner = float(np.sum(grad * rho))
        gap = max(float(g_eig.eigenvalues[-1]) - inner, 0.0)
        if gap <= opts.gap_tol:
            converged = True
            it -= 1
            break

        direction = None
        if opts.away_steps:
            r_eig = jacobi_eigh(rho)
            lam, vecs = r_eig.eigenvalues, r_eig.eigenvectors
            active = np.flatnonzero(lam > 1e-15)
            if active.size > 1:
                scores = [float(vecs[:, i] @ grad @ vecs[:, i]) for i in active]
                k = int(active[int(np.argmin(scores))])
                away_gap = inner - min(scores)
                if away_gap > gap:
                    v = vecs[:, k]
                    t_max = lam[k] / (1.0 - lam[k])
                    target = (rows @ v) ** 2
                    direction = ("away", v, target, t_max, k, lam, vecs)
        if direction is None:
            target = (rows @ u) ** 2
            direction = ("fw", u, target, 1.0, None, None, None)

        kind, vec, target, t_max, k, lam, vecs = direction
        if kind == "fw":
            delta = target - a
        else:
            delta = a - target

        def phi(t, a=a, delta=delta):
            return float(np.sum(np.sqrt(np.maximum(a + t * delta, 0.0))))

        t, f_new = _golden_max(phi, t_max, opts.line_search_tol)
        if f_new <= f and kind == "fw":
            t = 2.0 / (it + 2.0)
            f_new = phi(t)
        if f_new <= f:
            log.debug("line search stalled at iteration %d (gap %.3e)", it, gap)
            break

        if kind == "fw":
            rho = rho + t * (np.outer(vec, vec) - rho)
        elif t >= t_max:
            # drop step: remove the eigencomponent exactly
            lam = np.array(lam, dtype=float)
            lam[k] = 0.0
            lam /= lam.sum()
            rho = (vecs * lam) @ vecs.T
        else:
            rho = rho + t * (rho - np.outer(vec, vec))
        rho = 0.5 * (rho + rho.T)
        rho /= np.trace(rho)
        a = _quad(rows, rho)
        f = float(np.sum(np.sqrt(np.maximum(a, 0.0))))
        history.append(f)

    estimate = DensityMatrix(rho)
    objective = aggregate_fidelity(all_rows, estimate)
    if not converged:
        msg = (f"reference estimation stopped after {it} iterations with Frank-Wolfe gap "
               f"{gap:.3e} > {opts.gap_tol:g}")
        warnings.warn(msg, SolverWarning, stacklevel=2)
        log.warning(msg)
    return SolverReport(it, gap, objective, estimate, converged, tuple(history))


def _simplex_grid(dim: int, step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    if dim == 1:
        return np.ones((1, 1))
    if dim == 2:
        p = np.arange(n + 1) / n
        return np.column_stack([p, 1.0 - p])
    pts = [(i / n, j / n, (n - i - j) / n) for i in range(n + 1) for j in range(n + 1 - i)]
    return np.array(pts)


def _rotation_grid(dim: int, step: float) -> list[np.ndarray]:
    """Orthogonal frames covering the rotation group at angular spacing ``pi * step``."""
    da = math.pi * step
    if dim == 1:
        return [np.ones((1, 1))]
    if dim == 2:
        thetas = np.arange(0.0, math.pi, da)
        return [np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]) for t in thetas]
    frames = []
    alphas = np.arange(0.0, 2 * math.pi, da)
    betas = np.arange(0.0, math.pi + da / 2, da)
    gammas = np.arange(0.0, math.pi, da)
    for al in alphas:
        ca, sa = math.cos(al), math.sin(al)
        rz1 = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1.0]])
        for be in betas:
            cb, sb = math.cos(be), math.sin(be)
            ry = np.array([[cb, 0, sb], [0, 1.0, 0], [-sb, 0, cb]])
            m = rz1 @ ry
            for ga in gammas:
                cg, sg = math.cos(ga), math.sin(ga)
                rz2 = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1.0]])
                frames.append(m @ rz2)
    return frames


def reference_oracle(cluster, grid_step: float = 0.01) -> DensityMatrix:
    """Brute-force maximizer of the aggregate fidelity for dimension <= 3.

    Enumerates ``rho = R diag(lambda) R^T`` with ``lambda`` on a simplex grid of
    spacing ``grid_step`` and ``R`` on an angle grid of spacing
    ``pi * grid_step``, returning the best point found. Shares no code with the
    iterative solver. Cost grows like ``grid_step**-5`` in three dimensions, so
    use coarse steps there.
    """
    rows = _cluster_rows(cluster)
    dim = rows.shape[1]
    if dim > 3:
        raise NotImplementedError(f"grid oracle supports dimension <= 3, got {dim}")
    if not 0 < grid_step <= 0.2:
        raise ValueError(f"grid_step must lie in (0, 0.2], got {grid_step}")
    lams = _simplex_grid(dim, grid_step)
    best_val, best = -math.inf, None
    for frame in _rotation_grid(dim, grid_step):
        proj = (rows @ frame) ** 2  # (m, dim): squared overlap with each frame axis
        vals = np.sqrt(proj @ lams.T).sum(axis=0)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best = float(vals[i]), (frame, lams[i])
    frame, lam = best
    return DensityMatrix((frame * lam) @ frame.T)


def principal_eigenvector(m) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue, largest-magnitude entry positive.

    When the top eigenvalue is degenerate (gap below 1e-12) a warning is issued
    and the lexicographically largest sign-fixed candidate is returned.
    """
    d = m.eig() if hasattr(m, "eig") else jacobi_eigh(m)
    w, v = d.eigenvalues, d.eigenvectors
    top = float(w[-1])
    tied = [i for i in range(len(w)) if top - float(w[i]) < 1e-12]
    candidates = [_sign_fixed(v[:, i]) for i in tied]
    if len(candidates) > 1:
        warnings.warn(f"top eigenvalue {top:.6g} has multiplicity {len(candidates)}; "
                      "tie broken lexicographically", SolverWarning, stacklevel=2)
        return max(candidates, key=lambda c: tuple(c))
    return candidates[0]


def _sign_fixed(vec: np.ndarray) -> np.ndarray:
    vec = np.array(vec, dtype=float)
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec

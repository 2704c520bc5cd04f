"""Layer-by-layer recovery of edge weights from an observational covariance.

For a vertex v whose grandparent set is empty the weights solve

    sigma[pa(v), pa(v)] @ x = sigma[pa(v), v].

Otherwise each parent row is transformed so that upstream causal paths are
subtracted out: with T[y, x] = sigma[y, x] - lam[pa(y), y] . sigma[pa(y), x]
(the row of (I - lam)^T sigma for y), the weights solve A @ x = b with
A[i, j] = T[y_i, p_j] and b[i] = T[y_i, v]. The transformed row for y is a
valid equation exactly when y carries no bidirected edge to v, which
bow-freeness guarantees for y in pa(v).

Edges with forced weights (introduced by the layered reduction) are knowns:
they are dropped from the unknown set and folded into the right-hand side.
A parent whose incoming edges are all forced is a deterministic copy of a
unique upstream "source" vertex; its equation row is taken at that source,
which is what makes recovery on reduced graphs solve the same systems as on
the original graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NearSingularError, OrderingError
from .graphs import MixedGraph
from .lsem import (
    ParamSet,
    as_matrix,
    project_omega_pattern,
    recover_omega,
)

DEFAULT_SING_TOL = 1e-10


@dataclass(frozen=True)
class RecoveryConfig:
    sing_tol: float = DEFAULT_SING_TOL
    # Optional explicit equation-row sets per vertex; rows are tested for
    # half-trek reachability individually (untransformed when unreachable).
    y_sets: dict[int, tuple[int, ...]] | None = None
    omega_tol: float = 1e-10
    omega_max_iters: int = 10_000


@dataclass(frozen=True)
class RecoverySystem:
    """The linear system determining the unforced incoming weights of one vertex."""

    vertex: int
    y_set: tuple[int, ...]
    parents: tuple[int, ...]  # unknown columns, ascending
    a_matrix: np.ndarray
    b_vector: np.ndarray
    transformed: tuple[bool, ...]
    convention_conflicts: tuple[int, ...] = ()  # rows where the htr test disagrees


@dataclass(frozen=True)
class VertexDiagnostics:
    residual: float
    condition: float
    used_partial_form: bool


@dataclass(frozen=True)
class RecoveryResult:
    lambda_hat: np.ndarray
    per_vertex: dict[int, VertexDiagnostics] = field(default_factory=dict)
    forced_edges_respected: bool = True


def source_vertex(g: MixedGraph, v: int) -> int:
    """Follow forced in-edges upstream to the vertex v is a copy of.

    Identity for vertices with any unforced (or no) incoming edge.
    """
    forced = g.forced_weights
    seen = set()
    while True:
        parents = g.parents(v)
        if not parents or any((p, v) not in forced for p in parents):
            return v
        if v in seen:
            raise OrderingError(f"forced-edge chain through vertex {v} is cyclic")
        seen.add(v)
        v = parents[0]


def _transformed_row(g, sig, lam, y, columns):
    """Row of (I - lam)^T sigma at y, restricted to the given columns."""
    row = sig[y, columns].astype(float, copy=True)
    pa_y = g.parents(y)
    if pa_y:
        pa_y = list(pa_y)
        row -= lam[pa_y, y] @ sig[np.ix_(pa_y, columns)]
    return row


def build_system(
    g: MixedGraph,
    sigma,
    lambda_partial: np.ndarray,
    v: int,
    y_set=None,
) -> RecoverySystem:
    """Assemble the square system for vertex v given upstream weights.

    ``lambda_partial`` must already hold recovered weights for every vertex
    in strictly lower layers (and all forced weights). The default equation
    rows are the sources of v's unforced parents, each transformed; an
    explicit ``y_set`` instead applies the half-trek membership test per
    row and records rows where that test would disagree with the
    all-transformed default.
    """
    sig = as_matrix(sigma)
    lam = np.asarray(lambda_partial, dtype=float)
    if lam.shape != (g.n, g.n):
        raise OrderingError(
            f"partial weight matrix of shape {lam.shape} does not match n={g.n}"
        )
    forced = g.forced_weights
    unknown = [p for p in g.parents(v) if (p, v) not in forced]
    known = [p for p in g.parents(v) if (p, v) in forced]

    if y_set is None:
        rows = [source_vertex(g, p) for p in unknown]
        flags = [True] * len(rows)
        conflicts = ()
    else:
        rows = list(y_set)
        if len(rows) != len(unknown):
            raise OrderingError(
                f"vertex {v}: |Y|={len(rows)} does not match {len(unknown)} unknowns"
            )
        htr = g.half_trek_reachable(v)
        flags = [y in htr for y in rows]
        conflicts = tuple(y for y, f in zip(rows, flags) if not f)

    cols = unknown + known + [v]
    a = np.zeros((len(rows), len(unknown)))
    b = np.zeros(len(rows))
    for i, (y, use_transform) in enumerate(zip(rows, flags)):
        if use_transform:
            full = _transformed_row(g, sig, lam, y, cols)
        else:
            full = sig[y, cols].astype(float, copy=True)
        a[i, :] = full[: len(unknown)]
        b[i] = full[-1]
        for j, p in enumerate(known):
            b[i] -= forced[(p, v)] * full[len(unknown) + j]

    return RecoverySystem(
        vertex=v,
        y_set=tuple(rows),
        parents=tuple(unknown),
        a_matrix=a,
        b_vector=b,
        transformed=tuple(flags),
        convention_conflicts=conflicts,
    )


def recover_vertex(system: RecoverySystem, sing_tol: float = DEFAULT_SING_TOL) -> np.ndarray:
    """Solve the per-vertex system; NearSingularError when A is degenerate."""
    a, b = system.a_matrix, system.b_vector
    if a.size == 0:
        return np.zeros(0)
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= sing_tol * svals[0]:
        raise NearSingularError(
            f"vertex {system.vertex}: system is numerically singular "
            f"(sigma_min={svals[-1]:.3e}, sigma_max={svals[0]:.3e})",
            vertex=system.vertex,
        )
    return np.linalg.solve(a, b)


def recover_first_layers(g: MixedGraph, sigma, v: int, sing_tol: float = DEFAULT_SING_TOL) -> np.ndarray:
    """Closed form for vertices without grandparents:
    sigma[pa, pa]^{-1} @ sigma[pa, v]."""
    if g.spa(v):
        raise OrderingError(f"vertex {v} has grandparents; use the general system")
    sig = as_matrix(sigma)
    pa = list(g.parents(v))
    if not pa:
        return np.zeros(0)
    a = sig[np.ix_(pa, pa)]
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= sing_tol * svals[0]:
        raise NearSingularError(
            f"vertex {v}: parent covariance block is numerically singular", vertex=v
        )
    return np.linalg.solve(a, sig[pa, v])


def recover_all(g: MixedGraph, sigma, config: RecoveryConfig | None = None) -> RecoveryResult:
    """Recover the full weight matrix, processing layers in increasing order.

    Forced edges are copied verbatim; per-vertex diagnostics carry the
    solve residual and the condition number of the system matrix.
    """
    config = config or RecoveryConfig()
    g.require_bow_free()
    sig = as_matrix(sigma)
    if sig.shape != (g.n, g.n):
        raise OrderingError(f"covariance shape {sig.shape} does not match n={g.n}")

    lam = np.zeros((g.n, g.n))
    for (u, v), w in g.forced_weights.items():
        lam[u, v] = w

    decomposition = g.layer_decomposition()
    forced = g.forced_weights
    per_vertex: dict[int, VertexDiagnostics] = {}
    for _, members in sorted(decomposition.layers.items()):
        for v in members:
            unknown = [p for p in g.parents(v) if (p, v) not in forced]
            if not unknown:
                continue
            partial_form = not g.spa(v) and not any((p, v) in forced for p in g.parents(v))
            if partial_form:
                weights = recover_first_layers(g, sig, v, config.sing_tol)
                pa = list(g.parents(v))
                a = sig[np.ix_(pa, pa)]
                residual = float(np.linalg.norm(a @ weights - sig[pa, v]))
                svals = np.linalg.svd(a, compute_uv=False)
            else:
                y_override = config.y_sets.get(v) if config.y_sets else None
                system = build_system(g, sig, lam, v, y_set=y_override)
                weights = recover_vertex(system, config.sing_tol)
                residual = float(np.linalg.norm(system.a_matrix @ weights - system.b_vector))
                svals = np.linalg.svd(system.a_matrix, compute_uv=False)
            lam[unknown, v] = weights
            condition = float(svals[0] / svals[-1]) if svals[-1] > 0 else float("inf")
            per_vertex[v] = VertexDiagnostics(residual, condition, partial_form)

    forced_ok = all(lam[u, v] == w for (u, v), w in g.forced_weights.items())
    return RecoveryResult(lambda_hat=lam, per_vertex=per_vertex, forced_edges_respected=forced_ok)


def recover_full_params(g: MixedGraph, sigma, config: RecoveryConfig | None = None) -> ParamSet:
    """Full parameter recovery: weights, implied noise covariance, pattern
    projection."""
    config = config or RecoveryConfig()
    result = recover_all(g, sigma, config)
    omega_hat = recover_omega(g, result.lambda_hat, sigma)
    omega = project_omega_pattern(
        omega_hat, g.bidirected, tol=config.omega_tol, max_iters=config.omega_max_iters
    )
    return ParamSet(result.lambda_hat, omega)


def recovery_to_dict(result: RecoveryResult) -> dict:
    """CLI-facing JSON form; vertices are 1-based in the diagnostics keys."""
    return {
        "lambda": result.lambda_hat.tolist(),
        "diagnostics": {
            str(v + 1): {
                "residual": d.residual,
                "condition": d.condition,
                "partial_form": d.used_partial_form,
            }
            for v, d in sorted(result.per_vertex.items())
        },
        "forced_edges_respected": result.forced_edges_respected,
    }

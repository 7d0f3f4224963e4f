"""Directed communication graphs and their spectral structure.

A topology is a weighted digraph over agent nodes 1..m.  Edge (i, j) with
weight a_ij > 0 means node i *receives* the state of node j, so information
flows j -> i.  Under this orientation a node is "globally reachable" when its
information can reach every node, and that combinatorial property lines up
with the algebraic one: the graph Laplacian has a simple zero eigenvalue
whose left null vector is supported exactly on the globally reachable nodes.
`reachability_consistency` cross-checks the two routes and reports any
disagreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EigenSolveFailure(Exception):
    """Eigenvalue or null-space computation did not converge."""


def _as_weight_matrix(m, edges):
    a = np.zeros((m, m), dtype=float)
    for e in edges:
        if len(e) == 2:
            i, j = e
            w = 1.0
        else:
            i, j, w = e
        if not (1 <= i <= m and 1 <= j <= m):
            raise ValueError(f"edge ({i}, {j}) outside node range 1..{m}")
        if i == j:
            raise ValueError(f"self-loop on node {i} not allowed")
        if not w > 0:
            raise ValueError(f"edge ({i}, {j}) needs positive weight, got {w}")
        a[i - 1, j - 1] = float(w)
    return a


@dataclass(frozen=True, eq=False)
class Topology:
    """Weighted digraph on nodes 1..m; weights[i-1, j-1] = a_ij."""

    m: int
    edges: frozenset
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=float)
        if a.shape != (self.m, self.m):
            raise ValueError(f"weight matrix shape {a.shape} != ({self.m}, {self.m})")
        if np.any(a < 0):
            raise ValueError("edge weights must be non-negative")
        if np.any(np.diag(a) != 0):
            raise ValueError("diagonal of the weight matrix must be zero")
        for i in range(self.m):
            for j in range(self.m):
                has_edge = (i + 1, j + 1) in self.edges
                if has_edge != (a[i, j] > 0):
                    raise ValueError(
                        f"edge set and weights disagree at ({i + 1}, {j + 1})"
                    )
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    @classmethod
    def from_edges(cls, m, edges):
        """Build from an iterable of (i, j) or (i, j, weight) tuples, 1-based."""
        edges = [tuple(e) for e in edges]
        a = _as_weight_matrix(m, edges)
        return cls(m=m, edges=frozenset((e[0], e[1]) for e in edges), weights=a)


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    zero_multiplicity: int
    left_null_vector: np.ndarray | None
    right_null_vector: np.ndarray


@dataclass(frozen=True)
class ConsistencyReport:
    """Agreement record between graph reachability and Laplacian spectrum."""

    reachable: frozenset
    simple_zero: bool
    support: frozenset | None
    agree: bool
    notes: tuple = ()


def laplacian(t: Topology) -> np.ndarray:
    # The diagonal is the exact negation of the rounded off-diagonal row sum,
    # so summing a row with the diagonal added last cancels bit-exactly.
    # (Summation orders that interleave the diagonal with the off-diagonal
    # terms can leave an ulp-level residual; those are covered by the
    # 1e-12-relative L @ 1 guarantee instead.)
    lap = -t.weights.copy()
    np.fill_diagonal(lap, 0.0)
    diag = -lap.sum(axis=1)
    np.fill_diagonal(lap, diag)
    return lap


def globally_reachable_nodes(t: Topology):
    """Nodes whose information reaches every node, by graph search only.

    Edge (i, j) carries information j -> i, so successors of j are the nodes
    i with a_ij > 0.
    """
    a = t.weights
    succ = [np.flatnonzero(a[:, j] > 0) for j in range(t.m)]
    out = set()
    for start in range(t.m):
        seen = np.zeros(t.m, dtype=bool)
        seen[start] = True
        stack = [start]
        while stack:
            j = stack.pop()
            for i in succ[j]:
                if not seen[i]:
                    seen[i] = True
                    stack.append(int(i))
        if seen.all():
            out.add(start + 1)
    return out


def _left_null_vector(lap, m):
    # Null space of L^T via SVD; valid to call only when the zero eigenvalue
    # is simple, in which case the smallest singular vector spans it.
    try:
        _, _, vh = np.linalg.svd(lap.T)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailure(f"SVD of transposed Laplacian failed: {exc}") from exc
    x = vh[-1]
    # Sign fix first (largest-magnitude entry positive), then unit sum.
    k = int(np.argmax(np.abs(x)))
    if x[k] < 0:
        x = -x
    s = x.sum()
    if s == 0:
        raise EigenSolveFailure("left null vector has zero sum; cannot normalize")
    return x / s


def spectral_summary(t: Topology, tol: float = 1e-9) -> SpectralSummary:
    """Eigenvalues of the Laplacian plus null-vector data.

    An eigenvalue counts as zero when |lambda| <= tol * (1 + inf-norm of L).
    The left null vector is reported only for a simple zero eigenvalue,
    normalized to unit sum with its largest-magnitude entry positive.
    """
    lap = laplacian(t)
    try:
        eigs = np.linalg.eigvals(lap)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailure(f"eigenvalue solve failed: {exc}") from exc
    scale = tol * (1.0 + np.linalg.norm(lap, np.inf))
    zero_mult = int(np.count_nonzero(np.abs(eigs) <= scale))
    left = _left_null_vector(lap, t.m) if zero_mult == 1 else None
    return SpectralSummary(
        eigenvalues=eigs,
        zero_multiplicity=zero_mult,
        left_null_vector=left,
        right_null_vector=np.ones(t.m),
    )


def reachability_consistency(
    t: Topology, tol: float = 1e-9, support_tol: float = 1e-6
) -> ConsistencyReport:
    """Cross-check combinatorial reachability against the Laplacian spectrum.

    The two verdicts must coincide: some node globally reachable iff the zero
    eigenvalue is simple.  When both hold, the support of the left null
    vector (entries > support_tol) must equal the reachable set.
    """
    reach = frozenset(globally_reachable_nodes(t))
    summ = spectral_summary(t, tol=tol)
    simple = summ.zero_multiplicity == 1
    notes = []
    if bool(reach) != simple:
        notes.append(
            f"reachability ({sorted(reach)}) vs zero multiplicity "
            f"{summ.zero_multiplicity} disagree"
        )
    support = None
    if reach and simple:
        x = summ.left_null_vector
        support = frozenset(int(k + 1) for k in np.flatnonzero(x > support_tol))
        if support != reach:
            notes.append(
                f"left null support {sorted(support)} != reachable {sorted(reach)}"
            )
    return ConsistencyReport(
        reachable=reach,
        simple_zero=simple,
        support=support,
        agree=not notes,
        notes=tuple(notes),
    )

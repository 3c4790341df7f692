"""Exact dense evolution of small systems, the ground truth for TDVP.

States are 2^N complex vectors in the Z-product basis with canonical
(row-major) site order; site 0 is the most significant qubit.  Terms are
applied matrix-free per Pauli factor, or through a sparse matrix for
repeated products.  Hard-capped at 20 sites.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hamiltonian import PAULI, TermList
from .lattice import SiteOrdering
from .shapes import ShapeMask
from .tdvp import krylov_expm_apply
from .ttn import Observable

MAX_SITES = 20


@dataclass
class DenseState:
    """Full wave function over n_sites spins."""

    n_sites: int
    psi: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_sites > MAX_SITES:
            raise ValueError(f"dense states limited to {MAX_SITES} sites, got {self.n_sites}")
        if self.psi.shape != (2 ** self.n_sites,):
            raise ValueError("amplitude vector has the wrong length")

    def copy(self) -> "DenseState":
        return DenseState(self.n_sites, self.psi.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))


def product_state_dense(mask: ShapeMask) -> DenseState:
    """X-basis product state of a mask (occupied = |-x>), by Kronecker build."""
    n = mask.geometry.n_sites
    if n > MAX_SITES:
        raise ValueError(f"dense states limited to {MAX_SITES} sites, got {n}")
    plus = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    minus = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)
    psi = np.array([1.0], dtype=complex)
    for s in range(n):
        x, y = mask.geometry.site_coords(s)
        psi = np.kron(psi, minus if mask.grid[x, y] else plus)
    return DenseState(n, psi)


def _apply_single(psi: np.ndarray, n: int, site: int, op: str) -> np.ndarray:
    """Apply X or Z at one site; site 0 is the most significant qubit."""
    left = 2 ** site
    right = 2 ** (n - site - 1)
    work = psi.reshape(left, 2, right)
    if op == "x":
        return work[:, ::-1, :].reshape(-1)
    out = work.copy()
    out[:, 1, :] *= -1.0
    return out.reshape(-1)


def apply_terms(terms: TermList, psi: np.ndarray) -> np.ndarray:
    """Matrix-free H @ psi."""
    n = terms.n_sites
    out = np.zeros_like(psi)
    for term in terms.all_terms():
        if term.coeff == 0.0:
            continue
        work = psi
        for s, op in zip(term.sites, term.ops):
            work = _apply_single(work, n, s, op)
        out += term.coeff * work
    return out


def sparse_hamiltonian(terms: TermList) -> sp.csr_matrix:
    """H as a sparse CSR matrix (fast repeated matvecs)."""
    n = terms.n_sites
    if n > MAX_SITES:
        raise ValueError(f"sparse Hamiltonian limited to {MAX_SITES} sites, got {n}")
    dim = 2 ** n
    h = sp.csr_matrix((dim, dim), dtype=complex)
    for term in terms.all_terms():
        if term.coeff == 0.0:
            continue
        by_site = dict(zip(term.sites, term.ops))
        op = sp.identity(1, dtype=complex, format="csr")
        for s in range(n):
            factor = sp.csr_matrix(PAULI[by_site[s]]) if s in by_site else sp.identity(2, format="csr")
            op = sp.kron(op, factor, format="csr")
        h = h + term.coeff * op
    return h


def evolve_exact(psi0: DenseState, terms: TermList, times, *, method: str = "auto",
                 krylov_dt: float = 0.05, krylov_dim: int = 40,
                 krylov_tol: float = 1e-12) -> list:
    """States exp(-i H t) |psi0> at the requested (sorted, nonnegative) times.

    method 'eigh' diagonalizes H densely (<= 12 sites) and evaluates any
    time directly; 'krylov' steps a Lanczos exponential through the time
    grid, splitting long intervals at ``krylov_dt``.  'auto' picks 'eigh'
    when affordable.
    """
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        return []
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and nonnegative")
    n = psi0.n_sites
    if method == "auto":
        method = "eigh" if n <= 12 else "krylov"

    if method == "eigh":
        if n > 12:
            raise ValueError("eigh backend limited to 12 sites")
        h = sparse_hamiltonian(terms).toarray()
        evals, evecs = np.linalg.eigh(h)
        coeffs = evecs.conj().T @ psi0.psi
        return [
            DenseState(n, evecs @ (np.exp(-1j * evals * t) * coeffs))
            for t in times
        ]

    if method != "krylov":
        raise ValueError(f"unknown method {method!r}")
    h = sparse_hamiltonian(terms)
    out = []
    psi = psi0.psi.copy()
    t_prev = 0.0
    for t in times:
        span = t - t_prev
        while span > 1e-12:
            step = min(span, krylov_dt)
            psi = krylov_expm_apply(lambda v: h @ v, psi, step,
                                    tol=krylov_tol, max_dim=krylov_dim)
            span -= step
        t_prev = t
        out.append(DenseState(n, psi.copy()))
    return out


def local_x_profile_dense(state: DenseState) -> np.ndarray:
    """<X_s> for every site."""
    n = state.n_sites
    out = np.empty(n)
    for s in range(n):
        flipped = _apply_single(state.psi, n, s, "x")
        out[s] = float(np.vdot(state.psi, flipped).real)
    return out


def energy_dense(state: DenseState, terms: TermList) -> float:
    return float(np.vdot(state.psi, apply_terms(terms, state.psi)).real)


def observables_exact(state: DenseState, obs: Observable) -> float:
    """Expectation of the same observable kinds the tree state supports."""
    n = state.n_sites
    if obs.kind == "average_x":
        return float(local_x_profile_dense(state).mean())
    if obs.kind in ("local_x", "local_z"):
        (site,) = obs.support
        w = _apply_single(state.psi, n, site, "x" if obs.kind == "local_x" else "z")
        return float(np.vdot(state.psi, w).real)
    if obs.kind == "bond_energy":
        a, b = obs.support
        w = _apply_single(_apply_single(state.psi, n, a, "x"), n, b, "x")
        return float(np.vdot(state.psi, w).real)
    if obs.kind == "local_op":
        m = np.asarray(obs.matrix)
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("observable insertion must be Hermitian")
        (site,) = obs.support
        left = 2 ** site
        right = 2 ** (n - site - 1)
        work = state.psi.reshape(left, 2, right)
        w = np.einsum("ab,ibr->iar", m, work).reshape(-1)
        return float(np.vdot(state.psi, w).real)
    raise ValueError(f"unknown observable kind {obs.kind!r}")


def subtree_entropies_dense(state: DenseState, ordering: SiteOrdering) -> dict:
    """Entanglement entropies across every tree-edge bipartition.

    Bipartitions are the contiguous Hilbert-order leaf intervals that a
    binary tree over the ordering would carve out, keyed like the tree
    nodes, so TDVP and exact series are directly comparable.
    """
    from .ttn import TreeTopology

    n = state.n_sites
    topo = TreeTopology(n)
    perm = ordering.leaf_to_canonical()
    tensor = state.psi.reshape((2,) * n).transpose(perm)
    out = {}
    for node in topo.nodes():
        if node == topo.root:
            continue
        lo, hi = topo.leaf_interval(node)
        block = tensor.reshape(2 ** lo, 2 ** (hi - lo), -1)
        mat = np.moveaxis(block, 1, 0).reshape(2 ** (hi - lo), -1)
        svals = np.linalg.svd(mat, compute_uv=False)
        p = svals ** 2
        p = p[p > 1e-15]
        total = p.sum()
        out[node] = float(-(p / total * np.log(p / total)).sum()) if total > 0 else 0.0
    return out

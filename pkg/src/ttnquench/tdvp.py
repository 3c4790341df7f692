"""Single-site TDVP time evolution of tree states under the Ising terms.

The Hamiltonian environments are blocked per tree edge: every directed edge
carries one matrix for all terms fully inside its subtree plus one "open"
matrix per site whose Ising bond crosses the edge.  A full time step is a
symmetric (Strang) composition of a root-to-leaves and a leaves-to-root
pass; each pass evolves every site tensor forward and every bond matrix
backward by dt/2 with Lanczos exponentials, which preserves the norm and,
for a time-independent Hamiltonian, the energy up to integrator error.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hamiltonian import PAULI, PAULI_X, TermList
from .ttn import (
    TreeState,
    TreeTopology,
    _absorb,
    _qr_toward,
    local_x_profile,
    bond_entropies,
    normalize,
    expand_to_capacity,
)


class KrylovConvergenceError(RuntimeError):
    """Raised when the Lanczos exponential misses its tolerance at max_dim."""


@dataclass(frozen=True)
class TdvpConfig:
    """Integrator knobs: time step, Lanczos size/tolerance, SVD cutoff."""

    dt: float
    krylov_dim: int = 25
    krylov_tol: float = 1e-10
    svd_cutoff: float = 1e-10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.krylov_dim < 2:
            raise ValueError(f"krylov_dim must be >= 2, got {self.krylov_dim}")


def krylov_expm_apply(apply_h, vec, dt, tol=1e-10, max_dim=25):
    """Approximate ``exp(-1j * dt * H) @ vec`` for a Hermitian map.

    ``apply_h`` maps ndarrays to ndarrays of the same shape.  Lanczos with
    full reorthogonalization; the a-posteriori estimate ``beta * |u_last|``
    controls convergence.  A breakdown (zero next coupling) means the
    Krylov space is invariant, so the result is exact and returned early.
    """
    vec = np.asarray(vec, dtype=complex)
    beta0 = float(np.linalg.norm(vec.ravel()))
    if beta0 == 0.0:
        raise ValueError("krylov_expm_apply needs a nonzero vector")
    basis = [vec / beta0]
    alphas: list[float] = []
    betas: list[float] = []

    def assemble(u_coeffs):
        out = np.zeros_like(vec)
        for c, v in zip(u_coeffs, basis):
            out += c * v
        return beta0 * out

    def propagator_column():
        evals, evecs = eigh_tridiagonal(np.array(alphas), np.array(betas))
        phases = np.exp(-1j * dt * evals)
        return evecs @ (phases * evecs[0, :].conj())

    w = apply_h(basis[0])
    a = float(np.vdot(basis[0], w).real)
    alphas.append(a)
    w = w - a * basis[0]
    for _ in range(max_dim):
        b = float(np.linalg.norm(w.ravel()))
        u = propagator_column()
        if b * abs(u[-1]) <= tol or b < 1e-14:
            return assemble(u)
        if len(alphas) >= max_dim:
            raise KrylovConvergenceError(
                f"Lanczos did not reach tol={tol} at max_dim={max_dim} "
                f"(residual estimate {b * abs(u[-1]):.3e}, |dt|={abs(dt)})"
            )
        betas.append(b)
        v = w / b
        # full reorthogonalization
        for q in basis:
            v = v - np.vdot(q, v) * q
        v = v / float(np.linalg.norm(v.ravel()))
        basis.append(v)
        w = apply_h(v) - b * basis[-2]
        a = float(np.vdot(v, w).real)
        alphas.append(a)
        w = w - a * v
    raise KrylovConvergenceError("unreachable")


def _apply_leg(mat, tensor, axis):
    """Contract ``mat[out, in]`` with ``tensor`` along ``axis``.

    Specialized per axis to hit plain GEMMs without transpose copies; this
    sits in the innermost Krylov loop.
    """
    d0, d1, d2 = tensor.shape
    if axis == 0:
        out = mat @ tensor.reshape(d0, d1 * d2)
        return out.reshape(-1, d1, d2)
    if axis == 2:
        out = tensor.reshape(d0 * d1, d2) @ mat.T
        return out.reshape(d0, d1, -1)
    if d2 == 1:
        out = tensor.reshape(d0, d1) @ mat.T
        return out.reshape(d0, -1, 1)
    return np.matmul(mat, tensor)


@dataclass(frozen=True)
class _EdgeEnv:
    """Blocked environment on one side of an edge, seen across the bond.

    ``ham[out, in]`` collects every Hamiltonian term fully inside that side;
    ``open_x[leaf]`` carries an X insertion at a site whose Ising bond
    crosses the edge.
    """

    ham: np.ndarray
    open_x: dict = field(default_factory=dict)


def _phys_env(site_block: np.ndarray, leaf: int) -> _EdgeEnv:
    return _EdgeEnv(ham=site_block, open_x={leaf: PAULI_X})


class EnvironmentCache:
    """Per-edge Hamiltonian environments for a tree state.

    Environments are keyed by directed edge ``(from_node, to_node)`` and are
    valid while every tensor on the from side stays isometric toward the
    edge.  The sweep refreshes the crossed edge after each center hop, so
    all environments pointing at the current center are always usable.
    """

    def __init__(self, state: TreeState, terms: TermList):
        self.topo = state.topology
        self.ordering = state.ordering
        n_leaves = state.n_sites
        leaf_of = {}
        for leaf in range(n_leaves):
            x, y = state.ordering.site_of_leaf(leaf)
            leaf_of[state.ordering.geometry.site_index(x, y)] = leaf

        self.site_block = {leaf: np.zeros((2, 2), dtype=complex) for leaf in range(n_leaves)}
        for term in terms.one_site:
            (s,) = term.sites
            (op,) = term.ops
            self.site_block[leaf_of[s]] += term.coeff * PAULI[op]
        self.bonds = []
        for term in terms.two_site:
            if term.ops != ("x", "x"):
                raise ValueError("environment blocking expects XX bond terms")
            la, lb = sorted(leaf_of[s] for s in term.sites)
            self.bonds.append((la, lb, term.coeff))

        # bonds crossing each node's legs, and each tree edge
        self.cross_at_node = {n: [] for n in self.topo.nodes()}
        self.crossing = {n: [] for n in self.topo.nodes() if n != self.topo.root}
        for n in self.topo.nodes():
            lo, hi = self.topo.leaf_interval(n)
            mid = (lo + hi) // 2

            def region(leaf):
                if leaf < lo or leaf >= hi:
                    return 2
                return 0 if leaf < mid else 1

            for la, lb, coeff in self.bonds:
                ra, rb = region(la), region(lb)
                if ra == rb:
                    continue
                self.cross_at_node[n].append((ra, la, rb, lb, coeff))
                if n != self.topo.root and 2 in (ra, rb):
                    inner, outer = (la, lb) if rb == 2 else (lb, la)
                    self.crossing[n].append((inner, outer, coeff))

        self.env = {}
        self.last_max_entropy = 0.0
        self.build(state)

    # -- environment access -------------------------------------------------

    def leg_env(self, state: TreeState, node, axis) -> _EdgeEnv:
        """Environment seen by ``node`` across its leg ``axis``."""
        if axis == 2:
            parent = self.topo.parent(node)
            if parent is None:
                return _EdgeEnv(ham=np.zeros((1, 1), dtype=complex))
            return self.env[(parent, node)]
        if self.topo.is_bottom(node):
            lo, _ = self.topo.leaf_interval(node)
            leaf = lo + axis
            return _phys_env(self.site_block[leaf], leaf)
        child = self.topo.children(node)[axis]
        return self.env[(child, node)]

    def build(self, state: TreeState):
        """Compute all upward environments; requires the center at the root."""
        if state.center != self.topo.root:
            raise ValueError("environment build requires the center at the root")
        for k in range(self.topo.depth - 1, 0, -1):
            for i in range(2 ** k):
                node = (k, i)
                self.refresh_edge(state, node, self.topo.parent(node))

    def refresh_edge(self, state: TreeState, n, m):
        """Recompute env[(n, m)] from n's tensor and its other-leg envs."""
        out_axis = self.topo.axis_toward(n, m)
        other = [a for a in (0, 1, 2) if a != out_axis]
        envs = {a: self.leg_env(state, n, a) for a in other}
        t = state.tensors[n]

        acc = _apply_leg(envs[other[0]].ham, t, other[0])
        acc += _apply_leg(envs[other[1]].ham, t, other[1])
        for ra, la, rb, lb, coeff in self.cross_at_node[n]:
            if ra in other and rb in other:
                tmp = _apply_leg(envs[ra].open_x[la], t, ra)
                tmp = _apply_leg(envs[rb].open_x[lb], tmp, rb)
                acc += coeff * tmp

        def project(x):
            moved = np.moveaxis(x, out_axis, -1)
            return moved.reshape(-1, moved.shape[-1])

        t_mat = project(t)
        ham_out = t_mat.conj().T @ project(acc)

        child = n if m == self.topo.parent(n) else m
        inward = m == self.topo.parent(n)
        open_out = {}
        for inner, outer, _ in self.crossing[child]:
            leaf = inner if inward else outer
            ax = self._region_axis(n, leaf)
            tmp = _apply_leg(envs[ax].open_x[leaf], t, ax)
            open_out[leaf] = t_mat.conj().T @ project(tmp)
        self.env[(n, m)] = _EdgeEnv(ham=ham_out, open_x=open_out)

    def _region_axis(self, node, leaf) -> int:
        lo, hi = self.topo.leaf_interval(node)
        if leaf < lo or leaf >= hi:
            return 2
        return 0 if leaf < (lo + hi) // 2 else 1

    # -- effective operators -------------------------------------------------

    def heff_apply(self, state: TreeState, node):
        """Closure applying the one-site effective Hamiltonian at ``node``."""
        envs = {a: self.leg_env(state, node, a) for a in (0, 1, 2)}
        cross = self.cross_at_node[node]

        def apply(t):
            out = _apply_leg(envs[0].ham, t, 0)
            out += _apply_leg(envs[1].ham, t, 1)
            out += _apply_leg(envs[2].ham, t, 2)
            for ra, la, rb, lb, coeff in cross:
                tmp = _apply_leg(envs[ra].open_x[la], t, ra)
                tmp = _apply_leg(envs[rb].open_x[lb], tmp, rb)
                out += coeff * tmp
            return out

        return apply

    def keff_apply(self, n, m):
        """Closure for the zero-site (bond) effective Hamiltonian on edge n-m.

        The bond matrix lives as ``r[n_side, m_side]``; env[(n, m)] and
        env[(m, n)] must both be current.
        """
        e_n = self.env[(n, m)]
        e_m = self.env[(m, n)]
        child = n if m == self.topo.parent(n) else m
        n_is_child = child == n
        pairs = []
        for inner, outer, coeff in self.crossing[child]:
            ln, lm = (inner, outer) if n_is_child else (outer, inner)
            pairs.append((e_n.open_x[ln], e_m.open_x[lm], coeff))

        def apply(r):
            out = e_n.ham @ r + r @ e_m.ham.T
            for on, om, coeff in pairs:
                out += coeff * (on @ r @ om.T)
            return out

        return apply

    def energy(self, state: TreeState) -> float:
        """<H> read off the center tensor; envs into the center must be valid."""
        t = state.tensors[state.center]
        return float(np.vdot(t, self.heff_apply(state, state.center)(t)).real)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _node_forward(state, cache, cfg, node, h):
    t = state.tensors[node]
    apply_h = cache.heff_apply(state, node)
    state.tensors[node] = krylov_expm_apply(
        apply_h, t, h, tol=cfg.krylov_tol, max_dim=cfg.krylov_dim
    )


def _bond_hop(state, cache, cfg, n, m, h):
    """Move the center n -> m; h > 0 also evolves the bond matrix backward."""
    topo = cache.topo
    ax = topo.axis_toward(n, m)
    q, r = _qr_toward(state.tensors[n], ax)
    state.tensors[n] = q
    cache.refresh_edge(state, n, m)
    if h != 0.0:
        apply_k = cache.keff_apply(n, m)
        r = krylov_expm_apply(apply_k, r, -h, tol=cfg.krylov_tol, max_dim=cfg.krylov_dim)
    state.tensors[m] = _absorb(state.tensors[m], r, topo.axis_toward(m, n))
    state.center = m


def _pass_down(state, cache, cfg, node, h):
    """Adjoint pass: node forward first, then descend; center in == out."""
    _node_forward(state, cache, cfg, node, h)
    for child in reversed(cache.topo.children(node)):
        _bond_hop(state, cache, cfg, node, child, h)
        _pass_down(state, cache, cfg, child, h)
        _bond_hop(state, cache, cfg, child, node, 0.0)


def _pass_up(state, cache, cfg, node, h):
    """Primary pass: descend first, node forward last; center in == out."""
    for child in cache.topo.children(node):
        _bond_hop(state, cache, cfg, node, child, 0.0)
        _pass_up(state, cache, cfg, child, h)
        _bond_hop(state, cache, cfg, child, node, h)
    _node_forward(state, cache, cfg, node, h)


def sweep(state: TreeState, terms: TermList, env: EnvironmentCache, cfg: TdvpConfig) -> TreeState:
    """One full symmetric time step of size cfg.dt.

    Strang composition of the adjoint (root-first) and primary (leaves-
    first) passes with dt/2 each.  The state is mutated in place, ends
    canonical at the root and normalized, with the norm factor accumulated
    in ``state.log_norm``.
    """
    if state.center != env.topo.root:
        raise ValueError("sweep requires the center at the root")
    h = cfg.dt / 2.0
    _pass_down(state, env, cfg, env.topo.root, h)
    _pass_up(state, env, cfg, env.topo.root, h)
    normalize(state)
    return state


@dataclass
class Trajectory:
    """Per-step series recorded during evolution."""

    times: np.ndarray
    avg_x: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    max_entropy: np.ndarray
    callback_results: list = field(default_factory=list)


def evolve(state: TreeState, terms: TermList, cfg: TdvpConfig, t_max: float,
           callbacks=()) -> Trajectory:
    """Evolve a tree state to ``t_max`` in steps of cfg.dt.

    Bonds are first padded to their chi_max-capped maxima (single-site TDVP
    cannot grow them).  ``callbacks`` is a sequence of ``(times, fn)`` pairs;
    ``fn(state, t)`` is invoked whenever a step lands within dt/2 of a
    requested time, including t=0.  Returns the per-step series; the state
    is mutated in place.
    """
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    expand_to_capacity(state)
    cache = EnvironmentCache(state, terms)
    n_steps = int(round(t_max / cfg.dt)) if t_max > 0 else 0

    times, avg_x, energy, norm, max_ent = [], [], [], [], []
    results = [dict() for _ in callbacks]

    def record(t):
        profile = local_x_profile(state)
        entropies = bond_entropies(state)
        times.append(t)
        avg_x.append(float(profile.mean()))
        energy.append(cache.energy(state))
        norm.append(float(np.exp(state.log_norm)))
        max_ent.append(max(entropies.values()) if entropies else 0.0)
        for (req_times, fn), store in zip(callbacks, results):
            for rt in np.atleast_1d(req_times):
                if abs(rt - t) <= cfg.dt / 2 + 1e-12 and rt not in store:
                    store[rt] = fn(state, t)

    def bundle():
        return Trajectory(
            times=np.array(times),
            avg_x=np.array(avg_x),
            energy=np.array(energy),
            norm=np.array(norm),
            max_entropy=np.array(max_ent),
            callback_results=results,
        )

    record(0.0)
    for step in range(1, n_steps + 1):
        try:
            sweep(state, terms, cache, cfg)
        except KrylovConvergenceError as err:
            err.partial = bundle()  # rejected step; what was completed so far
            raise
        record(step * cfg.dt)
    return bundle()

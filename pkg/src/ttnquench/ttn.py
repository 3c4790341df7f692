"""Binary tree-tensor-network states over Hilbert-ordered lattice sites.

Every tensor is rank 3.  Bottom-layer tensors carry two physical legs (the
leaves, in Hilbert-curve order) and one parent leg; internal tensors carry
two child legs and one parent leg; the root's parent leg has dimension 1.
Axis order is always (left child, right child, parent).

States are kept in isometric gauge: all tensors except the orthogonality
center contract to the identity over their legs pointing away from the
center.  Observables, truncation and entropies all read off the center.
"""

from dataclasses import dataclass, field

import numpy as np

from .lattice import SiteOrdering
from .hamiltonian import PAULI, PAULI_X, PAULI_Z
from .shapes import ShapeMask

_EXPAND_SEED = 0x5EED  # deterministic orthonormal completions


@dataclass(frozen=True)
class TreeTopology:
    """Node bookkeeping for a perfect binary tree with n_sites leaves.

    Nodes are (layer, index) pairs with the root at (0, 0); layer k holds
    2**k tensors and the bottom layer holds n_sites / 2.  Bottom node
    (depth-1, i) carries leaves 2i and 2i+1.
    """

    n_sites: int

    def __post_init__(self):
        n = self.n_sites
        if n < 4 or (n & (n - 1)) != 0:
            raise ValueError(f"tree needs a power-of-two site count >= 4, got {n}")

    @property
    def depth(self) -> int:
        return self.n_sites.bit_length() - 1

    @property
    def root(self):
        return (0, 0)

    def nodes(self):
        for k in range(self.depth):
            for i in range(2 ** k):
                yield (k, i)

    def is_bottom(self, node) -> bool:
        return node[0] == self.depth - 1

    def children(self, node):
        k, i = node
        if self.is_bottom(node):
            return []
        return [(k + 1, 2 * i), (k + 1, 2 * i + 1)]

    def parent(self, node):
        k, i = node
        if k == 0:
            return None
        return (k - 1, i // 2)

    def leaf_interval(self, node):
        """Half-open [lo, hi) of leaf indices below a node."""
        k, i = node
        span = self.n_sites >> k
        return i * span, (i + 1) * span

    def bottom_node_of_leaf(self, leaf: int):
        return (self.depth - 1, leaf // 2)

    def axis_toward(self, node, other) -> int:
        """Axis of ``node``'s tensor pointing at adjacent node ``other``."""
        if other == self.parent(node):
            return 2
        kids = self.children(node)
        if other in kids:
            return kids.index(other)
        raise ValueError(f"{other} is not adjacent to {node}")

    def path(self, start, goal) -> list:
        """Node sequence from start to goal through the tree."""
        up_a = [start]
        while up_a[-1] != self.root:
            up_a.append(self.parent(up_a[-1]))
        up_b = [goal]
        while up_b[-1] != self.root:
            up_b.append(self.parent(up_b[-1]))
        in_a = set(up_a)
        meet = next(n for n in up_b if n in in_a)
        head = up_a[: up_a.index(meet) + 1]
        tail = up_b[: up_b.index(meet)]
        return head + tail[::-1]

    def max_bond(self, node, chi_max: int) -> int:
        """Largest useful parent-bond dimension of a node under a chi cap."""
        lo, hi = self.leaf_interval(node)
        below = hi - lo
        return int(min(2 ** min(below, self.n_sites - below), chi_max))


@dataclass
class TreeState:
    """Tree tensor network wave function in isometric gauge.

    ``tensors[node]`` has axes (left, right, parent); ``center`` names the
    single non-isometric node; ``log_norm`` accumulates normalization
    factors stripped off during evolution.
    """

    ordering: SiteOrdering
    chi_max: int
    tensors: dict = field(repr=False)
    center: tuple = (0, 0)
    log_norm: float = 0.0

    @property
    def topology(self) -> TreeTopology:
        return TreeTopology(self.ordering.n_sites)

    @property
    def n_sites(self) -> int:
        return self.ordering.n_sites

    def copy(self) -> "TreeState":
        return TreeState(
            ordering=self.ordering,
            chi_max=self.chi_max,
            tensors={n: t.copy() for n, t in self.tensors.items()},
            center=self.center,
            log_norm=self.log_norm,
        )

    def norm(self) -> float:
        """Norm of the state vector (equals the center tensor's norm)."""
        return float(np.linalg.norm(self.tensors[self.center]))

    def bond_dims(self) -> dict:
        return {n: t.shape for n, t in self.tensors.items()}


@dataclass(frozen=True)
class Observable:
    """A measurable quantity on a tree state.

    kinds: 'local_x'/'local_z' (support = site), 'average_x',
    'bond_energy' (support = site pair; the XX correlator, multiply by -J
    for the energy contribution), 'subtree_entropy' (support = node),
    'local_op' (support = site, with a Hermitian 2x2 ``matrix``).
    """

    kind: str
    support: tuple = ()
    matrix: np.ndarray | None = None


def product_state(ordering: SiteOrdering, mask: ShapeMask, chi_max: int) -> TreeState:
    """Bond-dimension-1 tree for the X-basis product state of a mask.

    Occupied sites carry |-x>, unoccupied sites |+x>; the state is
    normalized with the center at the root.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    topo = TreeTopology(ordering.n_sites)
    plus = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    minus = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)
    tensors = {}
    for node in topo.nodes():
        if topo.is_bottom(node):
            lo, _ = topo.leaf_interval(node)
            vecs = []
            for leaf in (lo, lo + 1):
                x, y = ordering.site_of_leaf(leaf)
                vecs.append(minus if mask.grid[x, y] else plus)
            tensors[node] = np.einsum("a,b->ab", vecs[0], vecs[1]).reshape(2, 2, 1)
        else:
            tensors[node] = np.ones((1, 1, 1), dtype=complex)
    return TreeState(ordering=ordering, chi_max=chi_max, tensors=tensors, center=topo.root)


def _qr_toward(tensor: np.ndarray, axis: int):
    """Split ``tensor = Q . R`` with Q isometric over all axes but ``axis``.

    Returns (Q as a tensor with the original axis order, R) where R carries
    (new bond, old axis index).
    """
    moved = np.moveaxis(tensor, axis, -1)
    shape = moved.shape
    mat = moved.reshape(-1, shape[-1])
    q, r = np.linalg.qr(mat)  # reduced
    q_tensor = np.moveaxis(q.reshape(shape[:-1] + (q.shape[1],)), -1, axis)
    return q_tensor, r


def _absorb(tensor: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``mat[new, old]`` into ``tensor`` along ``axis``."""
    return np.moveaxis(np.tensordot(mat, tensor, axes=(1, axis)), 0, axis)


def move_center(state: TreeState, node, hook=None) -> TreeState:
    """Move the orthogonality center to ``node`` by successive QR splits.

    Mutates and returns ``state``; the state vector is unchanged up to
    rounding.  ``hook(a, b)`` is called after each elementary hop a->b
    (used by the TDVP driver to refresh environments).
    """
    topo = state.topology
    if node not in state.tensors:
        raise ValueError(f"unknown node {node}")
    path = topo.path(state.center, node)
    for a, b in zip(path, path[1:]):
        ax = topo.axis_toward(a, b)
        q, r = _qr_toward(state.tensors[a], ax)
        state.tensors[a] = q
        state.tensors[b] = _absorb(state.tensors[b], r, topo.axis_toward(b, a))
        state.center = b
        if hook is not None:
            hook(a, b)
    return state


def canonicalize(state: TreeState, node=None) -> TreeState:
    """Re-isometrize every tensor toward ``node`` (default: root).

    Unlike :func:`move_center` this does not assume the state is already in
    canonical form; it sweeps all tensors bottom-up.
    """
    topo = state.topology
    # QR every tensor toward its parent, absorbing upward.
    for k in range(topo.depth - 1, 0, -1):
        for i in range(2 ** k):
            a = (k, i)
            q, r = _qr_toward(state.tensors[a], 2)
            state.tensors[a] = q
            b = topo.parent(a)
            state.tensors[b] = _absorb(state.tensors[b], r, topo.axis_toward(b, a))
    state.center = topo.root
    if node is not None and node != topo.root:
        move_center(state, node)
    return state


def normalize(state: TreeState) -> TreeState:
    """Scale the center tensor to unit norm, accumulating log_norm."""
    nrm = state.norm()
    if nrm == 0.0:
        raise ValueError("cannot normalize a zero state")
    state.tensors[state.center] = state.tensors[state.center] / nrm
    state.log_norm += float(np.log(nrm))
    return state


def expand_to_capacity(state: TreeState, rng=None) -> TreeState:
    """Pad every bond up to its chi_max-capped maximal dimension.

    The padded directions are orthonormal completions on the child side and
    zero rows on the parent side, so the state vector and the isometric
    gauge are both preserved exactly.  Needed because single-site TDVP
    cannot grow bond dimensions on its own.  Requires center at the root.
    """
    topo = state.topology
    if state.center != topo.root:
        move_center(state, topo.root)
    if rng is None:
        rng = np.random.default_rng(_EXPAND_SEED)
    for k in range(topo.depth - 1, 0, -1):
        for i in range(2 ** k):
            node = (k, i)
            t = state.tensors[node]
            dl, dr, dp = t.shape
            target = topo.max_bond(node, state.chi_max)
            if target <= dp:
                continue
            mat = t.reshape(dl * dr, dp)
            extra = rng.normal(size=(dl * dr, target - dp)) + 1j * rng.normal(
                size=(dl * dr, target - dp)
            )
            for _ in range(2):  # twice for numerical orthogonality
                extra -= mat @ (mat.conj().T @ extra)
                extra, _ = np.linalg.qr(extra)
            state.tensors[node] = np.concatenate([mat, extra], axis=1).reshape(dl, dr, target)
            parent = topo.parent(node)
            ax = topo.axis_toward(parent, node)
            pt = state.tensors[parent]
            pad = [(0, 0)] * 3
            pad[ax] = (0, target - dp)
            state.tensors[parent] = np.pad(pt, pad)
    return state


def isometry_defect(state: TreeState) -> float:
    """Largest deviation from the isometry condition over non-center tensors.

    For each tensor the legs pointing away from the center are contracted
    with the conjugate; the result must be the identity on the remaining leg.
    """
    topo = state.topology
    worst = 0.0
    for node in topo.nodes():
        if node == state.center:
            continue
        # axis pointing toward the center
        path = topo.path(node, state.center)
        ax = topo.axis_toward(node, path[1])
        t = np.moveaxis(state.tensors[node], ax, -1)
        mat = t.reshape(-1, t.shape[-1])
        gram = mat.conj().T @ mat
        worst = max(worst, float(np.max(np.abs(gram - np.eye(gram.shape[0])))))
    return worst


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

def _descend_rdms(state: TreeState):
    """Reduced density matrices seen from above, for every node.

    Requires the center at the root.  Returns {node: rho_parent_bond} where
    rho has shape (dp, dp) and is the reduced state of the parent bond after
    tracing everything outside the node's subtree.
    """
    topo = state.topology
    if state.center != topo.root:
        raise ValueError("RDM pass requires the center at the root")
    rhos = {}
    root_t = state.tensors[topo.root]
    for node in topo.nodes():
        if node == topo.root:
            continue
        parent = topo.parent(node)
        ax = topo.axis_toward(parent, node)
        if parent == topo.root:
            t = root_t
        else:
            rho_p = rhos[parent]
            t = np.tensordot(state.tensors[parent], rho_p, axes=(2, 0))  # l r p'
        other = [a for a in (0, 1, 2) if a != ax]
        rhos[node] = np.tensordot(
            t, state.tensors[parent].conj(), axes=(other, other)
        )
    return rhos


def one_site_rdms(state: TreeState) -> np.ndarray:
    """2x2 reduced density matrices for every site, canonical site order.

    One top-down pass; the state must be normalized with center at root
    (a copy is canonicalized if needed).
    """
    topo = state.topology
    if state.center != topo.root:
        state = move_center(state.copy(), topo.root)
    rhos = _descend_rdms(state)
    out = np.zeros((state.n_sites, 2, 2), dtype=complex)
    for i in range(2 ** (topo.depth - 1)):
        node = (topo.depth - 1, i)
        t = state.tensors[node]
        pair = np.tensordot(
            np.tensordot(t, rhos[node], axes=(2, 0)), t.conj(), axes=(2, 2)
        )  # a b a' b'
        lo, _ = topo.leaf_interval(node)
        for which, leaf in enumerate((lo, lo + 1)):
            x, y = state.ordering.site_of_leaf(leaf)
            s = state.ordering.geometry.site_index(x, y)
            if which == 0:
                out[s] = np.trace(pair, axis1=1, axis2=3)
            else:
                out[s] = np.trace(pair, axis1=0, axis2=2)
    return out


def bond_entropies(state: TreeState) -> dict:
    """Von Neumann entropy across every parent bond, from one RDM pass.

    Returns {node: entropy of the cut between subtree(node) and the rest}.
    """
    topo = state.topology
    if state.center != topo.root:
        state = move_center(state.copy(), topo.root)
    rhos = _descend_rdms(state)
    out = {}
    for node, rho in rhos.items():
        evals = np.linalg.eigvalsh(rho)
        evals = np.clip(evals.real, 0.0, None)
        total = evals.sum()
        if total <= 0:
            out[node] = 0.0
            continue
        p = evals / total
        p = p[p > 1e-15]
        out[node] = float(-(p * np.log(p)).sum())
    return out


def local_x_profile(state: TreeState) -> np.ndarray:
    """<X_r> for every site, canonical site order."""
    rdms = one_site_rdms(state)
    return np.einsum("sab,ba->s", rdms, PAULI_X).real


def expect_pauli_product(state: TreeState, ops: dict) -> complex:
    """<psi| prod_s O_s |psi> for 2x2 operators on distinct sites.

    ``ops`` maps canonical site index -> 2x2 matrix.  Bottom-up message
    passing; subtrees without support contract to the identity and are
    skipped.  Works on a canonicalized copy when the center is elsewhere.
    """
    topo = state.topology
    if state.center != topo.root:
        state = move_center(state.copy(), topo.root)
    by_leaf = {}
    for s, op in ops.items():
        x, y = state.ordering.geometry.site_coords(s)
        by_leaf[state.ordering.leaf_of_site(x, y)] = np.asarray(op)

    def message(node):
        """Message on the parent bond, or None when trivially identity."""
        t = state.tensors[node]
        if topo.is_bottom(node):
            lo, _ = topo.leaf_interval(node)
            o0, o1 = by_leaf.get(lo), by_leaf.get(lo + 1)
            if o0 is None and o1 is None:
                return None
            tt = t
            if o0 is not None:
                tt = np.tensordot(o0, tt, axes=(1, 0))
            if o1 is not None:
                tt = np.moveaxis(np.tensordot(o1, tt, axes=(1, 1)), 0, 1)
            return np.tensordot(tt, t.conj(), axes=([0, 1], [0, 1]))
        left, right = topo.children(node)
        ml, mr = message(left), message(right)
        if ml is None and mr is None:
            return None
        tt = t
        if ml is not None:
            tt = np.tensordot(ml.T, tt, axes=(1, 0))
        if mr is not None:
            tt = np.moveaxis(np.tensordot(mr.T, tt, axes=(1, 1)), 0, 1)
        return np.tensordot(tt, t.conj(), axes=([0, 1], [0, 1]))

    m = message(topo.root)
    if m is None:
        nrm = state.norm()
        return complex(nrm * nrm)
    return complex(m[0, 0])


def subtree_entropy(state: TreeState, node) -> float:
    """Von Neumann entropy across the bond above ``node``.

    Exact Schmidt decomposition: the center is moved to ``node`` (on a
    copy) and the center tensor is SVD'd against its parent leg.
    """
    work = move_center(state.copy(), node)
    t = work.tensors[node]
    mat = t.reshape(-1, t.shape[2])
    svals = np.linalg.svd(mat, compute_uv=False)
    p = svals ** 2
    total = p.sum()
    if total <= 0:
        return 0.0
    p = p / total
    p = p[p > 1e-15]
    return float(-(p * np.log(p)).sum())


def expectation(state: TreeState, obs: Observable) -> float:
    """Expectation value of an observable; Hermitian insertions only."""
    if obs.kind == "average_x":
        return float(local_x_profile(state).mean())
    if obs.kind in ("local_x", "local_z"):
        (site,) = obs.support
        op = PAULI["x" if obs.kind == "local_x" else "z"]
        val = expect_pauli_product(state, {site: op})
    elif obs.kind == "bond_energy":
        a, b = obs.support
        val = expect_pauli_product(state, {a: PAULI_X, b: PAULI_X})
    elif obs.kind == "subtree_entropy":
        return subtree_entropy(state, tuple(obs.support))
    elif obs.kind == "local_op":
        if obs.matrix is None:
            raise ValueError("local_op observable needs a matrix")
        m = np.asarray(obs.matrix)
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("observable insertion must be Hermitian")
        (site,) = obs.support
        val = expect_pauli_product(state, {site: m})
    else:
        raise ValueError(f"unknown observable kind {obs.kind!r}")
    return float(val.real)


def energy_expectation(state: TreeState, terms) -> float:
    """<H> by summing term expectations (independent of the TDVP cache)."""
    total = 0.0
    for term in terms.all_terms():
        if term.coeff == 0.0:
            continue
        ops = {s: PAULI[o] for s, o in zip(term.sites, term.ops)}
        total += term.coeff * expect_pauli_product(state, ops).real
    return float(total)


# ---------------------------------------------------------------------------
# Flatten / truncate / persistence
# ---------------------------------------------------------------------------

def flatten(state: TreeState) -> np.ndarray:
    """Dense state vector in the Z-product basis, canonical site order.

    Site 0 is the most significant qubit (Kronecker order).  Guarded at
    20 sites.
    """
    if state.n_sites > 20:
        raise ValueError("flatten limited to 20 sites")
    topo = state.topology

    def contract(node):
        t = state.tensors[node]
        if topo.is_bottom(node):
            return t  # (leaf, leaf, parent)
        left, right = topo.children(node)
        tl = contract(left)
        tr = contract(right)
        # tl: (...leaves_l, bl), tr: (...leaves_r, br), t: (bl, br, p)
        out = np.tensordot(tl, t, axes=(tl.ndim - 1, 0))  # leaves_l..., br, p
        out = np.tensordot(out, tr, axes=(tl.ndim - 1, tr.ndim - 1))
        # axes now (leaves_l..., p, leaves_r...); move p to the end
        out = np.moveaxis(out, tl.ndim - 1, -1)
        return out

    full = contract(topo.root)[..., 0]  # drop trivial root leg; axes = leaves
    perm = state.ordering.leaf_to_canonical()
    # destination axis perm[leaf] receives source axis leaf
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    full = np.transpose(full, axes=inverse)
    return np.ascontiguousarray(full).reshape(-1) * np.exp(state.log_norm)


def truncate(state: TreeState, chi: int, svd_cutoff: float = 0.0):
    """Truncate every bond to at most ``chi``, dropping singular values
    whose cumulative squared weight stays below ``svd_cutoff``.

    Returns ``(state, discarded)`` where ``discarded`` is the total dropped
    squared Schmidt weight (relative to a normalized state).  The state is
    renormalized and left canonical at the root.
    """
    if chi < 1:
        raise ValueError("chi must be >= 1")
    topo = state.topology
    move_center(state, topo.root)
    log_norm_in = state.log_norm
    discarded = 0.0

    def truncate_edge(parent, child):
        nonlocal discarded
        ax = topo.axis_toward(parent, child)
        t = state.tensors[parent]
        moved = np.moveaxis(t, ax, -1)
        mat = moved.reshape(-1, moved.shape[-1])
        u, svals, w = np.linalg.svd(mat, full_matrices=False)
        weights = svals ** 2
        total = weights.sum()
        keep = len(svals)
        while keep > 1:
            tail = weights[keep - 1:].sum() / total
            if keep > chi or (svd_cutoff > 0 and tail <= svd_cutoff):
                keep -= 1
            else:
                break
        keep = max(1, min(keep, chi))
        discarded += float(weights[keep:].sum() / total)
        new_parent = u[:, :keep] * svals[:keep]
        state.tensors[parent] = np.moveaxis(
            new_parent.reshape(moved.shape[:-1] + (keep,)), -1, ax
        )
        state.tensors[child] = np.tensordot(w[:keep], state.tensors[child], axes=(1, 2))
        state.tensors[child] = np.moveaxis(state.tensors[child], 0, 2)

    def recurse(node):
        for child in topo.children(node):
            truncate_edge(node, child)
            move_center(state, child)
            recurse(child)
            move_center(state, node)

    recurse(topo.root)
    normalize(state)
    state.log_norm = log_norm_in  # truncation is a projection, not norm flow
    return state, discarded


def save_state(state: TreeState, path: str):
    """Serialize tensors, topology, gauge and cap to one .npz file."""
    payload = {
        "format_version": np.array(1),
        "width": np.array(state.ordering.geometry.width),
        "height": np.array(state.ordering.geometry.height),
        "chi_max": np.array(state.chi_max),
        "center": np.array(state.center),
        "log_norm": np.array(state.log_norm),
    }
    for (k, i), t in state.tensors.items():
        payload[f"tensor_{k}_{i}"] = t
    np.savez(path, **payload)


def load_state(path: str) -> TreeState:
    from .lattice import build_lattice, hilbert_ordering

    with np.load(path) as data:
        if int(data["format_version"]) != 1:
            raise ValueError(f"unsupported checkpoint version {int(data['format_version'])}")
        geometry = build_lattice(int(data["width"]), int(data["height"]))
        ordering = hilbert_ordering(geometry)
        tensors = {}
        for key in data.files:
            if key.startswith("tensor_"):
                _, k, i = key.split("_")
                tensors[(int(k), int(i))] = data[key]
        return TreeState(
            ordering=ordering,
            chi_max=int(data["chi_max"]),
            tensors=tensors,
            center=tuple(int(v) for v in data["center"]),
            log_norm=float(data["log_norm"]),
        )


def random_state(ordering: SiteOrdering, chi: int, rng) -> TreeState:
    """Normalized random tree state with bonds at their chi-capped maxima."""
    topo = TreeTopology(ordering.n_sites)
    tensors = {}
    for node in topo.nodes():
        if topo.is_bottom(node):
            dl = dr = 2
        else:
            left, right = topo.children(node)
            dl = topo.max_bond(left, chi)
            dr = topo.max_bond(right, chi)
        dp = 1 if node == topo.root else topo.max_bond(node, chi)
        shape = (dl, dr, dp)
        tensors[node] = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    state = TreeState(ordering=ordering, chi_max=chi, tensors=tensors, center=topo.root)
    canonicalize(state)
    normalize(state)
    state.log_norm = 0.0
    return state

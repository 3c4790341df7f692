"""The transverse/longitudinal-field Ising Hamiltonian as a term list.

    H = -J sum_<rr'> X_r X_r'  -  h_perp sum_r Z_r  -  h_par sum_r X_r

on the open-boundary square lattice, with the ferromagnetic coupling acting
on the X components.  Spin-up/down and all magnetization observables refer
to X eigenstates, so domain-wall product states are trivially expressible;
a negative h_par makes X = -1 (spin-down) the true vacuum.  Energies and
times are measured in units of J and 1/J.

Reference constants (not enforced): the equilibrium critical point sits at
h_perp ~ 3.04 and the dynamical critical point at h_perp ~ 2.0.
"""

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeGeometry
from .shapes import ShapeMask, bond_perimeter

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
PAULI = {"x": PAULI_X, "z": PAULI_Z}

H_PERP_CRITICAL = 3.04   # equilibrium quantum critical point (reference)
H_PERP_DYNAMICAL = 2.0   # dynamical critical point (reference)


@dataclass(frozen=True)
class IsingParams:
    """Couplings (J, h_perp, h_par); J must be positive (ferromagnetic)."""

    J: float = 1.0
    h_perp: float = 0.0
    h_par: float = 0.0

    def __post_init__(self):
        if self.J <= 0:
            raise ValueError(f"J must be positive, got {self.J}")


@dataclass(frozen=True)
class Term:
    """A single product term: coefficient times Pauli ops on distinct sites.

    ``sites`` are canonical site indices; ``ops`` are 'x' or 'z' labels.
    """

    coeff: float
    sites: tuple
    ops: tuple

    def __post_init__(self):
        if len(self.sites) != len(self.ops) or not self.sites:
            raise ValueError("sites and ops must be nonempty and equal length")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("term sites must be distinct")


@dataclass(frozen=True)
class TermList:
    """The Hamiltonian as one- and two-site terms over a lattice."""

    geometry: LatticeGeometry
    params: IsingParams
    two_site: tuple = field(repr=False)
    one_site: tuple = field(repr=False)

    def all_terms(self):
        return list(self.two_site) + list(self.one_site)

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites


def build_terms(geometry: LatticeGeometry, params: IsingParams) -> TermList:
    """Term list for the quench Hamiltonian on the given lattice.

    Produces exactly one two-site XX term per bond and two one-site terms
    per site (Z and X), keeping zero-coefficient field terms so the term
    count is independent of the couplings.
    """
    two = tuple(
        Term(coeff=-params.J, sites=(a, b), ops=("x", "x"))
        for a, b in geometry.bond_indices()
    )
    one = []
    for s in range(geometry.n_sites):
        one.append(Term(coeff=-params.h_perp, sites=(s,), ops=("z",)))
        one.append(Term(coeff=-params.h_par, sites=(s,), ops=("x",)))
    return TermList(geometry=geometry, params=params, two_site=two, one_site=tuple(one))


def classical_energy(mask: ShapeMask, params: IsingParams) -> float:
    """Energy of the X-basis product state defined by a mask.

    With B bonds, P_b broken bonds and area A on N sites:
    E = -J (B - 2 P_b) - h_par (N - 2 A); the transverse field term has zero
    expectation in X eigenstates.
    """
    geo = mask.geometry
    p_b = bond_perimeter(mask)
    return (
        -params.J * (geo.n_bonds - 2 * p_b)
        - params.h_par * (geo.n_sites - 2 * mask.area)
    )


def dense_hamiltonian(terms: TermList) -> np.ndarray:
    """Explicit Hermitian matrix in the Z-product basis (site 0 = leftmost
    Kronecker factor).  Guarded at N <= 20; practical use is N <= 12."""
    n = terms.n_sites
    if n > 20:
        raise ValueError(f"dense Hamiltonian limited to 20 sites, got {n}")
    dim = 2 ** n
    h = np.zeros((dim, dim))
    for term in terms.all_terms():
        if term.coeff == 0.0:
            continue
        op = np.array([[1.0]])
        by_site = dict(zip(term.sites, term.ops))
        for s in range(n):
            factor = PAULI[by_site[s]] if s in by_site else np.eye(2)
            op = np.kron(op, factor)
        h += term.coeff * op
    return h


def global_flip_operator(n_sites: int) -> np.ndarray:
    """Product of Z over all sites; commutes with H exactly when h_par = 0."""
    if n_sites > 20:
        raise ValueError("global flip operator limited to 20 sites")
    op = np.array([[1.0]])
    for _ in range(n_sites):
        op = np.kron(op, PAULI_Z)
    return op

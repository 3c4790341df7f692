"""Tree-tensor-network quench dynamics of vacuum bubbles in the 2D Ising model.

The package simulates real-time dynamics of spin-down domains ("bubbles" of
the true vacuum) embedded in a spin-up background after a sudden quench with
the transverse- and longitudinal-field Ising Hamiltonian on a square lattice.
Large lattices are handled by a binary tree tensor network evolved with
single-site TDVP over Hilbert-curve-ordered sites; small lattices are checked
against exact dense evolution.
"""

__version__ = "0.1.0"

from .lattice import LatticeGeometry, SiteOrdering, build_lattice, hilbert_ordering, neighbors
from .shapes import ShapeMask, ShapeStats, make_shape, bond_perimeter, site_perimeter, bounding_patch
from .hamiltonian import IsingParams, TermList, build_terms, classical_energy, dense_hamiltonian
from .ttn import TreeState, Observable, product_state, move_center, expectation, flatten
from .tdvp import TdvpConfig, EnvironmentCache, krylov_expm_apply, sweep, evolve
from .exact import DenseState, evolve_exact, observables_exact
from .experiment import QuenchConfig, QuenchResult, run_quench, classify_fate

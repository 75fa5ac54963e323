"""Numerical laboratory for periodic linear symplectic cocycles.

Modules:
    core          symplectic linear algebra (form, complements, eigenbases)
    cocycle       orbits, words, transitions, the JSON file format
    domination    dominated-splitting certificates, quotients, combination
    perturbation  symplectic perturbation constructors
    transitions   transition-word algebra and the identity-word endgame
    dichotomy     the dominated-vs-elliptic driver
    genfunc       generating functions and gluing to the identity
    cli           command-line front end
"""

from .core import (
    EigenBasis,
    PairedSpectrum,
    SymplecticCheck,
    SymplecticSpace,
    classify_subspace,
    eigen_symplectic_basis,
    form_eval,
    is_symplectic,
    paired_spectrum,
    space_for_dim,
    standard_form,
    symplectic_complement,
    symplectic_polish,
)
from .cocycle import (
    CocycleSystem,
    Letter,
    PeriodicOrbit,
    TransitionWord,
    Word,
    is_power,
    load_system,
    orbit_product,
    save_system,
    system_norm,
    word_distance,
)
from .transitions import (
    AdaptedTransition,
    AlignedTransition,
    AlignmentError,
    EllipticBudgetError,
    EllipticWord,
    PointData,
    SwapCertificate,
    TransitionError,
    adapted_transition,
    align_extremes,
    align_top,
    compose_transitions,
    elliptic_word,
    identity_transition,
    line_corrector,
    pad_transition,
    plane_corrector,
    point_data,
    swap_transition,
    verify_swap,
)

__version__ = "0.1.0"

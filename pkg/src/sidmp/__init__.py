"""Dynamic movement primitive networks with sparse inhibition and contraction checks."""
from . import contraction, dynamics, learning, network, simulate
from .dynamics import (
    AffineMap,
    DiscreteDMP,
    ExponentialPhase,
    GaussianForcing,
    Hopf,
    ReferenceSystem,
    TransformationSystem,
    VanDerPol,
    VectorField,
    VonMisesForcing,
    apply_diffeomorphism,
    compose_hierarchy,
)
from .errors import (
    ConfigError,
    DivergenceError,
    NotContractingError,
    ParameterError,
    PreconditionError,
    SidmpError,
)
from .network import (
    CouplingGraph,
    InhibitionRule,
    assemble_block_laplacian,
    coupled_canonical_field,
)
from .simulate import IntegratorConfig, Trajectory, integrate

__version__ = "0.1.0"

__all__ = [
    "contraction", "dynamics", "learning", "network", "simulate",
    "AffineMap", "DiscreteDMP", "ExponentialPhase", "GaussianForcing", "Hopf",
    "ReferenceSystem", "TransformationSystem", "VanDerPol", "VectorField", "VonMisesForcing",
    "apply_diffeomorphism", "compose_hierarchy", "ConfigError", "DivergenceError",
    "NotContractingError", "ParameterError", "PreconditionError", "SidmpError",
    "CouplingGraph", "InhibitionRule", "assemble_block_laplacian", "coupled_canonical_field",
    "IntegratorConfig", "Trajectory", "integrate",
]

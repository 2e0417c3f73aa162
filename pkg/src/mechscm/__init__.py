"""Mechanized SCMs, agent detection, abstraction checking, and the voting
surrogate experiment."""

from mechscm.core import (
    BernoulliAssign,
    DeterministicAssign,
    DeterministicSCM,
    Distribution,
    Domain,
    EMPTY_SETTING,
    EmptyDomain,
    FiniteDomain,
    FiniteNoiseAssign,
    FunctionTableDomain,
    IncompleteSolution,
    InducedSCM,
    KernelAssign,
    Layer,
    MechSCMError,
    MechanizedSCM,
    NoConvergence,
    NonFiniteDomain,
    ParameterizedSCM,
    RealBox,
    Setting,
    Table,
    VarId,
    distribution,
    induce_scm,
    mech,
    noise,
    obj,
    project,
    solution_distributions,
    solution_set,
    solve_acyclic,
    solve_enumerate,
    solve_fixed_point,
    values_close,
)

__version__ = "0.1.0"

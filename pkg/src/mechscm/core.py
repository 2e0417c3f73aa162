"""Mechanized structural causal models.

The building blocks: variables split into object / mechanism / noise layers,
settings (partial assignments of tagged values), a deterministic possibly
cyclic model over the mechanism layer, a parameterized acyclic model over the
object layer, and the pairing of the two.  Solving the mechanism layer under a
hard intervention yields parameter settings; each one instantiates an object
model whose exact or sampled distribution can be computed.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "Layer",
    "VarId",
    "obj",
    "mech",
    "noise",
    "Domain",
    "FiniteDomain",
    "RealBox",
    "FunctionTableDomain",
    "Table",
    "Setting",
    "EMPTY_SETTING",
    "project",
    "values_close",
    "canon_key",
    "DeterministicSCM",
    "solve_enumerate",
    "solve_acyclic",
    "solve_fixed_point",
    "solution_set",
    "ObjectAssign",
    "DeterministicAssign",
    "BernoulliAssign",
    "FiniteNoiseAssign",
    "KernelAssign",
    "ParameterizedSCM",
    "InducedSCM",
    "MechanizedSCM",
    "induce_scm",
    "Distribution",
    "distribution",
    "solution_distributions",
    "MechSCMError",
    "NonFiniteDomain",
    "EmptyDomain",
    "NoConvergence",
    "IncompleteSolution",
]

FLOAT_TOL = 1e-9


# ---------------------------------------------------------------------------
# Errors


class MechSCMError(Exception):
    """Base class for model errors."""


class NonFiniteDomain(MechSCMError):
    """An operation needed a finite (or discretized) domain and got none."""


class EmptyDomain(MechSCMError):
    """A domain required to be non-empty was empty."""


class IncompleteSolution(MechSCMError):
    """A mechanism solution left some mechanism variable unassigned."""


class NoConvergence(MechSCMError):
    """Fixed-point iteration did not reach the tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# ---------------------------------------------------------------------------
# Variables


class Layer(enum.Enum):
    OBJECT = "object"
    MECHANISM = "mechanism"
    NOISE = "noise"


@dataclass(frozen=True, slots=True)
class VarId:
    """A variable identifier: a name plus the layer it lives on.

    An object variable, its mechanism variable, and its noise variable share
    the same name and differ only in layer, which encodes the one-to-one
    pairing between layers.
    """

    name: str
    layer: Layer

    def paired(self, layer: Layer) -> "VarId":
        return VarId(self.name, layer)

    def __repr__(self) -> str:  # compact: A, ~A, eps(A)
        if self.layer is Layer.MECHANISM:
            return f"~{self.name}"
        if self.layer is Layer.NOISE:
            return f"eps({self.name})"
        return self.name


def obj(name: str) -> VarId:
    return VarId(name, Layer.OBJECT)


def mech(name: str) -> VarId:
    return VarId(name, Layer.MECHANISM)


def noise(name: str) -> VarId:
    return VarId(name, Layer.NOISE)


# ---------------------------------------------------------------------------
# Values and comparison helpers


class Table:
    """An immutable finite function used as a variable value (e.g. a payoff
    table).  Hashable so it can sit inside settings and finite domains."""

    __slots__ = ("keys", "values", "_lookup", "_hash")

    def __init__(self, keys: Sequence, values: Sequence):
        if len(keys) != len(values):
            raise ValueError("keys and values must have equal length")
        object.__setattr__(self, "keys", tuple(keys))
        object.__setattr__(self, "values", tuple(values))
        object.__setattr__(self, "_lookup", dict(zip(self.keys, self.values)))
        object.__setattr__(self, "_hash", hash((self.keys, self.values)))

    @classmethod
    def from_dict(cls, mapping: Mapping) -> "Table":
        items = sorted(mapping.items(), key=lambda kv: canon_key(kv[0]))
        return cls([k for k, _ in items], [v for _, v in items])

    def __call__(self, key):
        return self._lookup[key]

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("Table is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Table)
            and self.keys == other.keys
            and self.values == other.values
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        body = ", ".join(f"{k!r}: {v!r}" for k, v in zip(self.keys, self.values))
        return f"Table({{{body}}})"


def values_close(x, y, tol: float = FLOAT_TOL) -> bool:
    """Equality for variable values: exact on symbols, coordinatewise within
    ``tol`` on reals, recursive on tuples and tables."""
    if isinstance(x, bool) or isinstance(y, bool):
        return x is y
    if isinstance(x, (int, float)) and isinstance(y, (int, float)):
        return abs(float(x) - float(y)) <= tol
    if isinstance(x, tuple) and isinstance(y, tuple):
        return len(x) == len(y) and all(values_close(a, b, tol) for a, b in zip(x, y))
    if isinstance(x, Table) and isinstance(y, Table):
        return x.keys == y.keys and values_close(x.values, y.values, tol)
    return x == y


def canon_key(value):
    """A deterministic sort key over heterogeneous values."""
    if isinstance(value, bool):
        return ("b", value)
    if isinstance(value, (int, float)):
        return ("f", float(value))
    if isinstance(value, str):
        return ("s", value)
    if isinstance(value, tuple):
        return ("t", tuple(canon_key(v) for v in value))
    if isinstance(value, Table):
        return ("T", canon_key(value.keys), canon_key(value.values))
    return ("r", repr(value))


# ---------------------------------------------------------------------------
# Domains


class Domain:
    """Base class for variable ranges."""

    def contains(self, value) -> bool:  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def is_enumerable(self) -> bool:
        return False

    def enumerate(self) -> tuple:
        raise NonFiniteDomain(f"{self!r} is not enumerable")


@dataclass(frozen=True)
class FiniteDomain(Domain):
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise EmptyDomain("finite domain must be non-empty")

    def contains(self, value) -> bool:
        return any(values_close(value, v) for v in self.values)

    @property
    def is_enumerable(self) -> bool:
        return True

    def enumerate(self) -> tuple:
        return self.values


def _axis_grid(lo: float, hi: float, step: float) -> tuple:
    n = int(round((hi - lo) / step))
    pts = [round(lo + k * step, 12) for k in range(n + 1)]
    if not math.isclose(pts[-1], hi, abs_tol=1e-12):
        pts.append(hi)
    return tuple(pts)


@dataclass(frozen=True)
class RealBox(Domain):
    """A box in R^d.  Scalar boxes (d = 1) hold plain floats, higher
    dimensions hold tuples.  A grid step makes the domain enumerable for the
    solvers; membership is the full continuum regardless of the grid."""

    lower: tuple
    upper: tuple
    grid_step: Optional[float] = 0.01

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have equal dimension")
        if any(l > u for l, u in zip(self.lower, self.upper)):
            raise ValueError("lower bound above upper bound")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, value) -> bool:
        coords = (value,) if self.dim == 1 else value
        if not isinstance(coords, tuple) or len(coords) != self.dim:
            return False
        return all(
            isinstance(c, (int, float)) and l - FLOAT_TOL <= c <= u + FLOAT_TOL
            for c, l, u in zip(coords, self.lower, self.upper)
        )

    @property
    def is_enumerable(self) -> bool:
        return self.grid_step is not None

    def enumerate(self) -> tuple:
        if self.grid_step is None:
            raise NonFiniteDomain("real box has no discretization grid")
        axes = [_axis_grid(l, u, self.grid_step) for l, u in zip(self.lower, self.upper)]
        if self.dim == 1:
            return axes[0]
        return tuple(itertools.product(*axes))


def unit_box(dim: int, grid_step: Optional[float] = 0.01) -> RealBox:
    return RealBox((0.0,) * dim, (1.0,) * dim, grid_step)


@dataclass(frozen=True)
class FunctionTableDomain(Domain):
    """Values are Tables over a fixed input grid with outputs in a codomain."""

    inputs: tuple
    codomain: Domain

    def contains(self, value) -> bool:
        return (
            isinstance(value, Table)
            and value.keys == self.inputs
            and all(self.codomain.contains(v) for v in value.values)
        )

    @property
    def is_enumerable(self) -> bool:
        return self.codomain.is_enumerable

    def enumerate(self) -> tuple:
        outs = self.codomain.enumerate()
        combos = itertools.product(outs, repeat=len(self.inputs))
        return tuple(Table(self.inputs, combo) for combo in combos)


# ---------------------------------------------------------------------------
# Settings


class Setting(Mapping):
    """An immutable partial assignment of values to variables.

    Because every value is keyed by its owning variable, a setting is
    faithfully a set of tagged values and projection is just key filtering.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, assignments: Mapping[VarId, object] | Iterable = ()):
        items = dict(assignments)
        object.__setattr__(self, "_items", items)
        object.__setattr__(self, "_hash", hash(frozenset(items.items())))

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("Setting is immutable")

    # Mapping protocol
    def __getitem__(self, var: VarId):
        return self._items[var]

    def __iter__(self) -> Iterator[VarId]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return isinstance(other, Setting) and self._items == other._items

    @property
    def vars(self) -> frozenset:
        return frozenset(self._items)

    def project(self, targets: Iterable[VarId]) -> "Setting":
        targets = set(targets)
        return Setting({v: x for v, x in self._items.items() if v in targets})

    def drop(self, targets: Iterable[VarId]) -> "Setting":
        targets = set(targets)
        return Setting({v: x for v, x in self._items.items() if v not in targets})

    def union(self, other: "Setting | Mapping[VarId, object]") -> "Setting":
        merged = dict(self._items)
        for v, x in dict(other).items():
            if v in merged and merged[v] != x:
                raise ValueError(f"conflicting values for {v!r}")
            merged[v] = x
        return Setting(merged)

    def set(self, var: VarId, value) -> "Setting":
        merged = dict(self._items)
        merged[var] = value
        return Setting(merged)

    def sorted_items(self) -> tuple:
        return tuple(
            sorted(self._items.items(), key=lambda kv: (kv[0].name, kv[0].layer.value))
        )

    def close_to(self, other: "Setting", tol: float = FLOAT_TOL) -> bool:
        return self.vars == other.vars and all(
            values_close(x, other[v], tol) for v, x in self._items.items()
        )

    def __repr__(self) -> str:
        body = ", ".join(f"{v!r}={x!r}" for v, x in self.sorted_items())
        return f"{{{body}}}"


EMPTY_SETTING = Setting()


def project(s: Setting, targets: Iterable[VarId]) -> Setting:
    """Keep exactly the tagged values of ``s`` whose owner is in ``targets``."""
    return s.project(targets)


def setting_sort_key(s: Setting):
    return tuple((v.name, v.layer.value, canon_key(x)) for v, x in s.sorted_items())


# ---------------------------------------------------------------------------
# Deterministic (cyclic) model over the mechanism layer


@dataclass(frozen=True)
class DeterministicSCM:
    """A set of total functions, one per variable, each from settings of all
    the other variables to the variable's own domain.  Cycles are allowed;
    ``parents`` optionally declares the true dependency structure, which
    enables the forward solver when the declared graph is acyclic.

    ``analytic_solutions`` may map an intervention to a registered closed-form
    solution set (or return None to fall back to the generic solvers).
    """

    variables: tuple
    domains: Mapping[VarId, Domain]
    assignments: Mapping[VarId, Callable[[Setting], object]]
    parents: Optional[Mapping[VarId, frozenset]] = None
    analytic_solutions: Optional[Callable[[Setting], Optional[frozenset]]] = None

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        for v in self.variables:
            if v not in self.domains or v not in self.assignments:
                raise ValueError(f"missing domain or assignment for {v!r}")

    def others(self, var: VarId) -> tuple:
        return tuple(v for v in self.variables if v != var)

    def topological_order(self) -> Optional[tuple]:
        """Topological order of the declared parent graph, or None if no
        parents are declared or the graph has a cycle."""
        if self.parents is None:
            return None
        remaining = {v: set(self.parents.get(v, ())) for v in self.variables}
        order = []
        while remaining:
            ready = sorted(
                (v for v, ps in remaining.items() if not (ps & remaining.keys())),
                key=lambda v: v.name,
            )
            if not ready:
                return None
            for v in ready:
                order.append(v)
                del remaining[v]
        return tuple(order)


def _check_intervention_vars(m: DeterministicSCM, intervention: Setting) -> None:
    unknown = intervention.vars - set(m.variables)
    if unknown:
        raise ValueError(f"intervention targets unknown variables: {unknown}")


def solve_enumerate(
    m: DeterministicSCM,
    intervention: Setting = EMPTY_SETTING,
    *,
    use_analytic: bool = True,
    tol: float = FLOAT_TOL,
) -> frozenset:
    """All joint settings satisfying every non-intervened assignment and
    matching the intervention exactly.  Non-intervened variables must have
    enumerable domains."""
    _check_intervention_vars(m, intervention)
    if use_analytic and m.analytic_solutions is not None:
        registered = m.analytic_solutions(intervention)
        if registered is not None:
            return frozenset(registered)

    free = [v for v in m.variables if v not in intervention.vars]
    for v in free:
        if not m.domains[v].is_enumerable:
            raise NonFiniteDomain(f"domain of {v!r} is not finite or discretized")

    pinned = {v: intervention[v] for v in intervention.vars}
    free_values = [m.domains[v].enumerate() for v in free]
    # Cache mechanism outputs per (variable, context restricted to the other
    # variables); contexts repeat heavily during enumeration.
    cache: dict = {}

    def response(v: VarId, joint: dict):
        key = (v, tuple(joint[w] for w in m.variables if w != v))
        if key not in cache:
            ctx = Setting({w: joint[w] for w in m.variables if w != v})
            cache[key] = m.assignments[v](ctx)
        return cache[key]

    solutions = []
    for combo in itertools.product(*free_values):
        joint = dict(pinned)
        joint.update(zip(free, combo))
        if all(values_close(response(v, joint), joint[v], tol) for v in free):
            solutions.append(Setting(joint))
    return frozenset(solutions)


def solve_acyclic(m: DeterministicSCM, intervention: Setting = EMPTY_SETTING) -> Setting:
    """Forward substitution along the declared acyclic dependency order.
    Returns the unique solution under the intervention."""
    _check_intervention_vars(m, intervention)
    order = m.topological_order()
    if order is None:
        raise MechSCMError("model has no declared acyclic dependency structure")
    values: dict = {}
    for v in order:
        if v in intervention.vars:
            values[v] = intervention[v]
        else:
            # Total function of all other variables; unresolved ones are only
            # allowed when the declared parents say they are irrelevant.
            ctx = dict(values)
            for w in m.variables:
                if w != v and w not in ctx:
                    ctx[w] = _UNRESOLVED
            values[v] = m.assignments[v](Setting({w: x for w, x in ctx.items() if w != v}))
    return Setting(values)


class _Unresolved:
    __slots__ = ()

    def __repr__(self):
        return "<unresolved>"


_UNRESOLVED = _Unresolved()


def _residual(domain: Domain, current, proposed) -> float:
    if isinstance(domain, RealBox):
        cur = (current,) if domain.dim == 1 else current
        new = (proposed,) if domain.dim == 1 else proposed
        return max(abs(float(a) - float(b)) for a, b in zip(cur, new))
    return 0.0 if values_close(current, proposed) else 1.0


def _damp(domain: Domain, current, proposed, damping: float):
    if isinstance(domain, RealBox):
        if domain.dim == 1:
            return current + damping * (proposed - current)
        return tuple(c + damping * (p - c) for c, p in zip(current, proposed))
    return proposed


def solve_fixed_point(
    m: DeterministicSCM,
    intervention: Setting = EMPTY_SETTING,
    init: Setting = EMPTY_SETTING,
    damping: float = 1.0,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> Setting:
    """Damped synchronous (Jacobi) iteration.  Real-box variables move by
    ``damping`` toward their assignment; all other variables jump.  Stops when
    the undamped defect max-norm is at most ``tol``."""
    _check_intervention_vars(m, intervention)
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    free = [v for v in m.variables if v not in intervention.vars]
    state: dict = {v: intervention[v] for v in intervention.vars}
    for v in free:
        if v in init.vars:
            state[v] = init[v]
        else:
            dom = m.domains[v]
            if isinstance(dom, RealBox):
                mid = tuple((l + u) / 2.0 for l, u in zip(dom.lower, dom.upper))
                state[v] = mid[0] if dom.dim == 1 else mid
            elif dom.is_enumerable:
                state[v] = dom.enumerate()[0]
            else:
                raise NonFiniteDomain(f"no initial value for {v!r}")

    if not free:
        return Setting(state)

    residual = math.inf
    for iteration in range(max_iter):
        proposals = {}
        for v in free:
            ctx = Setting({w: x for w, x in state.items() if w != v})
            proposals[v] = m.assignments[v](ctx)
        residual = max(_residual(m.domains[v], state[v], proposals[v]) for v in free)
        if not math.isfinite(residual):
            raise NoConvergence(
                f"diverged after {iteration} iterations", residual, iteration
            )
        if residual <= tol:
            return Setting(state)
        for v in free:
            state[v] = _damp(m.domains[v], state[v], proposals[v], damping)
    raise NoConvergence(
        f"no fixed point within {max_iter} iterations (residual {residual:.3g})",
        residual,
        max_iter,
    )


def solution_set(
    m: DeterministicSCM,
    intervention: Setting = EMPTY_SETTING,
    *,
    method: str = "auto",
    tol: float = FLOAT_TOL,
) -> frozenset:
    """Solution set under an intervention.  ``auto`` prefers a registered
    analytic set, then the forward solver on declared acyclic structure, then
    enumeration."""
    if method == "enumerate":
        return solve_enumerate(m, intervention, tol=tol)
    if method == "acyclic":
        return frozenset([solve_acyclic(m, intervention)])
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if m.analytic_solutions is not None:
        registered = m.analytic_solutions(intervention)
        if registered is not None:
            return frozenset(registered)
    if m.parents is not None and m.topological_order() is not None:
        return frozenset([solve_acyclic(m, intervention)])
    return solve_enumerate(m, intervention, use_analytic=False, tol=tol)


# ---------------------------------------------------------------------------
# Object-level mechanisms

# An object assignment is, per the formal definition, a deterministic function
# of (parameter, parents, noise) together with an independent noise
# distribution.  The classes below carry that functional form plus, when the
# noise is finite or analytically integrable, the exact local conditional
# used by exact inference.


class ObjectAssign:
    def kernel(self, theta, parents: Mapping[VarId, object]) -> Optional[dict]:
        """Exact conditional {value: prob} given parameter and parents, or
        None when only sampling is available."""
        raise NotImplementedError

    def sample(self, theta, parents: Mapping[VarId, object], rng: np.random.Generator):
        raise NotImplementedError


@dataclass(frozen=True)
class DeterministicAssign(ObjectAssign):
    """Value is a deterministic function of parameter and parents; the noise
    variable has a singleton domain."""

    fn: Callable

    def kernel(self, theta, parents):
        return {self.fn(theta, parents): 1.0}

    def sample(self, theta, parents, rng):
        return self.fn(theta, parents)


@dataclass(frozen=True)
class BernoulliAssign(ObjectAssign):
    """Two-valued assignment: value ``hi`` with probability p(theta, parents),
    driven by a Uniform(0, 1) noise variable through a threshold."""

    p_fn: Callable
    hi: object = 1
    lo: object = 0

    def kernel(self, theta, parents):
        p = float(self.p_fn(theta, parents))
        if p <= 0.0:
            return {self.lo: 1.0}
        if p >= 1.0:
            return {self.hi: 1.0}
        return {self.hi: p, self.lo: 1.0 - p}

    def sample(self, theta, parents, rng):
        p = float(self.p_fn(theta, parents))
        return self.hi if rng.random() < p else self.lo


@dataclass(frozen=True)
class FiniteNoiseAssign(ObjectAssign):
    """General (parameter, parents, noise) -> value form with an explicit
    finite noise distribution; exact inference sums the noise out."""

    fn: Callable
    noise_values: tuple
    noise_probs: tuple

    def __post_init__(self):
        if abs(sum(self.noise_probs) - 1.0) > 1e-12:
            raise ValueError("noise probabilities must sum to 1")

    def kernel(self, theta, parents):
        out: dict = {}
        for eps, p in zip(self.noise_values, self.noise_probs):
            if p == 0.0:
                continue
            v = self.fn(theta, parents, eps)
            out[v] = out.get(v, 0.0) + p
        return out

    def sample(self, theta, parents, rng):
        idx = rng.choice(len(self.noise_values), p=np.asarray(self.noise_probs))
        return self.fn(theta, parents, self.noise_values[int(idx)])


@dataclass(frozen=True)
class KernelAssign(ObjectAssign):
    """Assignment given directly by its exact conditional; sampling uses the
    inverse CDF over a canonical value order with Uniform(0, 1) noise."""

    kernel_fn: Callable

    def kernel(self, theta, parents):
        return dict(self.kernel_fn(theta, parents))

    def sample(self, theta, parents, rng):
        dist = self.kernel_fn(theta, parents)
        items = sorted(dist.items(), key=lambda kv: canon_key(kv[0]))
        u = rng.random()
        acc = 0.0
        for v, p in items:
            acc += p
            if u < acc:
                return v
        return items[-1][0]


@dataclass(frozen=True)
class SamplerAssign(ObjectAssign):
    """Assignment with continuous noise: only sampling is available, so exact
    inference raises NonFiniteDomain."""

    sampler: Callable

    def kernel(self, theta, parents):
        return None

    def sample(self, theta, parents, rng):
        return self.sampler(theta, parents, rng)


# ---------------------------------------------------------------------------
# Parameterized object-level model


@dataclass(frozen=True)
class ParameterizedSCM:
    """Acyclic object-level model whose structural assignments are indexed by
    a parameter per variable."""

    variables: tuple
    parents: Mapping[VarId, tuple]
    domains: Mapping[VarId, Domain]
    param_domains: Mapping[VarId, Domain]
    assigns: Mapping[VarId, ObjectAssign]

    def __post_init__(self):
        order = self._compute_order()
        if order is None:
            raise ValueError("object-level graph must be acyclic")
        object.__setattr__(self, "_order", order)

    def _compute_order(self) -> Optional[tuple]:
        remaining = {v: set(self.parents.get(v, ())) for v in self.variables}
        order = []
        while remaining:
            ready = sorted(
                (v for v, ps in remaining.items() if not (ps & remaining.keys())),
                key=lambda v: v.name,
            )
            if not ready:
                return None
            for v in ready:
                order.append(v)
                del remaining[v]
        return tuple(order)

    @property
    def topological_order(self) -> tuple:
        return self._order

    def at(self, theta: Mapping[VarId, object]) -> "InducedSCM":
        missing = [v for v in self.variables if v not in theta]
        if missing:
            raise IncompleteSolution(f"missing parameters for {missing}")
        return InducedSCM(self, {v: theta[v] for v in self.variables})


@dataclass(frozen=True)
class InducedSCM:
    """A parameterized model instantiated at a full parameter setting."""

    model: ParameterizedSCM
    theta: Mapping[VarId, object]

    def local_kernel(self, var: VarId, parent_values: Mapping[VarId, object]):
        return self.model.assigns[var].kernel(self.theta[var], parent_values)


# ---------------------------------------------------------------------------
# Mechanized SCM


@dataclass(frozen=True)
class MechanizedSCM:
    """The pair of a deterministic mechanism-layer model and a parameterized
    object-level model, with name-paired variables and matching parameter
    domains."""

    mech_model: DeterministicSCM
    obj_model: ParameterizedSCM

    def __post_init__(self):
        mech_names = {v.name for v in self.mech_model.variables}
        obj_names = {v.name for v in self.obj_model.variables}
        if mech_names != obj_names:
            raise ValueError(
                f"mechanism/object variables must pair one-to-one "
                f"(got {sorted(mech_names)} vs {sorted(obj_names)})"
            )
        for v in self.obj_model.variables:
            if self.obj_model.param_domains[v] != self.mech_model.domains[v.paired(Layer.MECHANISM)]:
                raise ValueError(f"parameter domain of {v!r} must equal dom({v.name} mechanism)")

    @property
    def mech_vars(self) -> tuple:
        return self.mech_model.variables

    @property
    def object_vars(self) -> tuple:
        return self.obj_model.variables

    def mech_of(self, v: VarId) -> VarId:
        return v.paired(Layer.MECHANISM)

    def obj_of(self, v: VarId) -> VarId:
        return v.paired(Layer.OBJECT)


def induce_scm(m: MechanizedSCM, mech_solution: Setting) -> InducedSCM:
    """Instantiate the object model at the parameters a mechanism solution
    assigns.  Every mechanism variable must be assigned."""
    theta = {}
    missing = []
    for v in m.object_vars:
        mv = m.mech_of(v)
        if mv in mech_solution.vars:
            theta[v] = mech_solution[mv]
        else:
            missing.append(mv)
    if missing:
        raise IncompleteSolution(f"mechanism solution does not assign {missing}")
    return m.obj_model.at(theta)


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class Distribution:
    """Either an exact finite-support table over object settings or a list of
    forward samples with its seed."""

    kind: str  # "exact" | "empirical"
    atoms: tuple = ()  # exact: ((Setting, prob), ...) canonically sorted
    samples: tuple = ()  # empirical
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind == "exact":
            total = sum(p for _, p in self.atoms)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"exact table sums to {total!r}, not 1")

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def support(self) -> tuple:
        return tuple(s for s, _ in self.atoms)

    def prob(self, setting: Setting, tol: float = FLOAT_TOL) -> float:
        total = 0.0
        for s, p in self.atoms:
            if s.close_to(setting, tol):
                total += p
        return total

    def expectation(self, fn: Callable[[Setting], float]) -> float:
        if self.kind == "exact":
            return sum(p * fn(s) for s, p in self.atoms)
        return sum(fn(s) for s in self.samples) / len(self.samples)

    def map_atoms(self, fn: Callable[[Setting], Setting]) -> "Distribution":
        """Pushforward through a setting-to-setting map (exact mode)."""
        if self.kind != "exact":
            raise ValueError("map_atoms requires an exact distribution")
        acc: dict = {}
        for s, p in self.atoms:
            mapped = fn(s)
            acc[mapped] = acc.get(mapped, 0.0) + p
        return exact_distribution(acc)

    def marginal(self, targets: Iterable[VarId]) -> "Distribution":
        targets = tuple(targets)
        if self.kind == "exact":
            return self.map_atoms(lambda s: s.project(targets))
        return Distribution(
            kind="empirical",
            samples=tuple(s.project(targets) for s in self.samples),
            seed=self.seed,
        )

    def as_exact_table(self) -> dict:
        """Empirical frequencies as a table; identity on exact mode."""
        if self.kind == "exact":
            return {s: p for s, p in self.atoms}
        n = len(self.samples)
        acc: dict = {}
        for s in self.samples:
            acc[s] = acc.get(s, 0.0) + 1.0 / n
        return acc

    def tv_distance(self, other: "Distribution") -> float:
        a, b = self.as_exact_table(), other.as_exact_table()
        keys = set(a) | set(b)
        return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def exact_distribution(table: Mapping[Setting, float]) -> Distribution:
    atoms = tuple(
        sorted(
            ((s, p) for s, p in table.items() if p > 0.0),
            key=lambda sp: setting_sort_key(sp[0]),
        )
    )
    return Distribution(kind="exact", atoms=atoms)


def distribution(
    scm: InducedSCM,
    mode: str = "exact",
    n: int = 100_000,
    seed: int = 0,
) -> Distribution:
    """Joint distribution over the object variables.

    Exact mode enumerates the finite support forward in topological order
    (every variable must expose an exact local conditional, i.e. finite or
    analytically integrable noise).  Sample mode forward-samples ``n`` times
    from the given seed.
    """
    model = scm.model
    order = model.topological_order
    if mode == "exact":
        # paths: value tuple in topo order -> probability
        pos = {w: i for i, w in enumerate(order)}
        paths: dict = {(): 1.0}
        for v in order:
            pvars = model.parents.get(v, ())
            pidx = tuple(pos[w] for w in pvars)
            new_paths: dict = {}
            for prefix, prob in paths.items():
                parent_values = {w: prefix[i] for w, i in zip(pvars, pidx)}
                k = scm.local_kernel(v, parent_values)
                if k is None:
                    raise NonFiniteDomain(
                        f"{v!r} has continuous noise; exact mode unavailable"
                    )
                for value, p in k.items():
                    if p <= 0.0:
                        continue
                    key = prefix + (value,)
                    new_paths[key] = new_paths.get(key, 0.0) + prob * p
            paths = new_paths
        table = {}
        for values, prob in paths.items():
            s = Setting(dict(zip(order, values)))
            table[s] = table.get(s, 0.0) + prob
        return exact_distribution(table)

    if mode == "sample":
        rng = np.random.default_rng(seed)
        samples = []
        for _ in range(n):
            values: dict = {}
            for v in order:
                parent_values = {w: values[w] for w in model.parents.get(v, ())}
                values[v] = model.assigns[v].sample(scm.theta[v], parent_values, rng)
            samples.append(Setting(values))
        return Distribution(kind="empirical", samples=tuple(samples), seed=seed)

    raise ValueError(f"unknown mode {mode!r}")


def solution_distributions(
    m: MechanizedSCM,
    intervention: Setting = EMPTY_SETTING,
    *,
    method: str = "auto",
    mode: str = "exact",
    n: int = 100_000,
    seed: int = 0,
) -> tuple:
    """One distribution per mechanism solution, with exactly-equal duplicates
    collapsed; canonically ordered."""
    sols = solution_set(m.mech_model, intervention, method=method)
    dists = []
    seen = set()
    for s in sorted(sols, key=setting_sort_key):
        d = distribution(induce_scm(m, s), mode=mode, n=n, seed=seed)
        key = d.atoms if d.kind == "exact" else d.samples
        if key not in seen:
            seen.add(key)
            dists.append(d)
    return tuple(dists)

"""Random finite mechanized models with a grouped (quotient) abstraction
whose target block has constant mechanisms.

Used by the non-emergence fuzz suite: the construction guarantees the
quotient's preconditions (bijective tau on every group, independent
mechanisms inside the target block), so the abstracted target must never be
a non-trivial agent.
"""

import itertools
import random

from mechscm.core import (
    DeterministicSCM,
    FiniteDomain,
    KernelAssign,
    MechanizedSCM,
    ParameterizedSCM,
    Setting,
    mech,
    obj,
)
from mechscm.quotient import quotient_abstraction
from mechscm.rationality import UtilityFn


def random_case(seed: int):
    """Returns (low, groups, target_index, high, alignment, tau, omega)."""
    rng = random.Random(seed)
    n = rng.randint(2, 4)
    ovars = [obj(f"V{i}") for i in range(n)]
    mvars = [mech(f"V{i}") for i in range(n)]

    obj_domains = {}
    param_domains = {}
    for v, mv in zip(ovars, mvars):
        obj_domains[v] = FiniteDomain(tuple(range(rng.randint(1, 3))))
        param_domains[v] = FiniteDomain(tuple(range(rng.randint(1, 3))))

    parents = {
        v: tuple(p for p in ovars[:i] if rng.random() < 0.4)
        for i, v in enumerate(ovars)
    }

    assigns = {}
    for v in ovars:
        values = obj_domains[v].values
        cpt = {}
        for theta in param_domains[v].values:
            for combo in itertools.product(*(obj_domains[p].values for p in parents[v])):
                raw = [rng.random() + 1e-3 for _ in values]
                z = sum(raw)
                cpt[(theta, combo)] = {val: w / z for val, w in zip(values, raw)}

        def kernel(theta, pa, _v=v, _cpt=cpt, _ps=parents[v]):
            return _cpt[(theta, tuple(pa[p] for p in _ps))]

        assigns[v] = KernelAssign(kernel)

    obj_model = ParameterizedSCM(
        variables=tuple(ovars),
        parents=parents,
        domains=obj_domains,
        param_domains=param_domains,
        assigns=assigns,
    )

    # contiguous blocks of the construction order keep the quotient acyclic
    cuts = sorted(rng.sample(range(1, n), rng.randint(0, n - 1))) if n > 1 else []
    bounds = [0, *cuts, n]
    groups = [tuple(ovars[a:b]) for a, b in zip(bounds, bounds[1:])]
    target_index = rng.randrange(len(groups))
    target_block = {v.paired(mvars[0].layer) for v in groups[target_index]}

    mech_domains = {mv: param_domains[v] for v, mv in zip(ovars, mvars)}
    mech_assigns = {}
    mech_parents = {}
    group_of = {v: gi for gi, g in enumerate(groups) for v in g}
    for v, mv in zip(ovars, mvars):
        if mv in target_block:
            const = rng.choice(param_domains[v].values)
            mech_assigns[mv] = lambda ctx, _c=const: _c
            mech_parents[mv] = frozenset()
            continue
        candidates = [
            w for w in mvars if w != mv and group_of[w.paired(v.layer)] != group_of[v]
        ]
        deps = tuple(w for w in candidates if rng.random() < 0.6)
        table = {}
        for combo in itertools.product(*(mech_domains[w].values for w in deps)):
            table[combo] = rng.choice(param_domains[v].values)

        def assign(ctx, _deps=deps, _table=table):
            return _table[tuple(ctx[w] for w in _deps)]

        mech_assigns[mv] = assign
        mech_parents[mv] = frozenset(deps)

    mech_model = DeterministicSCM(
        variables=tuple(mvars),
        domains=mech_domains,
        assignments=mech_assigns,
        parents=mech_parents,
    )
    low = MechanizedSCM(mech_model, obj_model)
    high, alignment, tau, omega = quotient_abstraction(low, groups)
    return low, groups, target_index, high, alignment, tau, omega


def utility_registry(high: MechanizedSCM, seed: int):
    """Constant, linear-in-leaves, and random-coefficient utilities over the
    high-level object variables (whose values are tuples of ints)."""
    rng = random.Random(seed)

    def leaves_sum(s: Setting) -> float:
        return float(sum(sum(s[v]) for v in high.object_vars))

    coeffs = {
        v: [rng.uniform(-2.0, 2.0) for _ in range(16)] for v in high.object_vars
    }

    def weighted(s: Setting) -> float:
        total = 0.0
        for v in high.object_vars:
            for i, x in enumerate(s[v]):
                total += coeffs[v][i] * float(x)
        return total

    all_vars = frozenset(high.object_vars)
    return [
        UtilityFn.constant(0.0),
        UtilityFn(evaluate=leaves_sum, depends_on=all_vars, label="leaves-sum"),
        UtilityFn(evaluate=weighted, depends_on=all_vars, label="weighted"),
    ]

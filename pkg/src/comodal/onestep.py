"""One-step semantics and satisfiability.

A one-step problem lives over a fixed finite carrier: a set of boolean
combinations of modal atoms whose arguments are subsets of the carrier.
Satisfiability can be decided by brute force (deterministic enumeration of
functor values within caps) or, for the logics with known closed-form
constructions, by building a witness directly from a maximally decided set
and verifying it afterwards.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import BudgetError, ConsistencyError, ConstructionError
from .formula import (
    OperatorFamily,
    OperatorSymbol,
    PARAM_NAT,
    PARAM_POS_NAT,
    PARAM_UNIT_RATIONAL,
    PARAM_Z2,
    PropAnd,
    PropAtom,
    PropBottom,
    PropNot,
    atom_columns,
    prop_atoms,
    truth_mask,
)
from .logic import (
    Logic,
    OneStepAtom,
    OneStepFormula,
    atom_sort_key,
    instantiate_axioms,
)
from .semantics import (
    AddMeasureFunctor,
    BoundedMeasureFunctor,
    Caps,
    DEFAULT_CAPS,
    DistributionFunctor,
    ExactProbFunctor,
    FunctorKind,
    MappedSelectionValue,
    MeasureValue,
    MultisetFunctor,
    MultisetValue,
    PowersetFunctor,
    SelectionFunctor,
    SelectionValue,
    SubsetValue,
    all_subsets,
    eval_onestep,
    INF,
)


@dataclass(frozen=True)
class OneStepProblem:
    logic: Logic
    states: tuple
    phi: tuple[OneStepFormula, ...]
    caps: Caps = DEFAULT_CAPS

    def __post_init__(self):
        carrier = set(self.states)
        for f in self.phi:
            for atom in prop_atoms(f):
                for arg in atom.args:
                    if not arg <= carrier:
                        raise ConsistencyError(
                            f"atom argument {set(arg)!r} leaves the carrier")


@dataclass(frozen=True)
class Witness:
    """A functor value satisfying all formulas of a one-step problem."""

    value: object
    provenance: str  # 'constructed' | 'brute-force'


def one_step_eval(phi: OneStepFormula, value, functor: FunctorKind) -> bool:
    return eval_onestep(phi, value, functor)


def param_cap(family: OperatorFamily, caps: Caps) -> int:
    """The cap bounding this family's parameter enumeration."""
    if family.params in (PARAM_UNIT_RATIONAL,):
        return caps.denominator
    return caps.grade


def family_symbols(functor: FunctorKind, caps: Caps) -> tuple[OperatorSymbol, ...]:
    out = []
    for fam in functor.families():
        for p in fam.params.values(param_cap(fam, caps)):
            out.append(fam.symbol(p))
    return tuple(out)


def atom_universe(logic: Logic, states: Sequence,
                  caps: Caps = DEFAULT_CAPS) -> tuple[OneStepAtom, ...]:
    """Every modal atom over P(X) with parameters within caps, in the
    deterministic atom order."""
    subsets = all_subsets(tuple(states))
    atoms = []
    for fam in logic.sig.families:
        for p in fam.params.values(param_cap(fam, caps)):
            sym = fam.symbol(p)
            for args in itertools.product(subsets, repeat=fam.arity):
                atoms.append(OneStepAtom(sym, args))
    return tuple(sorted(atoms, key=lambda a: atom_sort_key(a, logic.sig, states)))


def effective_caps(phi: Iterable[OneStepFormula], caps: Caps) -> Caps:
    """Caps raised so that brute-force enumeration can reach every value
    relevant to the query's parameters."""
    grade, denom = caps.grade, caps.denominator
    for f in phi:
        for atom in prop_atoms(f):
            p = atom.op.param
            if isinstance(p, int):
                grade = max(grade, p)
            elif isinstance(p, Fraction):
                denom = max(denom, p.denominator)
    return caps.with_(grade=grade, denominator=denom,
                      multiplicity=max(caps.multiplicity, grade))


def one_step_sat_bruteforce(problem: OneStepProblem) -> Optional[Witness]:
    """First satisfying value in enumeration order, or None.

    None is absolute when the functor's value space over this carrier is
    finite (see `enumeration_exhaustive`), and 'unsat within caps' otherwise.
    """
    caps = effective_caps(problem.phi, problem.caps)
    functor = problem.logic.functor
    for value in functor.enumerate(problem.states, caps):
        if all(eval_onestep(f, value, functor) for f in problem.phi):
            return Witness(value, "brute-force")
    return None


def enumeration_exhaustive(problem: OneStepProblem) -> bool:
    caps = effective_caps(problem.phi, problem.caps)
    return problem.logic.functor.exhaustive(problem.states, caps)


# ---------------------------------------------------------------------------
# literal bookkeeping for maximally decided sets


def literal_decisions(phi: Iterable[OneStepFormula]) -> dict:
    """Extract atom -> truth decisions from the literals of a set; ignores
    non-literal members (they are still checked by post-verification)."""
    out: dict = {}
    for f in phi:
        if isinstance(f, PropAtom):
            atom, val = f.atom, True
        elif isinstance(f, PropNot) and isinstance(f.arg, PropAtom):
            atom, val = f.arg.atom, False
        else:
            continue
        if atom in out and out[atom] != val:
            raise ConsistencyError(f"contradictory literals on {atom}")
        out[atom] = val
    return out


def _decided(decisions: Mapping, atom: OneStepAtom) -> bool:
    try:
        return decisions[atom]
    except KeyError:
        raise ConsistencyError(
            f"input set is not decisive: {atom.op.text()} at "
            f"{tuple(sorted(map(str, a)) for a in atom.args)} is undecided")


# ---------------------------------------------------------------------------
# closed-form witness constructions


def one_step_witness(logic: Logic, states: Sequence,
                     phi: Iterable[OneStepFormula],
                     algebra: Optional[Sequence[frozenset]] = None,
                     caps: Caps = DEFAULT_CAPS,
                     allow_bruteforce: bool = True) -> Witness:
    """Build a witness by the logic's closed-form construction from a set that
    decides every needed atom over the subset algebra, then verify it against
    every member of `phi`.

    Falls back to brute force (within caps) when no construction is known for
    the functor or the constructed value fails verification; with the
    fallback disabled, such failures raise `ConstructionError`.
    """
    phi = tuple(phi)
    states = tuple(states)
    if algebra is None:
        algebra = all_subsets(states)
    functor = logic.functor
    caps = effective_caps(phi, caps)

    def fallback(reason: str) -> Witness:
        if allow_bruteforce:
            got = one_step_sat_bruteforce(OneStepProblem(logic, states, phi, caps))
            if got is not None:
                return got
        raise ConstructionError(
            f"witness construction failed for {logic.name} over {len(states)} "
            f"states: {reason}")

    try:
        decisions = literal_decisions(phi)
        value = _construct(functor, states, tuple(algebra), decisions, caps)
    except (ConsistencyError, ConstructionError) as exc:
        return fallback(str(exc))
    try:
        functor.validate(value, states)
    except Exception as exc:
        return fallback(f"constructed value invalid: {exc}")
    if not all(eval_onestep(f, value, functor) for f in phi):
        return fallback("constructed value fails verification")
    return Witness(value, "constructed")


def _construct(functor, states, algebra, decisions, caps):
    if isinstance(functor, PowersetFunctor):
        return _construct_powerset(states, decisions)
    if isinstance(functor, MultisetFunctor):
        return _construct_multiset(functor, states, decisions)
    if isinstance(functor, SelectionFunctor):
        if "CM" in functor.constraints:
            # no construction is known for cautious monotony; search instead
            raise ConstructionError("no closed form for the CM subfunctor")
        return _construct_selection(functor, states, algebra, decisions)
    if isinstance(functor, BoundedMeasureFunctor):
        return _construct_bounded(functor, states, algebra, decisions, caps)
    if isinstance(functor, ExactProbFunctor):
        return _construct_exact_prob(functor, states, algebra, decisions, caps)
    if isinstance(functor, AddMeasureFunctor):
        return _construct_addmeasure(functor, states, algebra, decisions, caps)
    if isinstance(functor, DistributionFunctor):
        raise ConstructionError("no closed form over distributions")
    raise ConstructionError(f"no construction for functor {functor.name}")


def _construct_powerset(states, decisions):
    # successors are the states whose singleton is possible: x is in the
    # witness iff the box atom at the complement of {x} is decided false
    box = OperatorSymbol("box", None, 1)
    carrier = frozenset(states)
    members = [x for x in states
               if not _decided(decisions, OneStepAtom(box, (carrier - {x},)))]
    return SubsetValue(frozenset(members))


def _construct_multiset(functor, states, decisions):
    # multiplicity of x is the largest asserted grade at {x}; unbounded
    # within the probed grades means infinity (a truncation reading of the
    # grade budget)
    counts = {}
    for x in states:
        probed = sorted(
            (atom.op.param, val) for atom, val in decisions.items()
            if atom.op.family == "geq" and atom.args == (frozenset({x}),))
        if not probed:
            raise ConsistencyError(f"no grades decided at state {x!r}")
        positives = [k for k, val in probed if val]
        denied = [k for k, val in probed if not val]
        if denied:
            counts[x] = max(positives, default=0)
        else:
            counts[x] = INF if functor.allow_inf else max(positives, default=0)
    return MultisetValue.of(counts)


def _construct_selection(functor, states, algebra, decisions):
    cond = OperatorSymbol("cond", None, 2)
    carrier = frozenset(states)
    algebra = tuple(algebra)
    f0 = {}
    for a in algebra:
        out = carrier
        for b in algebra:
            if _decided(decisions, OneStepAtom(cond, (a, b))):
                out = out & b
        f0[a] = out
    full = all_subsets(states)
    algebra_set = set(algebra)
    if "DIS" in functor.constraints:
        # uniform filter rule; on algebra arguments it coincides with the
        # intersection table whenever the input was consistently decided
        table = []
        for a in full:
            members = frozenset(
                x for x in a
                if all(x not in u or x in f0[u]
                       for u in algebra if u <= a))
            table.append((a, members))
        return SelectionValue(tuple(table))
    default = frozenset()
    return SelectionValue(tuple(
        (a, f0[a] if a in algebra_set else default) for a in full))


def _positive_measures(decisions, arg: frozenset, family_name="E"):
    out = []
    for atom, val in decisions.items():
        if val and atom.op.family == family_name and atom.op.param is not None \
                and atom.args == (arg,):
            out.append(atom.op.param)
    if len(out) > 1:
        raise ConsistencyError(
            f"measure uniqueness violated at {sorted(map(str, arg))}: {out}")
    return out


def _construct_addmeasure(functor, states, algebra, decisions, caps):
    seed = {}
    for a in algebra:
        ms = _positive_measures(decisions, a)
        if ms:
            seed[a] = ms[0]
    return functor.make(seed, states, close=True)


def _construct_exact_prob(functor, states, algebra, decisions, caps):
    seed = {}
    for a in algebra:
        ms = _positive_measures(decisions, a)
        if ms:
            seed[a] = ms[0]
    return functor.make(seed, states, close=True)


def _construct_bounded(functor, states, algebra, decisions, caps):
    e_plain = OperatorSymbol("E", None, 1)
    carrier = frozenset(states)
    domain = [a for a in algebra
              if _decided(decisions, OneStepAtom(e_plain, (a,)))]
    dom = set(domain)
    if carrier not in dom or frozenset() not in dom:
        raise ConstructionError("measurable family misses the carrier or empty set")
    for a in dom:
        if carrier - a not in dom:
            raise ConstructionError("measurable family not complement-closed")
    for a, b in itertools.combinations(dom, 2):
        if a | b not in dom:
            raise ConstructionError("measurable family not union-closed")
    measured = {}
    for a in domain:
        ms = _positive_measures(decisions, a)
        if ms:
            measured[a] = ms[0]
    denied = {a: {atom.op.param for atom, val in decisions.items()
                  if not val and atom.op.param is not None
                  and atom.op.family == "E" and atom.args == (a,)}
              for a in domain}

    # solve for the values on the algebra's atoms by bounded search
    cells = []
    for x in states:
        cell = carrier
        for a in dom:
            if x in a:
                cell = cell & a
            else:
                cell = cell - a
        if cell not in cells:
            cells.append(cell)
    bound = max([caps.grade] + list(measured.values())) + 1
    order = sorted(dom, key=lambda s: (len(s), sorted(map(repr, s))))

    def consistent(values):
        for a in order:
            total = sum(v for c, v in zip(cells, values) if c <= a)
            if a in measured:
                if total != measured[a]:
                    return False
            elif total in denied[a]:
                return False
        return True

    for combo in itertools.product(range(bound + 1), repeat=len(cells)):
        if consistent(combo):
            entries = {}
            for picks in itertools.product((0, 1), repeat=len(cells)):
                member = frozenset().union(
                    *(c for c, p in zip(cells, picks) if p)) if any(picks) \
                    else frozenset()
                if member in dom:
                    entries[member] = sum(
                        v for v, p in zip(combo, picks) if p)
            return MeasureValue.of(entries)
    raise ConstructionError("no additive extension within the value bound")


# ---------------------------------------------------------------------------
# saturation (the one-step Lindenbaum step)


_context_cache: dict = {}


def _instance_context(logic: Logic, states: tuple, caps: Caps,
                      universe: tuple):
    """Truth-table context shared by saturation runs: atom order, columns,
    and the conjunction mask of all axiom instances."""
    key = (logic.name, states, caps.grade, caps.denominator, universe)
    got = _context_cache.get(key)
    if got is not None:
        return got
    instances = instantiate_axioms(logic, states, caps)
    order, seen = [], set()
    for f in instances:
        for a in prop_atoms(f):
            if a not in seen:
                seen.add(a)
                order.append(a)
    for a in universe:
        if a not in seen:
            seen.add(a)
            order.append(a)
    columns, full = atom_columns(order)
    mask = full
    for f in instances:
        mask &= truth_mask(f, columns, full)
    out = (tuple(order), columns, full, mask)
    _context_cache[key] = out
    return out


def saturate(logic: Logic, states: Sequence, phi: Iterable[OneStepFormula],
             universe: Iterable[OneStepAtom],
             caps: Caps = DEFAULT_CAPS) -> tuple[OneStepFormula, ...]:
    """Extend a consistent set to one deciding every atom of the universe:
    each atom is taken positively if consistent with what came before,
    negatively otherwise (deterministic order, positive first)."""
    states = tuple(states)
    phi = tuple(phi)
    universe = tuple(sorted(universe, key=lambda a: atom_sort_key(a, logic.sig, states)))
    caps = effective_caps(phi, caps)
    caps = caps.with_(grade=max(caps.grade, *(
        [a.op.param for a in universe if isinstance(a.op.param, int)] or [0])),
        denominator=max(caps.denominator, *(
            [a.op.param.denominator for a in universe
             if isinstance(a.op.param, Fraction)] or [1])))
    order, columns, full, mask = _instance_context(logic, states, caps, universe)
    extra = [a for f in phi for a in prop_atoms(f) if a not in columns]
    if extra:
        order = tuple(order) + tuple(dict.fromkeys(extra))
        columns, full = atom_columns(order)
        mask = full
        for f in instantiate_axioms(logic, states, caps):
            mask &= truth_mask(f, columns, full)
    for f in phi:
        mask &= truth_mask(f, columns, full)
    if mask == 0:
        raise ConsistencyError("input set is one-step inconsistent")
    already = set(literal_decisions(phi))
    out = list(phi)
    for atom in universe:
        if atom in already:
            continue
        col = columns[atom]
        if mask & col:
            mask &= col
            out.append(PropAtom(atom))
        else:
            mask &= full & ~col
            out.append(PropNot(PropAtom(atom)))
    assert mask != 0
    return tuple(out)


# ---------------------------------------------------------------------------
# separation


def check_separation(functor: FunctorKind, states: Sequence, t1, t2,
                     caps: Caps = DEFAULT_CAPS) -> Optional[OneStepAtom]:
    """A single modal atom satisfied by exactly one of two distinct values,
    searched over all operators and argument subsets within caps; None means
    'not separated within caps'."""
    if t1 == t2:
        raise ConsistencyError("values are structurally equal")
    subsets = all_subsets(tuple(states))
    for sym in family_symbols(functor, caps):
        for args in itertools.product(subsets, repeat=sym.arity):
            if functor.lifting(sym, args, t1) != functor.lifting(sym, args, t2):
                return OneStepAtom(sym, args)
    return None


# ---------------------------------------------------------------------------
# one-step soundness


@dataclass
class SoundnessReport:
    logic: str
    carrier: tuple
    instances: int = 0
    values: int = 0
    violations: list = field(default_factory=list)  # (instance, value)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_one_step_soundness(logic: Logic, states: Sequence,
                             caps: Caps = DEFAULT_CAPS) -> SoundnessReport:
    """Check every axiom instance against every enumerable value: a sound
    logic's instances hold at all of TX, so the violation list must be empty."""
    states = tuple(states)
    report = SoundnessReport(logic.name, states)
    instances = instantiate_axioms(logic, states, caps)
    report.instances = len(instances)
    functor = logic.functor
    for value in functor.enumerate(states, caps):
        report.values += 1
        for inst in instances:
            if not eval_onestep(inst, value, functor):
                report.violations.append((inst, value))
    return report

"""Signature functors, structured successor values, predicate liftings,
coalgebras, model checking, and frame-condition checking.

Each signature functor is a singleton-style object that knows how to
validate its values over a finite carrier, enumerate them deterministically
(within caps when the value space is infinite), push them forward along maps
between carriers, and interpret the modal operators it supports.  All
arithmetic is exact: multiplicities are ints plus a distinguished infinity,
weights and probabilities are `fractions.Fraction`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from .errors import (
    BudgetError,
    ConsistencyError,
    FormulaError,
    FunctorMismatchError,
)
from .formula import (
    And,
    Atom,
    Bottom,
    Formula,
    Modal,
    Not,
    OperatorFamily,
    OperatorSymbol,
    PARAM_NAT,
    PARAM_NONNEG_RATIONAL,
    PARAM_POS_NAT,
    PARAM_UNIT_RATIONAL,
    PARAM_Z2,
    prop_eval,
    prop_indices,
)


# ---------------------------------------------------------------------------
# infinity for multisets


class _Infinity:
    """The countable infinity of multiset multiplicities.

    Greater than every natural, absorbing under addition, never equal to any
    natural number.
    """

    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __ge__(self, other):
        return True

    def __gt__(self, other):
        return not isinstance(other, _Infinity)

    def __le__(self, other):
        return isinstance(other, _Infinity)

    def __lt__(self, other):
        return False

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __repr__(self):
        return "inf"


INF = _Infinity()


# ---------------------------------------------------------------------------
# enumeration and budget caps


@dataclass(frozen=True)
class Caps:
    """Bounds that keep enumerations finite and budgets honest.

    grade: operator parameter bound (grades, monoid measure values).
    denominator: common-denominator bound for rational weights and parameters.
    multiplicity: multiset entries run over 0..multiplicity plus infinity.
    family_carrier: measure-domain families are enumerated only up to this
        carrier size; selection_carrier likewise for selection tables.
    instances: per-scheme axiom instantiation budget.
    closure: bound on the number of closure atoms of a canonical fragment.
    frame_assignments: valuation budget for frame checking.
    """

    grade: int = 2
    denominator: int = 4
    multiplicity: int = 2
    family_carrier: int = 3
    selection_carrier: int = 3
    instances: int = 4096
    closure: int = 1 << 16
    frame_assignments: int = 4096

    def with_(self, **kw) -> "Caps":
        return replace(self, **kw)


DEFAULT_CAPS = Caps()


def all_subsets(states: Sequence) -> tuple[frozenset, ...]:
    """Subsets of an ordered carrier in binary-counter order: bit i of the
    counter decides membership of states[i]."""
    out = []
    n = len(states)
    for mask in range(1 << n):
        out.append(frozenset(states[i] for i in range(n) if mask >> i & 1))
    return tuple(out)


def subset_mask(subset: frozenset, states: Sequence) -> int:
    mask = 0
    index = {s: i for i, s in enumerate(states)}
    for x in subset:
        mask |= 1 << index[x]
    return mask


# ---------------------------------------------------------------------------
# monoids for measure logics


@dataclass(frozen=True, eq=False)
class Monoid:
    """An at most countable commutative monoid with decidable equality."""

    name: str
    zero: object
    add: Callable
    param_kind: object

    def elements(self, caps: Caps) -> tuple:
        raise NotImplementedError

    def check_laws(self, samples: Sequence) -> bool:
        """Spot-check commutativity and identity on the given elements."""
        for a in samples:
            if self.add(a, self.zero) != a or self.add(self.zero, a) != a:
                return False
        for a, b in itertools.product(samples, repeat=2):
            if self.add(a, b) != self.add(b, a):
                return False
        for a, b, c in itertools.product(samples, repeat=3):
            if self.add(self.add(a, b), c) != self.add(a, self.add(b, c)):
                return False
        return True


class _NatMonoid(Monoid):
    def elements(self, caps):
        return tuple(range(caps.grade + 2))


class _Z2Monoid(Monoid):
    def elements(self, caps):
        return (0, 1)


class _QNonnegMonoid(Monoid):
    def elements(self, caps):
        grid = {Fraction(a, b)
                for b in range(1, caps.denominator + 1)
                for a in range((caps.grade + 2) * b + 1)}
        return tuple(sorted(v for v in grid if v <= caps.grade + 1))


MONOID_NAT = _NatMonoid("nat", 0, lambda a, b: a + b, PARAM_NAT)
MONOID_Z2 = _Z2Monoid("z2", 0, lambda a, b: (a + b) % 2, PARAM_Z2)
MONOID_QNONNEG = _QNonnegMonoid("qnonneg", Fraction(0), lambda a, b: a + b,
                                PARAM_NONNEG_RATIONAL)

MONOIDS = {m.name: m for m in (MONOID_NAT, MONOID_Z2, MONOID_QNONNEG)}


# ---------------------------------------------------------------------------
# structured successor values


@dataclass(frozen=True, slots=True)
class SubsetValue:
    members: frozenset


@dataclass(frozen=True, slots=True)
class MultisetValue:
    """Finite-support map state -> multiplicity; zero entries are dropped."""

    items: frozenset  # of (state, count) with count > 0 or count is INF

    @staticmethod
    def of(counts: Mapping) -> "MultisetValue":
        return MultisetValue(frozenset(
            (s, c) for s, c in counts.items() if c is INF or c > 0))

    def count(self, state):
        for s, c in self.items:
            if s == state:
                return c
        return 0

    def as_dict(self) -> dict:
        return dict(self.items)

    def total(self, subset: frozenset):
        out = 0
        for s, c in self.items:
            if s in subset:
                out = out + c
        return out

    def support(self) -> frozenset:
        return frozenset(s for s, _ in self.items)


@dataclass(frozen=True, slots=True)
class DistributionValue:
    """Finitely supported probability distribution with exact rational weights."""

    weights: frozenset  # of (state, Fraction > 0)

    @staticmethod
    def of(weights: Mapping) -> "DistributionValue":
        items = frozenset((s, Fraction(w)) for s, w in weights.items() if w != 0)
        return DistributionValue(items)

    def weight(self, state) -> Fraction:
        for s, w in self.weights:
            if s == state:
                return w
        return Fraction(0)

    def as_dict(self) -> dict:
        return dict(self.weights)

    def mass(self, subset: frozenset) -> Fraction:
        return sum((w for s, w in self.weights if s in subset), Fraction(0))


@dataclass(frozen=True, slots=True)
class SelectionValue:
    """A total selection table P(X) -> P(X), stored explicitly."""

    table: tuple  # of (frozenset, frozenset), ordered by argument mask

    @staticmethod
    def of(mapping: Mapping, states: Sequence) -> "SelectionValue":
        subsets = all_subsets(states)
        if set(mapping) != set(subsets):
            raise FormulaError("selection table must cover every subset of the carrier")
        return SelectionValue(tuple((a, frozenset(mapping[a])) for a in subsets))

    def select(self, arg: frozenset) -> frozenset:
        for a, v in self.table:
            if a == arg:
                return v
        raise FunctorMismatchError(f"selection argument {set(arg)!r} outside the carrier")

    def as_dict(self) -> dict:
        return dict(self.table)


@dataclass(eq=False)
class MappedSelectionValue:
    """A selection function over a large carrier, represented as the lift of an
    explicit table along a surjection onto a small carrier.

    rule 'preimage-empty': f(B) is the preimage of base(U) when B is the full
    preimage of some U, and empty otherwise (sound for plain conditional
    frames and for the identity subfunctor).
    rule 'id-dis': f(B) keeps x in B iff base selects p(x) from every small set
    U with p(x) in U whose full preimage is contained in B (sound for the
    identity+disjunction subfunctor).
    """

    base: SelectionValue
    proj: dict  # big state -> small state
    big: tuple
    small: tuple
    rule: str

    def _fiber_core(self, big_set: frozenset) -> frozenset:
        return frozenset(
            y for y in self.small
            if all(x in big_set for x in self.big if self.proj[x] == y))

    def select(self, arg: frozenset) -> frozenset:
        if self.rule == "preimage-empty":
            image = frozenset(self.proj[x] for x in arg)
            preimage = frozenset(x for x in self.big if self.proj[x] in image)
            if preimage != arg:
                return frozenset()
            small_val = self.base.select(image)
            return frozenset(x for x in self.big if self.proj[x] in small_val)
        if self.rule == "id-dis":
            core = self._fiber_core(arg)
            core_subsets = [u for u in all_subsets(self.small) if u <= core]
            out = set()
            for x in arg:
                y = self.proj[x]
                if all(y in self.base.select(u) for u in core_subsets if y in u):
                    out.add(x)
            return frozenset(out)
        raise FunctorMismatchError(f"unknown selection lift rule {self.rule!r}")


@dataclass(frozen=True, slots=True)
class MeasureValue:
    """A partial measure: a family of measurable subsets with their values."""

    entries: frozenset  # of (frozenset, value)

    @staticmethod
    def of(mapping: Mapping) -> "MeasureValue":
        return MeasureValue(frozenset((frozenset(a), v) for a, v in mapping.items()))

    @property
    def domain(self) -> frozenset:
        return frozenset(a for a, _ in self.entries)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def measure(self, subset: frozenset):
        for a, v in self.entries:
            if a == subset:
                return v
        return None


TValue = object  # union of the value classes above


# ---------------------------------------------------------------------------
# signature functors


class FunctorKind:
    """A set functor restricted to finite carriers, with the machinery needed
    by the one-step layer: value validation, deterministic enumeration,
    pushforward along maps, and the predicate liftings of its operators."""

    name: str = "?"
    fin_branching: bool = False  # the finiteness restriction is intended semantics

    def families(self) -> tuple[OperatorFamily, ...]:
        raise NotImplementedError

    def supports(self, op: OperatorSymbol) -> bool:
        return any(f.name == op.family and f.parametrized == (op.param is not None)
                   and f.arity == op.arity and f.params.contains(op.param)
                   for f in self.families())

    def validate(self, value, states: Sequence) -> None:
        raise NotImplementedError

    def enumerate(self, states: Sequence, caps: Caps) -> Iterator:
        raise NotImplementedError

    def exhaustive(self, states: Sequence, caps: Caps) -> bool:
        """Whether `enumerate` covers the whole value space over this carrier."""
        return False

    def sample(self, states: Sequence, caps: Caps, rng) -> TValue:
        raise BudgetError(f"functor {self.name} does not support sampling")

    def pushforward(self, fmap: Mapping, value, domain: Sequence, codomain: Sequence):
        """The functor's action T(f) on a value, for f given as a mapping."""
        raise NotImplementedError

    def lift_along(self, proj: Mapping, big: Sequence, small: Sequence, value):
        """A value over `big` whose pushforward along the surjection `proj` is
        `value`; used to move one-step witnesses up a canonical level."""
        raise NotImplementedError

    def lifting(self, op: OperatorSymbol, args: tuple, value) -> bool:
        raise NotImplementedError

    def _reject(self, op) -> FunctorMismatchError:
        return FunctorMismatchError(
            f"operator {op.text()} is not interpreted over functor {self.name}")

    def __repr__(self):
        return f"<functor {self.name}>"


def _section(proj: Mapping, big: Sequence) -> dict:
    """First preimage (in carrier order) of each small state."""
    out = {}
    for x in big:
        out.setdefault(proj[x], x)
    return out


class PowersetFunctor(FunctorKind):
    def __init__(self, fin_branching=False):
        self.name = "finite-powerset" if fin_branching else "powerset"
        self.fin_branching = fin_branching

    def families(self):
        return (OperatorFamily("box", 1),)

    def validate(self, value, states):
        if not isinstance(value, SubsetValue):
            raise FunctorMismatchError(f"{self.name} expects a subset value")
        if not value.members <= set(states):
            raise FunctorMismatchError("subset value leaves the carrier")

    def enumerate(self, states, caps):
        for s in all_subsets(states):
            yield SubsetValue(s)

    def exhaustive(self, states, caps):
        return True

    def sample(self, states, caps, rng):
        return SubsetValue(frozenset(x for x in states if rng.random() < 0.5))

    def pushforward(self, fmap, value, domain, codomain):
        return SubsetValue(frozenset(fmap[x] for x in value.members))

    def lift_along(self, proj, big, small, value):
        s = _section(proj, big)
        return SubsetValue(frozenset(s[y] for y in value.members))

    def lifting(self, op, args, value):
        if op.family == "box" and op.param is None:
            return value.members <= args[0]
        raise self._reject(op)


class MultisetFunctor(FunctorKind):
    def __init__(self, allow_inf=True):
        self.name = "multiset" if allow_inf else "finite-multiset"
        self.allow_inf = allow_inf
        self.fin_branching = not allow_inf

    def families(self):
        return (OperatorFamily("geq", 1, PARAM_NAT),)

    def validate(self, value, states):
        if not isinstance(value, MultisetValue):
            raise FunctorMismatchError(f"{self.name} expects a multiset value")
        for s, c in value.items:
            if s not in set(states):
                raise FunctorMismatchError("multiset support leaves the carrier")
            if c is INF:
                if not self.allow_inf:
                    raise FunctorMismatchError(
                        "finite-multiset values cannot contain infinity")
            elif not isinstance(c, int) or c <= 0:
                raise FunctorMismatchError("multiplicities are positive naturals")

    def enumerate(self, states, caps):
        choices = tuple(range(caps.multiplicity + 1))
        if self.allow_inf:
            choices = choices + (INF,)
        for combo in itertools.product(choices, repeat=len(states)):
            yield MultisetValue.of(dict(zip(states, combo)))

    def sample(self, states, caps, rng):
        choices = list(range(caps.multiplicity + 1)) + ([INF] if self.allow_inf else [])
        return MultisetValue.of({s: rng.choice(choices) for s in states})

    def pushforward(self, fmap, value, domain, codomain):
        out: dict = {}
        for s, c in value.items:
            y = fmap[s]
            out[y] = out.get(y, 0) + c
        return MultisetValue.of(out)

    def lift_along(self, proj, big, small, value):
        s = _section(proj, big)
        return MultisetValue.of({s[y]: c for y, c in value.items})

    def lifting(self, op, args, value):
        if op.family == "geq" and isinstance(op.param, int):
            return value.total(args[0]) >= op.param
        raise self._reject(op)


class SelectionFunctor(FunctorKind):
    """Selection-function functor; `constraints` carves out the subfunctors
    induced by the conditional axioms ID / DIS / CM."""

    def __init__(self, constraints: tuple = ()):
        self.constraints = tuple(constraints)
        self.name = "selection" + "".join(f"-{c.lower()}" for c in self.constraints)

    def families(self):
        return (OperatorFamily("cond", 2),)

    def satisfies_constraints(self, value, states) -> bool:
        subs = all_subsets(states)
        if "ID" in self.constraints:
            if not all(value.select(a) <= a for a in subs):
                return False
        if "DIS" in self.constraints:
            for a, b in itertools.product(subs, repeat=2):
                if not value.select(a | b) <= value.select(a) | value.select(b):
                    return False
        if "CM" in self.constraints:
            for a, b in itertools.product(subs, repeat=2):
                if value.select(b) <= a and not value.select(a) & b <= value.select(b):
                    return False
        return True

    def validate(self, value, states):
        if isinstance(value, MappedSelectionValue):
            return  # sound by construction of the lift rule
        if not isinstance(value, SelectionValue):
            raise FunctorMismatchError(f"{self.name} expects a selection table")
        subs = all_subsets(states)
        if set(a for a, _ in value.table) != set(subs):
            raise FunctorMismatchError("selection table must cover every subset")
        for a, v in value.table:
            if not v <= set(states):
                raise FunctorMismatchError("selection value leaves the carrier")
        if not self.satisfies_constraints(value, states):
            raise FunctorMismatchError(
                f"selection table violates constraints {self.constraints}")

    def enumerate(self, states, caps):
        if len(states) > caps.selection_carrier:
            raise BudgetError(
                f"selection enumeration over {len(states)} states exceeds the "
                f"cap {caps.selection_carrier}")
        subs = all_subsets(states)
        for combo in itertools.product(subs, repeat=len(subs)):
            value = SelectionValue(tuple(zip(subs, combo)))
            if self.satisfies_constraints(value, states):
                yield value

    def exhaustive(self, states, caps):
        return len(states) <= caps.selection_carrier

    def sample(self, states, caps, rng):
        subs = all_subsets(states)
        while True:
            value = SelectionValue(tuple((a, rng.choice(subs)) for a in subs))
            if self.satisfies_constraints(value, states):
                return value

    def pushforward(self, fmap, value, domain, codomain):
        # S(f)(s)(B) = f[s(f^{-1}[B])]
        table = []
        for b in all_subsets(codomain):
            pre = frozenset(x for x in domain if fmap[x] in b)
            table.append((b, frozenset(fmap[x] for x in value.select(pre))))
        return SelectionValue(tuple(table))

    def lift_along(self, proj, big, small, value):
        if "CM" in self.constraints:
            raise ConsistencyError(
                "no lift rule is known for the cautious-monotony subfunctor")
        rule = "id-dis" if "DIS" in self.constraints else "preimage-empty"
        return MappedSelectionValue(base=value, proj=dict(proj),
                                    big=tuple(big), small=tuple(small), rule=rule)

    def lifting(self, op, args, value):
        if op.family == "cond" and op.param is None:
            return value.select(args[0]) <= args[1]
        raise self._reject(op)


class DistributionFunctor(FunctorKind):
    def families(self):
        return (OperatorFamily("L", 1, PARAM_UNIT_RATIONAL),)

    name = "distribution"

    def validate(self, value, states):
        if not isinstance(value, DistributionValue):
            raise FunctorMismatchError("distribution expects rational weights")
        total = Fraction(0)
        for s, w in value.weights:
            if s not in set(states):
                raise FunctorMismatchError("distribution support leaves the carrier")
            if not isinstance(w, Fraction) or w <= 0:
                raise FunctorMismatchError("weights are positive exact rationals")
            total += w
        if total != 1:
            raise FunctorMismatchError(f"weights sum to {total}, not 1")

    def enumerate(self, states, caps):
        seen = set()
        n = len(states)
        for q in range(1, caps.denominator + 1):
            for combo in _compositions(q, n):
                value = tuple(Fraction(k, q) for k in combo)
                if value in seen:
                    continue
                seen.add(value)
                yield DistributionValue.of(dict(zip(states, value)))

    def sample(self, states, caps, rng):
        q = rng.randint(1, caps.denominator)
        cuts = sorted(rng.randint(0, q) for _ in range(len(states) - 1))
        parts = [b - a for a, b in zip([0] + cuts, cuts + [q])]
        return DistributionValue.of(
            {s: Fraction(k, q) for s, k in zip(states, parts)})

    def pushforward(self, fmap, value, domain, codomain):
        out: dict = {}
        for s, w in value.weights:
            y = fmap[s]
            out[y] = out.get(y, Fraction(0)) + w
        return DistributionValue.of(out)

    def lift_along(self, proj, big, small, value):
        s = _section(proj, big)
        return DistributionValue.of({s[y]: w for y, w in value.weights})

    def lifting(self, op, args, value):
        if op.family == "L" and op.param is not None:
            return value.mass(args[0]) >= op.param
        raise self._reject(op)


def _compositions(total: int, parts: int) -> Iterator[tuple]:
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _disjoint_union_closed(family: Sequence) -> bool:
    fam = set(family)
    for a, b in itertools.combinations_with_replacement(sorted(family, key=len), 2):
        if not a & b and (a | b) not in fam:
            return False
    return True


def _additive(entries: Mapping, add: Callable) -> bool:
    items = list(entries.items())
    for (a, va), (b, vb) in itertools.combinations_with_replacement(items, 2):
        if not a & b:
            union = a | b
            if union in entries and entries[union] != add(va, vb):
                return False
    return True


class AddMeasureFunctor(FunctorKind):
    """Partial additive measures valued in a commutative monoid; the domain is
    a family of subsets closed under disjoint unions."""

    def __init__(self, monoid: Monoid):
        self.monoid = monoid
        self.name = f"additive-measure-{monoid.name}"

    def families(self):
        return (OperatorFamily("E", 1, self.monoid.param_kind),)

    def validate(self, value, states):
        if not isinstance(value, MeasureValue):
            raise FunctorMismatchError(f"{self.name} expects a partial measure")
        entries = value.as_dict()
        if len(entries) != len(value.entries):
            raise FunctorMismatchError("measure assigns two values to one set")
        carrier = set(states)
        for a in entries:
            if not a <= carrier:
                raise FunctorMismatchError("measure domain leaves the carrier")
        if not _disjoint_union_closed(list(entries)):
            raise FunctorMismatchError("domain not closed under disjoint unions")
        if not _additive(entries, self.monoid.add):
            raise FunctorMismatchError("measure is not additive")

    def make(self, seed: Mapping, states: Sequence,
             close: bool = True) -> MeasureValue:
        """Build a measure from (set, value) pairs, completing the domain under
        disjoint unions; rejects inconsistent assignments."""
        entries = {frozenset(a): v for a, v in seed.items()}
        if len(entries) != len(seed):
            raise ConsistencyError("seed assigns two values to one set")
        if close:
            changed = True
            while changed:
                changed = False
                for a, b in itertools.combinations(sorted(entries, key=_set_key), 2):
                    if a & b:
                        continue
                    union, v = a | b, self.monoid.add(entries[a], entries[b])
                    if union in entries:
                        if entries[union] != v:
                            raise ConsistencyError(
                                "additivity conflict while closing the domain")
                    else:
                        entries[union] = v
                        changed = True
        value = MeasureValue.of(entries)
        self.validate(value, tuple(states))
        return value

    def enumerate(self, states, caps):
        if len(states) > caps.family_carrier:
            raise BudgetError(
                f"measure-family enumeration over {len(states)} states exceeds "
                f"the cap {caps.family_carrier}")
        subs = all_subsets(states)
        values = self.monoid.elements(caps)
        for fam_mask in range(1 << len(subs)):
            family = [subs[i] for i in range(len(subs)) if fam_mask >> i & 1]
            if not _disjoint_union_closed(family):
                continue
            for combo in itertools.product(values, repeat=len(family)):
                entries = dict(zip(family, combo))
                if _additive(entries, self.monoid.add):
                    yield MeasureValue.of(entries)

    def exhaustive(self, states, caps):
        # Z/2Z measures over a small carrier form a finite space
        return self.monoid is MONOID_Z2 and len(states) <= caps.family_carrier

    def pushforward(self, fmap, value, domain, codomain):
        if len(codomain) > 12:
            raise BudgetError("measure pushforward target too large to enumerate")
        entries = value.as_dict()
        out = {}
        for b in all_subsets(codomain):
            pre = frozenset(x for x in domain if fmap[x] in b)
            if pre in entries:
                out[b] = entries[pre]
        return MeasureValue.of(out)

    def lift_along(self, proj, big, small, value):
        # preimage lift: the domain is the pullback of the small domain
        out = {}
        for a, v in value.entries:
            out[frozenset(x for x in big if proj[x] in a)] = v
        return MeasureValue.of(out)

    def lifting(self, op, args, value):
        if op.family == "E" and op.param is not None:
            return value.measure(args[0]) == op.param
        raise self._reject(op)


def _set_key(s: frozenset):
    return (len(s), sorted(map(repr, s)))


class BoundedMeasureFunctor(AddMeasureFunctor):
    """Measures whose domain is a boolean subalgebra and whose values are
    naturals; the measurability operator E is interpreted alongside E_n."""

    def __init__(self):
        super().__init__(MONOID_NAT)
        self.name = "bounded-measure"

    def families(self):
        return (OperatorFamily("E", 1),
                OperatorFamily("E", 1, PARAM_POS_NAT))

    def validate(self, value, states):
        super().validate(value, states)
        carrier = frozenset(states)
        domain = value.domain
        if frozenset() not in domain or carrier not in domain:
            raise FunctorMismatchError(
                "bounded-measure domain must contain the empty set and the carrier")
        for a in domain:
            if carrier - a not in domain:
                raise FunctorMismatchError("domain not closed under complement")
        for a, b in itertools.combinations(domain, 2):
            if a | b not in domain:
                raise FunctorMismatchError("domain not closed under union")
        for a, v in value.entries:
            if not isinstance(v, int) or v < 0:
                raise FunctorMismatchError("bounded-measure values are naturals")

    def enumerate(self, states, caps):
        if len(states) > caps.family_carrier:
            raise BudgetError(
                f"subalgebra enumeration over {len(states)} states exceeds "
                f"the cap {caps.family_carrier}")
        values = tuple(range(caps.grade + 2))
        for blocks in _set_partitions(tuple(states)):
            for combo in itertools.product(values, repeat=len(blocks)):
                entries = {}
                for picks in itertools.product((0, 1), repeat=len(blocks)):
                    member = frozenset().union(
                        *(b for b, p in zip(blocks, picks) if p)) if any(picks) \
                        else frozenset()
                    entries[member] = sum(v for v, p in zip(combo, picks) if p)
                yield MeasureValue.of(entries)

    def exhaustive(self, states, caps):
        return False

    def lifting(self, op, args, value):
        if op.family == "E" and op.param is None:
            return args[0] in value.domain
        if op.family == "E" and isinstance(op.param, int):
            return value.measure(args[0]) == op.param
        raise self._reject(op)


def _set_partitions(states: tuple) -> Iterator[tuple]:
    """Partitions of a finite ordered set, as tuples of frozenset blocks,
    in restricted-growth-string order."""
    n = len(states)
    if n == 0:
        yield ()
        return

    def rec(i, assignment, maxblock):
        if i == n:
            blocks = [[] for _ in range(maxblock + 1)]
            for j, b in enumerate(assignment):
                blocks[b].append(states[j])
            yield tuple(frozenset(b) for b in blocks)
            return
        for b in range(maxblock + 2):
            yield from rec(i + 1, assignment + [b], max(maxblock, b))

    yield from rec(1, [0], 0)


class ExactProbFunctor(AddMeasureFunctor):
    """Partial rational probability measures: total measure one, domain
    contains the carrier and is closed under relative complements (and, as a
    subfunctor of the rational additive-measure functor, disjoint unions)."""

    def __init__(self):
        super().__init__(MONOID_QNONNEG)
        self.name = "exact-probability"

    def families(self):
        return (OperatorFamily("E", 1, PARAM_UNIT_RATIONAL),)

    def validate(self, value, states):
        AddMeasureFunctor.validate(self, value, states)
        carrier = frozenset(states)
        entries = value.as_dict()
        if entries.get(carrier) != 1:
            raise FunctorMismatchError("total measure must be exactly 1")
        for a, v in entries.items():
            if not 0 <= v <= 1:
                raise FunctorMismatchError("probabilities lie in [0,1]")
        # A = B is allowed, so the empty set is always forced into the domain
        for a, b in itertools.product(entries, repeat=2):
            if b <= a and a - b not in entries:
                raise FunctorMismatchError(
                    "domain not closed under relative complements")

    def make(self, seed: Mapping, states: Sequence, close: bool = True) -> MeasureValue:
        entries = {frozenset(a): Fraction(v) for a, v in seed.items()}
        carrier = frozenset(states)
        entries.setdefault(carrier, Fraction(1))
        if close:
            changed = True
            while changed:
                changed = False
                pairs = list(itertools.product(sorted(entries, key=_set_key), repeat=2))
                for a, b in pairs:
                    if b <= a:
                        diff, v = a - b, entries[a] - entries[b]
                        if diff in entries:
                            if entries[diff] != v:
                                raise ConsistencyError("subtractivity conflict")
                        else:
                            entries[diff] = v
                            changed = True
                    if not a & b:
                        union, v = a | b, entries[a] + entries[b]
                        if union in entries:
                            if entries[union] != v:
                                raise ConsistencyError("additivity conflict")
                        else:
                            entries[union] = v
                            changed = True
        if any(not 0 <= v <= 1 for v in entries.values()):
            raise ConsistencyError("closure produced a value outside [0,1]")
        value = MeasureValue.of(entries)
        self.validate(value, tuple(states))
        return value

    def enumerate(self, states, caps):
        if len(states) > caps.family_carrier:
            raise BudgetError(
                f"measure-family enumeration over {len(states)} states exceeds "
                f"the cap {caps.family_carrier}")
        subs = all_subsets(states)
        carrier = frozenset(states)
        for fam_mask in range(1 << len(subs)):
            family = [subs[i] for i in range(len(subs)) if fam_mask >> i & 1]
            fam = set(family)
            if carrier not in fam:
                continue
            if not _disjoint_union_closed(family):
                continue
            if any(b <= a and a - b not in fam
                   for a, b in itertools.product(family, repeat=2)):
                continue
            seen = set()
            rest = [a for a in family if a != carrier]
            for q in range(1, caps.denominator + 1):
                for combo in itertools.product(range(q + 1), repeat=len(rest)):
                    entries = {carrier: Fraction(1)}
                    entries.update(
                        {a: Fraction(k, q) for a, k in zip(rest, combo)})
                    key = tuple(entries[a] for a in family)
                    if key in seen:
                        continue
                    if _additive(entries, self.monoid.add):
                        seen.add(key)
                        yield MeasureValue.of(entries)

    def exhaustive(self, states, caps):
        return False

    def lifting(self, op, args, value):
        if op.family == "E" and op.param is not None:
            return value.measure(args[0]) == op.param
        raise self._reject(op)


# canonical functor instances

POWERSET = PowersetFunctor()
FIN_POWERSET = PowersetFunctor(fin_branching=True)
INF_MULTISET = MultisetFunctor(allow_inf=True)
FIN_MULTISET = MultisetFunctor(allow_inf=False)
SELECTION = SelectionFunctor()
SELECTION_ID = SelectionFunctor(("ID",))
SELECTION_ID_DIS = SelectionFunctor(("ID", "DIS"))
SELECTION_ID_DIS_CM = SelectionFunctor(("ID", "DIS", "CM"))
DISTRIBUTION = DistributionFunctor()
ADD_MEASURE_NAT = AddMeasureFunctor(MONOID_NAT)
ADD_MEASURE_Z2 = AddMeasureFunctor(MONOID_Z2)
BOUNDED_MEASURE = BoundedMeasureFunctor()
EXACT_PROB = ExactProbFunctor()

FUNCTORS = {
    f.name: f for f in (
        POWERSET, FIN_POWERSET, INF_MULTISET, FIN_MULTISET,
        SELECTION, SELECTION_ID, SELECTION_ID_DIS, SELECTION_ID_DIS_CM,
        DISTRIBUTION, ADD_MEASURE_NAT, ADD_MEASURE_Z2, BOUNDED_MEASURE,
        EXACT_PROB,
    )
}


def enumerate_tvalues(functor: FunctorKind, states: Sequence,
                      caps: Caps = DEFAULT_CAPS) -> Iterator:
    """Deterministic stream of functor values over the carrier, exhaustive
    within caps (absolutely exhaustive for finite value spaces)."""
    return functor.enumerate(tuple(states), caps)


def lifting_contains(op: OperatorSymbol, args: Sequence, value,
                     functor: Optional[FunctorKind] = None) -> bool:
    """Membership of a value in the lifting of `op` at the given arguments."""
    if functor is None:
        functor = _infer_functor(value)
    return functor.lifting(op, tuple(frozenset(a) for a in args), value)


def _infer_functor(value) -> FunctorKind:
    if isinstance(value, SubsetValue):
        return POWERSET
    if isinstance(value, MultisetValue):
        return INF_MULTISET
    if isinstance(value, (SelectionValue, MappedSelectionValue)):
        return SELECTION
    if isinstance(value, DistributionValue):
        return DISTRIBUTION
    if isinstance(value, MeasureValue):
        raise FunctorMismatchError(
            "measure values need an explicit functor (monoid is ambiguous)")
    raise FunctorMismatchError(f"not a functor value: {value!r}")


# ---------------------------------------------------------------------------
# coalgebras, models, model checking


@dataclass(eq=False)
class Coalgebra:
    """A finite coalgebra: ordered carrier plus a total transition map."""

    states: tuple
    functor: FunctorKind
    transition: dict

    def __post_init__(self):
        self.states = tuple(self.states)
        if len(set(self.states)) != len(self.states):
            raise FormulaError("carrier contains duplicate state ids")
        missing = [s for s in self.states if s not in self.transition]
        if missing:
            raise FormulaError(f"transition undefined at {missing[:3]}")
        for s in self.states:
            self.functor.validate(self.transition[s], self.states)


@dataclass(eq=False)
class Model:
    coalgebra: Coalgebra
    valuation: dict  # prop index -> frozenset of states

    @property
    def states(self):
        return self.coalgebra.states

    @property
    def functor(self):
        return self.coalgebra.functor

    @property
    def transition(self):
        return self.coalgebra.transition


def extension(model: Model, f: Formula, memo: Optional[dict] = None) -> frozenset:
    """The set of states satisfying `f`, by structural recursion."""
    if memo is None:
        memo = {}
    got = memo.get(f)
    if got is not None:
        return got
    if isinstance(f, Atom):
        try:
            out = frozenset(model.valuation[f.index])
        except KeyError:
            raise FormulaError(f"no valuation for proposition p{f.index}")
    elif isinstance(f, Bottom):
        out = frozenset()
    elif isinstance(f, Not):
        out = frozenset(model.states) - extension(model, f.arg, memo)
    elif isinstance(f, And):
        out = extension(model, f.left, memo) & extension(model, f.right, memo)
    elif isinstance(f, Modal):
        args = tuple(extension(model, a, memo) for a in f.args)
        out = frozenset(
            c for c in model.states
            if model.functor.lifting(f.op, args, model.transition[c]))
    else:
        raise TypeError(f"not a formula: {f!r}")
    memo[f] = out
    return out


def model_check(model: Model, state, f: Formula) -> bool:
    if state not in set(model.states):
        raise FormulaError(f"state {state!r} not in the carrier")
    return state in extension(model, f)


def frame_check(coalgebra: Coalgebra, conditions: Sequence[Formula],
                caps: Caps = DEFAULT_CAPS) -> bool:
    """True iff every valuation of the conditions' variables into subsets of
    the carrier satisfies every condition at every state.  By the substitution
    property of the semantics this covers all substitution instances."""
    subs = all_subsets(coalgebra.states)
    for theta in conditions:
        variables = sorted(prop_indices(theta))
        if len(variables) > 3:
            raise BudgetError("frame conditions are limited to 3 variables")
        count = len(subs) ** len(variables)
        if count > caps.frame_assignments:
            raise BudgetError(
                f"{count} valuations exceed the frame budget "
                f"{caps.frame_assignments}")
        for combo in itertools.product(subs, repeat=len(variables)):
            model = Model(coalgebra, dict(zip(variables, combo)))
            if len(extension(model, theta)) != len(coalgebra.states):
                return False
    return True


# structural frame predicates used in canonical-model reports

def kripke_reflexive(c: Coalgebra) -> bool:
    return all(s in c.transition[s].members for s in c.states)


def kripke_transitive(c: Coalgebra) -> bool:
    for s in c.states:
        succ = c.transition[s].members
        for t in succ:
            if not c.transition[t].members <= succ:
                return False
    return True


def kripke_symmetric(c: Coalgebra) -> bool:
    return all(all(s in c.transition[t].members for t in c.transition[s].members)
               for s in c.states)


def multigraph_reflexive(c: Coalgebra) -> bool:
    return all(c.transition[s].count(s) >= 1 for s in c.states)


def multigraph_symmetric(c: Coalgebra) -> bool:
    for s in c.states:
        for t in c.transition[s].support():
            if not c.transition[t].count(s) >= 1:
                return False
    return True


def multigraph_transitive(c: Coalgebra) -> bool:
    # whenever x has an edge to y, x's multiplicities dominate y's
    for x in c.states:
        for y in c.transition[x].support():
            for z in c.states:
                if not c.transition[x].count(z) >= c.transition[y].count(z):
                    return False
    return True


# ---------------------------------------------------------------------------
# subfunctors cut out by rank-1 axioms


def subfunctor_member(axioms, value, states: Sequence,
                      functor: FunctorKind, caps: Caps = DEFAULT_CAPS) -> bool:
    """Membership in the subfunctor defined by a rank-1 axiom set: the value
    must satisfy every substitution instance of every axiom."""
    from .logic import scheme_instances  # deferred: logic depends on this module

    for scheme in axioms:
        for inst in scheme_instances(scheme, tuple(states), caps):
            if not eval_onestep(inst, value, functor):
                return False
    return True


_SEMANTIC_CHARS = ("ID", "ID_DIS", "ID_DIS_CM")


def subfunctor_semantic_member(char: str, f, states: Sequence) -> bool:
    """The explicit set-theoretic characterisations of the conditional
    subfunctors, evaluated directly on a selection table."""
    if char not in _SEMANTIC_CHARS:
        raise FormulaError(f"unknown characterisation {char!r}")
    subs = all_subsets(tuple(states))
    if not all(f.select(a) <= a for a in subs):
        return False
    if char == "ID":
        return True
    if char == "ID_DIS":
        return all(f.select(a | b) <= f.select(a) | f.select(b)
                   for a, b in itertools.product(subs, repeat=2))
    return all(not f.select(b) <= a or f.select(a) & b <= f.select(b)
               for a, b in itertools.product(subs, repeat=2))


def eval_onestep(phi, value, functor: FunctorKind) -> bool:
    """Evaluate a one-step formula at a functor value (liftings at atoms)."""
    return prop_eval(phi, lambda atom: functor.lifting(atom.op, atom.args, value))


# ---------------------------------------------------------------------------
# naturality checking


@dataclass
class NaturalityReport:
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def surjections(domain: Sequence, codomain: Sequence) -> Iterator[dict]:
    """All surjective maps domain -> codomain, deterministic order."""
    domain, codomain = tuple(domain), tuple(codomain)
    for images in itertools.product(codomain, repeat=len(domain)):
        if set(images) == set(codomain):
            yield dict(zip(domain, images))


def check_naturality(functor: FunctorKind, symbols: Sequence[OperatorSymbol],
                     domain: Sequence, codomain: Sequence,
                     caps: Caps = DEFAULT_CAPS,
                     values: Optional[Iterable] = None) -> NaturalityReport:
    """Spot-check the naturality square for each lifting: membership of t in
    the lifting at preimage arguments must match membership of Tf(t) at the
    original arguments, for every surjection f and argument tuple."""
    report = NaturalityReport()
    domain, codomain = tuple(domain), tuple(codomain)
    arg_space = all_subsets(codomain)
    value_list = list(values) if values is not None \
        else list(functor.enumerate(domain, caps))
    for fmap in surjections(domain, codomain):
        for t in value_list:
            ft = functor.pushforward(fmap, t, domain, codomain)
            for op in symbols:
                for args in itertools.product(arg_space, repeat=op.arity):
                    pre = tuple(frozenset(x for x in domain if fmap[x] in a)
                                for a in args)
                    lhs = functor.lifting(op, pre, t)
                    rhs = functor.lifting(op, args, ft)
                    report.checked += 1
                    if lhs != rhs:
                        report.violations.append((fmap, t, op, args))
    return report

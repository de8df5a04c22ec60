"""Logic definitions and the decidable one-step proof layer.

A logic is a similarity type, a set of rank-1 axiom schemes (finitely many
fixed schemes plus parameter-indexed families cut off at a cap), a list of
frame conditions, and the signature functor giving its coalgebraic semantics.
One-step derivability over a finite carrier reduces to propositional
entailment from the axioms' substitution instances, with scheme variables
ranging over subsets of the carrier.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .errors import (
    BudgetError,
    ConsistencyError,
    FormulaError,
    UnknownLogicError,
)
from .formula import (
    And,
    Atom,
    BOT,
    Bottom,
    Formula,
    Modal,
    Not,
    OperatorFamily,
    OperatorSymbol,
    PARAM_NAT,
    PARAM_POS_NAT,
    PARAM_UNIT_RATIONAL,
    PBOT,
    PropAnd,
    PropAtom,
    PropBottom,
    PropFormula,
    PropNot,
    SimilarityType,
    TOP,
    and_all,
    implies,
    modal_depth,
    or_all,
    parse,
    prop_entails,
    prop_indices,
    prop_satisfiable,
)
from .semantics import (
    ADD_MEASURE_NAT,
    ADD_MEASURE_Z2,
    BOUNDED_MEASURE,
    Caps,
    DEFAULT_CAPS,
    DISTRIBUTION,
    EXACT_PROB,
    FunctorKind,
    FUNCTORS,
    INF_MULTISET,
    MONOIDS,
    Monoid,
    POWERSET,
    SELECTION,
    SELECTION_ID,
    SELECTION_ID_DIS,
    SELECTION_ID_DIS_CM,
    all_subsets,
)


# ---------------------------------------------------------------------------
# rank-1 validation


def is_rank1(f: Formula) -> bool:
    """Every atom occurs under exactly one layer of modal operators: the top
    level is a boolean combination of modal atoms (and falsum), and every
    modal argument is purely propositional."""

    def top(g: Formula) -> bool:
        if isinstance(g, Atom):
            return False
        if isinstance(g, Bottom):
            return True
        if isinstance(g, Not):
            return top(g.arg)
        if isinstance(g, And):
            return top(g.left) and top(g.right)
        if isinstance(g, Modal):
            return all(modal_depth(a) == 0 for a in g.args)
        raise TypeError(f"not a formula: {g!r}")

    return top(f)


@dataclass(frozen=True)
class AxiomScheme:
    """A rank-1 axiom scheme; its atoms are scheme variables."""

    name: str
    formula: Formula

    def __post_init__(self):
        if not is_rank1(self.formula):
            raise FormulaError(f"axiom scheme {self.name!r} is not rank 1")


@dataclass(frozen=True, eq=False)
class Logic:
    """A modal logic: similarity type, rank-1 axioms, frame conditions, and
    the signature functor interpreting it."""

    name: str
    sig: SimilarityType
    functor: FunctorKind
    axioms: tuple[AxiomScheme, ...] = ()
    axiom_families: tuple[Callable[[Caps], tuple[AxiomScheme, ...]], ...] = ()
    frame_conditions: tuple[Formula, ...] = ()
    separating: bool = True

    def __post_init__(self):
        for scheme in self.axioms:
            self._check_operators(scheme.formula)
        for theta in self.frame_conditions:
            self._check_operators(theta)

    def _check_operators(self, f: Formula):
        if isinstance(f, Modal):
            if not self.sig.contains_symbol(f.op):
                raise FormulaError(
                    f"logic {self.name}: operator {f.op.text()} not in signature")
            for a in f.args:
                self._check_operators(a)
        elif isinstance(f, Not):
            self._check_operators(f.arg)
        elif isinstance(f, And):
            self._check_operators(f.left)
            self._check_operators(f.right)

    @property
    def rank1(self) -> bool:
        return not self.frame_conditions

    def axiom_schemes(self, caps: Caps = DEFAULT_CAPS) -> tuple[AxiomScheme, ...]:
        """Fixed schemes plus all family members below the caps."""
        out = list(self.axioms)
        for fam in self.axiom_families:
            out.extend(fam(caps))
        return tuple(out)

    def parse(self, text: str) -> Formula:
        return parse(text, self.sig)

    def __repr__(self):
        return f"<logic {self.name}>"


# ---------------------------------------------------------------------------
# one-step formulas: boolean combinations of modal atoms over carrier subsets


@dataclass(frozen=True, slots=True)
class OneStepAtom:
    """A single modal operator applied to subsets of a fixed finite carrier."""

    op: OperatorSymbol
    args: tuple[frozenset, ...]

    def negate(self) -> PropFormula:
        return PropNot(PropAtom(self))


OneStepFormula = PropFormula  # atoms are OneStepAtoms


def atom_sort_key(atom: OneStepAtom, sig: SimilarityType, states: Sequence):
    """Deterministic atom order: operator family, then parameter, then argument
    subsets in binary-counter order."""
    index = {s: i for i, s in enumerate(states)}
    masks = tuple(sum(1 << index[x] for x in a) for a in atom.args)
    return sig.symbol_key(atom.op) + masks


def render_onestep(phi: OneStepFormula, states: Sequence) -> str:
    order = {s: i for i, s in enumerate(states)}

    def subset(a: frozenset) -> str:
        return "{" + ",".join(str(s) for s in sorted(a, key=order.get)) + "}"

    def atom(a: OneStepAtom) -> str:
        return f"{a.op.text()}({', '.join(subset(s) for s in a.args)})"

    def rec(g) -> str:
        if isinstance(g, PropAtom):
            return atom(g.atom)
        if isinstance(g, PropBottom):
            return "false"
        if isinstance(g, PropNot):
            if isinstance(g.arg, PropBottom):
                return "true"
            return f"!{rec(g.arg)}" if isinstance(g.arg, (PropAtom, PropNot)) \
                else f"!({rec(g.arg)})"
        if isinstance(g, PropAnd):
            return f"({rec(g.left)} & {rec(g.right)})"
        raise TypeError(f"not a one-step formula: {g!r}")

    return rec(phi)


def eval_prop_subset(f: Formula, tau: Mapping[int, frozenset],
                     carrier: frozenset) -> frozenset:
    """Evaluate a purely propositional formula in the boolean algebra P(X)."""
    if isinstance(f, Atom):
        try:
            return tau[f.index]
        except KeyError:
            raise FormulaError(f"scheme variable p{f.index} not assigned")
    if isinstance(f, Bottom):
        return frozenset()
    if isinstance(f, Not):
        return carrier - eval_prop_subset(f.arg, tau, carrier)
    if isinstance(f, And):
        return (eval_prop_subset(f.left, tau, carrier)
                & eval_prop_subset(f.right, tau, carrier))
    raise FormulaError("modal operator inside a propositional argument")


def onestep_instance(f: Formula, tau: Mapping[int, frozenset],
                     carrier: frozenset) -> OneStepFormula:
    """Substitute subsets for scheme variables: the boolean structure above
    modal atoms survives, modal arguments collapse to subsets."""
    if isinstance(f, Bottom):
        return PBOT
    if isinstance(f, Not):
        return PropNot(onestep_instance(f.arg, tau, carrier))
    if isinstance(f, And):
        return PropAnd(onestep_instance(f.left, tau, carrier),
                       onestep_instance(f.right, tau, carrier))
    if isinstance(f, Modal):
        args = tuple(eval_prop_subset(a, tau, carrier) for a in f.args)
        return PropAtom(OneStepAtom(f.op, args))
    if isinstance(f, Atom):
        raise FormulaError("bare scheme variable at modal depth 0 (not rank 1)")
    raise TypeError(f"not a formula: {f!r}")


def scheme_instances(scheme: AxiomScheme, states: Sequence,
                     caps: Caps = DEFAULT_CAPS) -> Iterable[OneStepFormula]:
    """All substitution instances of one scheme over a carrier, the variables
    ranging over all subsets."""
    carrier = frozenset(states)
    variables = sorted(prop_indices(scheme.formula))
    subsets = all_subsets(tuple(states))
    count = len(subsets) ** len(variables)
    if count > caps.instances:
        raise BudgetError(
            f"scheme {scheme.name!r} has {count} instances over {len(states)} "
            f"states, exceeding the budget {caps.instances}")
    for combo in itertools.product(subsets, repeat=len(variables)):
        yield onestep_instance(scheme.formula, dict(zip(variables, combo)), carrier)


def instantiate_axioms(logic: Logic, states: Sequence,
                       caps: Caps = DEFAULT_CAPS) -> tuple[OneStepFormula, ...]:
    """All axiom instances of the logic over the carrier, deduplicated, in a
    deterministic order; parameter-indexed families are cut at the caps."""
    out, seen = [], set()
    for scheme in logic.axiom_schemes(caps):
        for inst in scheme_instances(scheme, states, caps):
            if inst not in seen:
                seen.add(inst)
                out.append(inst)
    return tuple(out)


def _caps_for_query(formulas: Iterable[OneStepFormula],
                    caps: Caps) -> Caps:
    """Raise the parameter caps to cover every parameter occurring in the
    query (the axioms' own closure demands are handled per family)."""
    from .formula import prop_atoms

    grade, denom = caps.grade, caps.denominator
    for f in formulas:
        for atom in prop_atoms(f):
            p = atom.op.param
            if isinstance(p, int):
                grade = max(grade, p)
            elif isinstance(p, Fraction):
                denom = max(denom, p.denominator)
    return caps.with_(grade=grade, denominator=denom)


def one_step_derivable(logic: Logic, states: Sequence, phi: OneStepFormula,
                       caps: Caps = DEFAULT_CAPS) -> bool:
    """Propositional entailment of `phi` from the axiom instances over X."""
    effective = _caps_for_query([phi], caps)
    instances = instantiate_axioms(logic, states, effective)
    return prop_entails(list(instances), phi)


def one_step_consistent(logic: Logic, states: Sequence,
                        phis: Iterable[OneStepFormula],
                        caps: Caps = DEFAULT_CAPS) -> bool:
    """No finite conjunction from the set is one-step refutable; for a finite
    set this is a single satisfiability check against the axiom instances."""
    phis = list(phis)
    effective = _caps_for_query(phis, caps)
    instances = instantiate_axioms(logic, states, effective)
    return prop_satisfiable(list(instances) + phis)


# ---------------------------------------------------------------------------
# the registry


def _v(i: int) -> Formula:
    return Atom(i)


def _family(make: Callable[[Caps], Iterable[AxiomScheme]]):
    return lambda caps: tuple(make(caps))


def _build_k_family() -> dict[str, Logic]:
    box = OperatorFamily("box", 1)
    sig = SimilarityType((box,))
    b = lambda f: Modal(box.symbol(), (f,))
    p, q = _v(0), _v(1)
    axioms = (
        AxiomScheme("box-top", b(TOP)),
        AxiomScheme("box-k", implies(b(implies(p, q)), implies(b(p), b(q)))),
    )
    dia = lambda f: Not(b(Not(f)))
    out = {}
    for name, theta in (
        ("K", ()),
        ("K4", (implies(b(p), b(b(p))),)),
        ("S4", (implies(b(p), p), implies(b(p), b(b(p))))),
        ("KB", (implies(p, b(dia(p))),)),
    ):
        out[name] = Logic(name, sig, POWERSET, axioms, (), tuple(theta))
    return out


def _build_conditional_family() -> dict[str, Logic]:
    cond = OperatorFamily("cond", 2)
    sig = SimilarityType((cond,))
    c = lambda a, b: Modal(cond.symbol(), (a, b))
    r, p, q = _v(0), _v(1), _v(2)
    a, bb, cc = _v(0), _v(1), _v(2)
    base = (
        AxiomScheme("cond-top", c(r, TOP)),
        AxiomScheme("cond-k",
                    implies(c(r, implies(p, q)), implies(c(r, p), c(r, q)))),
    )
    ID = AxiomScheme("ID", c(a, a))
    DIS = AxiomScheme("DIS", implies(And(c(a, cc), c(bb, cc)),
                                     c(Not(And(Not(a), Not(bb))), cc)))
    CM = AxiomScheme("CM", implies(And(c(a, cc), c(a, bb)), c(And(a, bb), cc)))
    return {
        "CK": Logic("CK", sig, SELECTION, base),
        "CK+ID": Logic("CK+ID", sig, SELECTION_ID, base + (ID,)),
        "CK+ID+DIS": Logic("CK+ID+DIS", sig, SELECTION_ID_DIS, base + (ID, DIS)),
        "SystemC": Logic("SystemC", sig, SELECTION_ID_DIS_CM, base + (ID, DIS, CM)),
    }


def _build_gml_family() -> dict[str, Logic]:
    geq = OperatorFamily("geq", 1, PARAM_NAT)
    sig = SimilarityType((geq,))
    g = lambda k, f: Modal(geq.symbol(k), (f,))
    box = lambda f: Not(g(1, Not(f)))
    p, q = _v(0), _v(1)

    # The grade-0 operator is valid outright and box-top closes the proof
    # system under the empty argument; both are needed for the closed-form
    # witness over finite carriers to be well defined.
    fixed = (
        AxiomScheme("geq-zero", g(0, p)),
        AxiomScheme("box-top", Not(g(1, BOT))),
        AxiomScheme("geq-k", implies(box(implies(p, q)),
                                     implies(g(1, p), g(1, q)))),
    )

    def monotone(caps: Caps):
        for k in range(1, caps.grade + 1):
            for l in range(k):
                yield AxiomScheme(f"geq-mono-{k}-{l}", implies(g(k, p), g(l, p)))

    def split(caps: Caps):
        for k in range(caps.grade + 1):
            cases = or_all([And(g(i, And(p, q)), g(k - i, And(p, Not(q))))
                            for i in range(k + 1)])
            yield AxiomScheme(f"geq-split-{k}",
                              And(implies(g(k, p), cases), implies(cases, g(k, p))))

    def arg_monotone(caps: Caps):
        for k in range(caps.grade + 1):
            yield AxiomScheme(f"geq-argmono-{k}",
                              implies(box(implies(p, q)), implies(g(k, p), g(k, q))))

    families = (_family(monotone), _family(split), _family(arg_monotone))

    refl = implies(p, g(1, p))
    symm = implies(p, box(g(1, p)))
    trans = tuple(implies(g(1, g(n, p)), g(n, p)) for n in (1, 2))
    out = {}
    for name, theta in (
        ("GML", ()),
        ("GML+refl", (refl,)),
        ("GML+symm", (symm,)),
        ("GML+trans", trans),
    ):
        out[name] = Logic(name, sig, INF_MULTISET, fixed, families, tuple(theta))
    return out


def _build_pml() -> Logic:
    L = OperatorFamily("L", 1, PARAM_UNIT_RATIONAL)
    sig = SimilarityType((L,))
    lp = lambda p, f: Modal(L.symbol(Fraction(p)), (f,))
    a = _v(0)
    fixed = (
        AxiomScheme("L-zero", lp(0, a)),
        AxiomScheme("L-one-top", lp(1, TOP)),
    )

    def grid(caps: Caps):
        return sorted({Fraction(n, d)
                       for d in range(1, caps.denominator + 1)
                       for n in range(d + 1)})

    def monotone(caps: Caps):
        values = grid(caps)
        for hi, lo in itertools.combinations(reversed(values), 2):
            yield AxiomScheme(f"L-mono-{hi}-{lo}", implies(lp(hi, a), lp(lo, a)))

    def no_bottom(caps: Caps):
        for p in grid(caps):
            if p > 0:
                yield AxiomScheme(f"L-bot-{p}", Not(lp(p, BOT)))

    return Logic("PML", sig, DISTRIBUTION, fixed,
                 (_family(monotone), _family(no_bottom)))


def make_additive_measure_logic(monoid: Monoid, name: Optional[str] = None,
                                functor: Optional[FunctorKind] = None) -> Logic:
    """The logic of additive measures over an arbitrary built-in monoid."""
    E = OperatorFamily("E", 1, monoid.param_kind)
    sig = SimilarityType((E,))
    e = lambda m, f: Modal(E.symbol(m), (f,))
    a, b = _v(0), _v(1)

    def params(caps: Caps):
        # parameters run to the cap; sums from the additivity axiom may
        # exceed it, which the uniqueness family must still cover
        return list(monoid.param_kind.values(caps.grade))

    def uniqueness(caps: Caps):
        base = params(caps)
        closed = sorted(set(base) | {monoid.add(m, n)
                                     for m in base for n in base},
                        key=monoid.param_kind.key)
        for m, n in itertools.permutations(closed, 2):
            yield AxiomScheme(f"E-unique-{m}-{n}", implies(e(m, a), Not(e(n, a))))

    def additivity(caps: Caps):
        for m, n in itertools.product(params(caps), repeat=2):
            yield AxiomScheme(
                f"E-add-{m}-{n}",
                implies(And(e(m, And(a, b)), e(n, And(a, Not(b)))),
                        e(monoid.add(m, n), a)))

    if functor is None:
        functor = ADD_MEASURE_NAT if monoid is MONOIDS["nat"] else \
            ADD_MEASURE_Z2 if monoid is MONOIDS["z2"] else None
    if functor is None:
        from .semantics import AddMeasureFunctor
        functor = AddMeasureFunctor(monoid)
    return Logic(name or f"AddMeasure({monoid.name})", sig, functor, (),
                 (_family(uniqueness), _family(additivity)))


def _build_gml_minus() -> Logic:
    E0 = OperatorFamily("E", 1)
    En = OperatorFamily("E", 1, PARAM_POS_NAT)
    sig = SimilarityType((E0, En))
    e = lambda f: Modal(E0.symbol(), (f,))
    en = lambda n, f: Modal(En.symbol(n), (f,))
    a, b = _v(0), _v(1)
    fixed = (
        AxiomScheme("E-top", e(TOP)),
        AxiomScheme("E-compl", implies(e(a), e(Not(a)))),
        AxiomScheme("E-inter", implies(And(e(a), e(b)), e(And(a, b)))),
    )

    def measured(caps: Caps):
        for n in range(1, 2 * caps.grade + 2):
            yield AxiomScheme(f"E-measured-{n}", implies(en(n, a), e(a)))

    def uniqueness(caps: Caps):
        for m, n in itertools.permutations(range(1, 2 * caps.grade + 2), 2):
            yield AxiomScheme(f"E-unique-{m}-{n}", implies(en(m, a), Not(en(n, a))))

    def additivity(caps: Caps):
        for m, n in itertools.product(range(1, caps.grade + 1), repeat=2):
            yield AxiomScheme(
                f"E-add-{m}-{n}",
                implies(And(en(m, And(a, b)), en(n, And(a, Not(b)))),
                        en(m + n, a)))

    def compensation(caps: Caps):
        # splits E_n a over a measurable b without mentioning measure zero
        for n in range(1, caps.grade + 1):
            cases = [en(n, And(a, b)), en(n, And(a, Not(b)))]
            cases += [And(en(k, And(a, b)), en(n - k, And(a, Not(b))))
                      for k in range(1, n)]
            yield AxiomScheme(f"E-comp-{n}",
                              implies(And(en(n, a), e(b)), or_all(cases)))

    return Logic("GMLminus", sig, BOUNDED_MEASURE, fixed,
                 (_family(measured), _family(uniqueness),
                  _family(additivity), _family(compensation)))


def _build_exact_prob() -> Logic:
    E = OperatorFamily("E", 1, PARAM_UNIT_RATIONAL)
    sig = SimilarityType((E,))
    e = lambda p, f: Modal(E.symbol(Fraction(p)), (f,))
    a, b = _v(0), _v(1)
    fixed = (AxiomScheme("E-one-top", e(1, TOP)),)

    def grid(caps: Caps):
        return sorted({Fraction(n, d)
                       for d in range(1, caps.denominator + 1)
                       for n in range(d + 1)})

    def uniqueness(caps: Caps):
        values = grid(caps)
        closed = sorted({*values,
                         *(p + q for p in values for q in values if p + q <= 1),
                         *(p - q for p in values for q in values if p >= q)})
        for p, q in itertools.permutations(closed, 2):
            yield AxiomScheme(f"E-unique-{p}-{q}", implies(e(p, a), Not(e(q, a))))

    def additivity(caps: Caps):
        values = grid(caps)
        for p, q in itertools.product(values, repeat=2):
            if p + q <= 1:
                yield AxiomScheme(
                    f"E-add-{p}-{q}",
                    implies(And(e(p, And(a, b)), e(q, And(a, Not(b)))),
                            e(p + q, a)))

    def subtraction(caps: Caps):
        values = grid(caps)
        for p, q in itertools.product(values, repeat=2):
            if q <= p:
                yield AxiomScheme(
                    f"E-sub-{p}-{q}",
                    implies(And(e(p, a), e(q, And(a, b))),
                            e(p - q, And(a, Not(b)))))

    return Logic("ExactProb", sig, EXACT_PROB, fixed,
                 (_family(uniqueness), _family(additivity), _family(subtraction)))


def _build_registry() -> dict[str, Logic]:
    registry: dict[str, Logic] = {}
    registry.update(_build_k_family())
    registry.update(_build_conditional_family())
    registry.update(_build_gml_family())
    registry["PML"] = _build_pml()
    registry["AddMeasure(nat)"] = make_additive_measure_logic(MONOIDS["nat"])
    registry["AddMeasure(z2)"] = make_additive_measure_logic(MONOIDS["z2"])
    registry["GMLminus"] = _build_gml_minus()
    registry["ExactProb"] = _build_exact_prob()
    return registry


_REGISTRY = _build_registry()

_ALIASES = {
    "addmeasure(n)": "AddMeasure(nat)",
    "addmeasure(z/2z)": "AddMeasure(z2)",
    "gml-": "GMLminus",
    "ck+id+dis+cm": "SystemC",
    "systemc": "SystemC",
}


def registered_logics() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def get_logic(name: str) -> Logic:
    """Look up a registered logic by name (case-insensitive, with aliases)."""
    if name in _REGISTRY:
        return _REGISTRY[name]
    lowered = name.lower()
    for key in _REGISTRY:
        if key.lower() == lowered:
            return _REGISTRY[key]
    if lowered in _ALIASES:
        return _REGISTRY[_ALIASES[lowered]]
    raise UnknownLogicError(
        f"unknown logic {name!r}; registered: {', '.join(registered_logics())}")


# ---------------------------------------------------------------------------
# custom logics from structured files


_FAMILY_KINDS = {
    "none": None,
    "natural": PARAM_NAT,
    "unit-rational": PARAM_UNIT_RATIONAL,
}


def load_logic(source) -> Logic:
    """Load a custom logic from a JSON document: operator families, axiom
    schemes as formula strings over scheme variables v0, v1, ..., and frame
    conditions.  The functor is referenced by name."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = dict(source)
    allowed = {"name", "functor", "operators", "axioms", "frame_conditions"}
    unknown = set(doc) - allowed
    if unknown:
        raise FormulaError(f"unknown fields in logic file: {sorted(unknown)}")
    try:
        functor = FUNCTORS[doc["functor"]]
    except KeyError:
        raise FormulaError(f"unknown functor {doc.get('functor')!r}")
    families = []
    for spec in doc.get("operators", []):
        kind_name = spec.get("params", "none")
        if kind_name not in _FAMILY_KINDS:
            raise FormulaError(f"unknown parameter domain {kind_name!r}")
        kind = _FAMILY_KINDS[kind_name]
        if kind is None:
            families.append(OperatorFamily(spec["family"], int(spec["arity"])))
        else:
            families.append(OperatorFamily(spec["family"], int(spec["arity"]), kind))
    sig = SimilarityType(tuple(families))
    axioms = tuple(
        AxiomScheme(f"ax{i}", parse(text, sig))
        for i, text in enumerate(doc.get("axioms", [])))
    theta = tuple(parse(text, sig) for text in doc.get("frame_conditions", []))
    return Logic(doc.get("name", "custom"), sig, functor, axioms, (), theta)

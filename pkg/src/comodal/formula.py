"""Formula syntax: operator symbols, similarity types, ASTs, parsing, printing.

The core grammar is deliberately small (indexed atoms, falsum, negation,
conjunction, modal application); every other connective is parse-time sugar
that normalises into it, so structural induction stays short.  A second,
structurally identical boolean layer (:class:`PropFormula`) is generic in its
atoms; it backs propositional entailment where the "atoms" may be subsets of a
carrier or modal atoms rather than indexed propositional variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .errors import (
    AtomUniverseError,
    BudgetError,
    FormulaError,
    ParseError,
)

# ---------------------------------------------------------------------------
# parameter domains for operator families


class ParamKind:
    """Domain of the optional scalar parameter of an operator family.

    Concrete kinds convert surface syntax (``geq[2]``, ``L[1/2]``) into the
    parameter value and enumerate parameters below a cap in a fixed order.
    """

    label = "none"

    def contains(self, param) -> bool:
        return param is None

    def convert(self, num: int, den: Optional[int], position: int):
        raise ParseError("operator family takes no parameter", position)

    def values(self, cap: int) -> tuple:
        return (None,)

    def format(self, param) -> str:
        return "" if param is None else str(param)

    def key(self, param):
        return 0

    def __repr__(self):
        return f"<param:{self.label}>"


class _NatParam(ParamKind):
    label = "natural"
    minimum = 0

    def contains(self, param):
        return isinstance(param, int) and not isinstance(param, bool) and param >= self.minimum

    def convert(self, num, den, position):
        if den is not None:
            raise ParseError("parameter must be a natural number", position)
        if num < self.minimum:
            raise ParseError(f"parameter must be >= {self.minimum}", position)
        return num

    def values(self, cap):
        return tuple(range(self.minimum, cap + 1))

    def key(self, param):
        return param


class _PosNatParam(_NatParam):
    label = "positive natural"
    minimum = 1


class _UnitRationalParam(ParamKind):
    label = "rational in [0,1]"

    def contains(self, param):
        return isinstance(param, (int, Fraction)) and 0 <= param <= 1

    def convert(self, num, den, position):
        value = Fraction(num, den) if den else Fraction(num)
        if not 0 <= value <= 1:
            raise ParseError("parameter must lie in [0,1]", position)
        return value

    def values(self, cap):
        grid = {Fraction(a, b) for b in range(1, cap + 1) for a in range(b + 1)}
        return tuple(sorted(grid))

    def format(self, param):
        return str(Fraction(param))

    def key(self, param):
        return Fraction(param)


class _NonnegRationalParam(ParamKind):
    label = "nonnegative rational"

    def contains(self, param):
        return isinstance(param, (int, Fraction)) and param >= 0

    def convert(self, num, den, position):
        value = Fraction(num, den) if den else Fraction(num)
        if value < 0:
            raise ParseError("parameter must be nonnegative", position)
        return value

    def values(self, cap):
        grid = {Fraction(a, b) for b in range(1, cap + 1) for a in range(cap * b + 1)}
        return tuple(sorted(v for v in grid if v <= cap))

    def format(self, param):
        return str(Fraction(param))

    def key(self, param):
        return Fraction(param)


class _Z2Param(ParamKind):
    """Elements of Z/2Z written 0 and 1."""

    label = "element of Z/2Z"

    def contains(self, param):
        return param in (0, 1) and not isinstance(param, bool)

    def convert(self, num, den, position):
        if den is not None or num not in (0, 1):
            raise ParseError("parameter must be 0 or 1", position)
        return num

    def values(self, cap):
        return (0, 1)

    def key(self, param):
        return param


PARAM_NONE = ParamKind()
PARAM_NAT = _NatParam()
PARAM_POS_NAT = _PosNatParam()
PARAM_UNIT_RATIONAL = _UnitRationalParam()
PARAM_NONNEG_RATIONAL = _NonnegRationalParam()
PARAM_Z2 = _Z2Param()


# ---------------------------------------------------------------------------
# operator symbols and similarity types


@dataclass(frozen=True, slots=True)
class OperatorFamily:
    """A named family of modal operators sharing arity and parameter domain."""

    name: str
    arity: int
    params: ParamKind = PARAM_NONE

    def __post_init__(self):
        if self.arity < 1:
            raise FormulaError(f"operator family {self.name!r} must have arity >= 1")

    @property
    def parametrized(self) -> bool:
        return self.params is not PARAM_NONE

    def symbol(self, param=None) -> "OperatorSymbol":
        if not self.params.contains(param):
            raise FormulaError(
                f"parameter {param!r} outside domain ({self.params.label}) "
                f"of operator family {self.name!r}"
            )
        return OperatorSymbol(self.name, param, self.arity)


@dataclass(frozen=True, slots=True)
class OperatorSymbol:
    """A concrete modal operator: family name plus optional parameter.

    Two symbols are equal iff family name and parameter agree.
    """

    family: str
    param: object
    arity: int

    def text(self) -> str:
        if self.param is None:
            return self.family
        return f"{self.family}[{_format_param(self.param)}]"

    def __repr__(self):
        return f"Op({self.text()}/{self.arity})"


def _format_param(param) -> str:
    return str(Fraction(param)) if isinstance(param, Fraction) else str(param)


@dataclass(frozen=True, slots=True)
class SimilarityType:
    """An ordered finite list of operator families.

    The family order, together with each parameter domain's order, fixes a
    total deterministic enumeration of operator symbols.
    """

    families: tuple[OperatorFamily, ...]

    def __post_init__(self):
        seen = set()
        for fam in self.families:
            key = (fam.name, fam.parametrized)
            if key in seen:
                raise FormulaError(f"duplicate operator family {fam.name!r}")
            seen.add(key)

    def lookup(self, name: str, parametrized: bool) -> Optional[OperatorFamily]:
        for fam in self.families:
            if fam.name == name and fam.parametrized == parametrized:
                return fam
        return None

    def family_names(self) -> frozenset:
        return frozenset(f.name for f in self.families)

    def symbols(self, param_cap: int) -> tuple[OperatorSymbol, ...]:
        """All symbols with parameters cut at `param_cap`, deterministic order."""
        out = []
        for fam in self.families:
            for p in fam.params.values(param_cap):
                out.append(fam.symbol(p))
        return tuple(out)

    def symbol_key(self, op: OperatorSymbol):
        """Sort key: family position, then parameter."""
        for i, fam in enumerate(self.families):
            if fam.name == op.family and fam.parametrized == (op.param is not None):
                return (i, fam.params.key(op.param))
        raise FormulaError(f"operator {op.text()!r} not in similarity type")

    def contains_symbol(self, op: OperatorSymbol) -> bool:
        fam = self.lookup(op.family, op.param is not None)
        return fam is not None and fam.arity == op.arity and fam.params.contains(op.param)


# ---------------------------------------------------------------------------
# formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Atom(Formula):
    index: int


@dataclass(frozen=True, slots=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True, slots=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True, slots=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Modal(Formula):
    op: OperatorSymbol
    args: tuple[Formula, ...]

    def __post_init__(self):
        if len(self.args) != self.op.arity:
            raise FormulaError(
                f"operator {self.op.text()} expects {self.op.arity} argument(s), "
                f"got {len(self.args)}"
            )


BOT = Bottom()
TOP = Not(BOT)


def or_(a: Formula, b: Formula) -> Formula:
    return Not(And(Not(a), Not(b)))


def implies(a: Formula, b: Formula) -> Formula:
    return Not(And(a, Not(b)))


def iff(a: Formula, b: Formula) -> Formula:
    return And(implies(a, b), implies(b, a))


def and_all(formulas: Iterable[Formula]) -> Formula:
    formulas = list(formulas)
    if not formulas:
        return TOP
    out = formulas[0]
    for f in formulas[1:]:
        out = And(out, f)
    return out


def or_all(formulas: Iterable[Formula]) -> Formula:
    formulas = list(formulas)
    if not formulas:
        return BOT
    out = formulas[0]
    for f in formulas[1:]:
        out = or_(out, f)
    return out


def modal_depth(f: Formula) -> int:
    """Maximal nesting depth of modal operators; 0 for purely propositional."""
    if isinstance(f, (Atom, Bottom)):
        return 0
    if isinstance(f, Not):
        return modal_depth(f.arg)
    if isinstance(f, And):
        return max(modal_depth(f.left), modal_depth(f.right))
    if isinstance(f, Modal):
        return 1 + max((modal_depth(a) for a in f.args), default=0)
    raise TypeError(f"not a formula: {f!r}")


def prop_indices(f: Formula) -> frozenset[int]:
    out = set()
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Atom):
            out.add(g.index)
        elif isinstance(g, Not):
            stack.append(g.arg)
        elif isinstance(g, And):
            stack.extend((g.left, g.right))
        elif isinstance(g, Modal):
            stack.extend(g.args)
    return frozenset(out)


def substitute(f: Formula, subst: Mapping[int, Formula]) -> Formula:
    """Simultaneous substitution of formulas for atom indices."""
    if isinstance(f, Atom):
        return subst.get(f.index, f)
    if isinstance(f, Bottom):
        return f
    if isinstance(f, Not):
        return Not(substitute(f.arg, subst))
    if isinstance(f, And):
        return And(substitute(f.left, subst), substitute(f.right, subst))
    if isinstance(f, Modal):
        return Modal(f.op, tuple(substitute(a, subst) for a in f.args))
    raise TypeError(f"not a formula: {f!r}")


def subformulas(f: Formula):
    yield f
    if isinstance(f, Not):
        yield from subformulas(f.arg)
    elif isinstance(f, And):
        yield from subformulas(f.left)
        yield from subformulas(f.right)
    elif isinstance(f, Modal):
        for a in f.args:
            yield from subformulas(a)


# ---------------------------------------------------------------------------
# generic propositional layer (atoms are arbitrary hashable objects)


class PropFormula:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class PropAtom(PropFormula):
    atom: object


@dataclass(frozen=True, slots=True)
class PropBottom(PropFormula):
    pass


@dataclass(frozen=True, slots=True)
class PropNot(PropFormula):
    arg: PropFormula


@dataclass(frozen=True, slots=True)
class PropAnd(PropFormula):
    left: PropFormula
    right: PropFormula


PBOT = PropBottom()
PTOP = PropNot(PBOT)


def p_or(a: PropFormula, b: PropFormula) -> PropFormula:
    return PropNot(PropAnd(PropNot(a), PropNot(b)))


def p_implies(a: PropFormula, b: PropFormula) -> PropFormula:
    return PropNot(PropAnd(a, PropNot(b)))


def p_iff(a: PropFormula, b: PropFormula) -> PropFormula:
    return PropAnd(p_implies(a, b), p_implies(b, a))


def p_and_all(formulas: Iterable[PropFormula]) -> PropFormula:
    formulas = list(formulas)
    if not formulas:
        return PTOP
    out = formulas[0]
    for f in formulas[1:]:
        out = PropAnd(out, f)
    return out


def p_or_all(formulas: Iterable[PropFormula]) -> PropFormula:
    formulas = list(formulas)
    if not formulas:
        return PBOT
    out = formulas[0]
    for f in formulas[1:]:
        out = p_or(out, f)
    return out


def prop_atoms(f: PropFormula) -> list:
    """Atoms of `f` in first-occurrence order (deduplicated)."""
    out, seen = [], set()
    stack = [f]
    while stack:
        g = stack.pop(0)
        if isinstance(g, PropAtom):
            if g.atom not in seen:
                seen.add(g.atom)
                out.append(g.atom)
        elif isinstance(g, PropNot):
            stack.insert(0, g.arg)
        elif isinstance(g, PropAnd):
            stack.insert(0, g.left)
            stack.insert(1, g.right)
    return out


def prop_eval(f: PropFormula, valuation) -> bool:
    """Evaluate under a truth assignment (mapping or callable on atoms)."""
    get = valuation.__getitem__ if hasattr(valuation, "__getitem__") else valuation
    def ev(g):
        if isinstance(g, PropAtom):
            return bool(get(g.atom))
        if isinstance(g, PropBottom):
            return False
        if isinstance(g, PropNot):
            return not ev(g.arg)
        if isinstance(g, PropAnd):
            return ev(g.left) and ev(g.right)
        raise TypeError(f"not a propositional formula: {g!r}")
    return ev(f)


# Exhaustive assignment enumeration is exact and deterministic up to this many
# atoms; beyond it a decision-procedure backend may be installed via
# `set_entailment_backend`.
MAX_ENUMERATED_ATOMS = 20

_entailment_backend: Optional[Callable] = None


def set_entailment_backend(backend: Optional[Callable]) -> None:
    """Install a fallback `(assumptions, goal, universe) -> bool` for queries
    with more than MAX_ENUMERATED_ATOMS atoms.  Must be deterministic."""
    global _entailment_backend
    _entailment_backend = backend


def _column(i: int, n: int) -> int:
    # Truth column of atom i over all 2^n assignments, as a bit mask: bit a is
    # set iff assignment index a has atom i true (a >> i & 1).
    block = ((1 << (1 << i)) - 1) << (1 << i)
    width = 1 << (i + 1)
    total = 1 << n
    col = block
    while width < total:
        col |= col << width
        width <<= 1
    return col


def truth_mask(f: PropFormula, columns: Mapping[object, int], full: int) -> int:
    """Bit mask of satisfying assignments, computed bit-parallel."""
    if isinstance(f, PropAtom):
        try:
            return columns[f.atom]
        except KeyError:
            raise AtomUniverseError(f"atom {f.atom!r} outside the stated universe")
    if isinstance(f, PropBottom):
        return 0
    if isinstance(f, PropNot):
        return full & ~truth_mask(f.arg, columns, full)
    if isinstance(f, PropAnd):
        return truth_mask(f.left, columns, full) & truth_mask(f.right, columns, full)
    raise TypeError(f"not a propositional formula: {f!r}")


def atom_columns(universe: Sequence) -> tuple[dict, int]:
    """Per-atom truth columns and the all-assignments mask for a universe."""
    n = len(universe)
    if n > MAX_ENUMERATED_ATOMS:
        raise BudgetError(
            f"{n} atoms exceed the enumeration bound {MAX_ENUMERATED_ATOMS}"
        )
    full = (1 << (1 << n)) - 1
    return {a: _column(i, n) for i, a in enumerate(universe)}, full


def prop_entails(
    assumptions: Iterable[PropFormula],
    goal: PropFormula,
    universe: Optional[Sequence] = None,
) -> bool:
    """True iff every assignment satisfying all assumptions satisfies the goal.

    Complete for finitely many atoms; all formulas must draw their atoms from
    one universe (given explicitly, or the union in first-occurrence order).
    """
    assumptions = list(assumptions)
    if universe is None:
        order, seen = [], set()
        for f in assumptions + [goal]:
            for a in prop_atoms(f):
                if a not in seen:
                    seen.add(a)
                    order.append(a)
    else:
        order = list(universe)
        if len(set(order)) != len(order):
            raise AtomUniverseError("universe contains duplicate atoms")
    if len(order) > MAX_ENUMERATED_ATOMS:
        if _entailment_backend is not None:
            return _entailment_backend(assumptions, goal, order)
        raise BudgetError(
            f"{len(order)} atoms exceed the enumeration bound "
            f"{MAX_ENUMERATED_ATOMS} and no backend is installed"
        )
    columns, full = atom_columns(order)
    remaining = full
    for f in assumptions:
        remaining &= truth_mask(f, columns, full)
        if remaining == 0:
            return True
    return remaining & ~truth_mask(goal, columns, full) & full == 0


def prop_satisfiable(formulas: Iterable[PropFormula],
                     universe: Optional[Sequence] = None) -> bool:
    return not prop_entails(formulas, PBOT, universe)


def prop_equivalent(a: PropFormula, b: PropFormula) -> bool:
    return prop_entails([a], b) and prop_entails([b], a)


def prop_tautology(f: PropFormula) -> bool:
    return prop_entails([], f)


def formula_to_prop(f: Formula) -> PropFormula:
    """View a modal formula propositionally: maximal modal subformulas and
    indexed atoms become opaque atoms."""
    if isinstance(f, (Atom, Modal)):
        return PropAtom(f)
    if isinstance(f, Bottom):
        return PBOT
    if isinstance(f, Not):
        return PropNot(formula_to_prop(f.arg))
    if isinstance(f, And):
        return PropAnd(formula_to_prop(f.left), formula_to_prop(f.right))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# concrete grammar: tokenizer


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_NUM_RE = re.compile(r"\d+")
_MULTI_PUNCT = ("<->", "->", "=>", "[]", "<>")
_SINGLE_PUNCT = set("()[]{},&|!/")

_KEYWORDS = {"true", "false"}
_INDEXED_ATOM_RE = re.compile(r"^[pv](\d+)$")


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # 'ident' | 'num' | 'punct' | 'end'
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(_Token("ident", m.group(), i))
            i = m.end()
            continue
        m = _NUM_RE.match(text, i)
        if m:
            tokens.append(_Token("num", m.group(), i))
            i = m.end()
            continue
        for p in _MULTI_PUNCT:
            if text.startswith(p, i):
                tokens.append(_Token("punct", p, i))
                i += len(p)
                break
        else:
            if c in _SINGLE_PUNCT:
                tokens.append(_Token("punct", c, i))
                i += 1
            else:
                raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    """Recursive-descent parser for the shared boolean grammar.

    Precedence, loosest first:  =>  <->  ->  |  &  unary.
    `=>` is the binary conditional, right-associative, resolved against the
    similarity type like any other modal operator.
    """

    def __init__(self, text: str, sig: SimilarityType):
        self.text = text
        self.sig = sig
        self.tokens = _tokenize(text)
        self.k = 0

    # token plumbing

    def peek(self) -> _Token:
        return self.tokens[self.k]

    def advance(self) -> _Token:
        t = self.tokens[self.k]
        self.k += 1
        return t

    def accept(self, text: str) -> bool:
        if self.peek().kind == "punct" and self.peek().text == text:
            self.k += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        t = self.peek()
        if t.kind == "punct" and t.text == text:
            return self.advance()
        raise ParseError(f"expected {text!r}", t.pos)

    def done(self):
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"unexpected trailing input {t.text!r}", t.pos)

    # grammar

    def formula(self):
        lhs = self.iff()
        if self.accept("=>"):
            fam = self.sig.lookup("cond", False)
            if fam is None:
                raise ParseError("'=>' needs the binary conditional in the signature",
                                 self.tokens[self.k - 1].pos)
            rhs = self.formula()  # right-associative
            return self.make_modal(fam.symbol(), (lhs, rhs))
        return lhs

    def iff(self):
        out = self.imp()
        while self.accept("<->"):
            out = self.make_iff(out, self.imp())
        return out

    def imp(self):
        parts = [self.disj()]
        while self.accept("->"):
            parts.append(self.disj())
        out = parts[-1]
        for part in reversed(parts[:-1]):  # right-associative
            out = self.make_implies(part, out)
        return out

    def disj(self):
        out = self.conj()
        while self.accept("|"):
            out = self.make_or(out, self.conj())
        return out

    def conj(self):
        out = self.unary()
        while self.accept("&"):
            out = self.make_and(out, self.unary())
        return out

    def unary(self):
        t = self.peek()
        if t.kind == "punct":
            if self.accept("!"):
                return self.make_not(self.unary())
            if self.accept("[]"):
                return self.box(self.unary_arg(), t.pos)
            if self.accept("<>"):
                return self.diamond(self.unary_arg(), t.pos)
            if self.accept("("):
                out = self.formula()
                self.expect(")")
                return out
        if t.kind == "ident":
            if t.text == "true":
                self.advance()
                return self.make_top()
            if t.text == "false":
                self.advance()
                return self.make_bottom()
            return self.ident()
        raise ParseError(f"expected a formula, found {t.text or 'end of input'!r}", t.pos)

    def unary_arg(self):
        # argument position of [] / <>; same as unary
        return self.unary()

    def ident(self):
        t = self.advance()
        has_param = self.peek().kind == "punct" and self.peek().text == "["
        has_args = self.peek().kind == "punct" and self.peek().text == "("
        if has_param or has_args:
            return self.modal_application(t)
        if t.text in self.sig.family_names():
            raise ParseError(
                f"operator name {t.text!r} cannot be used as an atom", t.pos)
        return self.atom(t)

    def modal_application(self, t: _Token):
        param = None
        parametrized = False
        if self.accept("["):
            parametrized = True
            param = self.param(t)
            self.expect("]")
        fam = self.sig.lookup(t.text, parametrized)
        if fam is None:
            other = self.sig.lookup(t.text, not parametrized)
            if other is not None:
                need = "requires" if other.parametrized else "does not take"
                raise ParseError(f"operator {t.text!r} {need} a parameter", t.pos)
            raise ParseError(f"unknown operator family {t.text!r}", t.pos)
        if parametrized:
            param = fam.params.convert(param[0], param[1], t.pos)
        self.expect("(")
        args = [self.arg()]
        while self.accept(","):
            args.append(self.arg())
        self.expect(")")
        sym = fam.symbol(param)
        if len(args) != sym.arity:
            raise ParseError(
                f"operator {sym.text()} expects {sym.arity} argument(s), got {len(args)}",
                t.pos)
        return self.make_modal(sym, tuple(args))

    def param(self, t: _Token) -> tuple[int, Optional[int]]:
        num = self.peek()
        if num.kind != "num":
            raise ParseError("expected a numeric parameter", num.pos)
        self.advance()
        den = None
        if self.accept("/"):
            d = self.peek()
            if d.kind != "num":
                raise ParseError("expected a denominator", d.pos)
            self.advance()
            den = int(d.text)
            if den == 0:
                raise ParseError("zero denominator", d.pos)
        return int(num.text), den

    def arg(self):
        return self.formula()

    # box / diamond resolution: native box if present, else the graded
    # encoding box = !geq[1](!.) and dia = geq[1](.)

    def box(self, sub, pos):
        fam = self.sig.lookup("box", False)
        if fam is not None:
            return self.make_modal(fam.symbol(), (sub,))
        fam = self.sig.lookup("geq", True)
        if fam is not None:
            return self.make_not(self.make_modal(fam.symbol(1), (self.make_not(sub),)))
        raise ParseError("no box-like operator in this similarity type", pos)

    def diamond(self, sub, pos):
        fam = self.sig.lookup("box", False)
        if fam is not None:
            return self.make_not(self.make_modal(fam.symbol(), (self.make_not(sub),)))
        fam = self.sig.lookup("geq", True)
        if fam is not None:
            return self.make_modal(fam.symbol(1), (sub,))
        raise ParseError("no diamond-like operator in this similarity type", pos)

    # node construction hooks (overridden by the one-step parser)

    def make_not(self, a):
        return Not(a)

    def make_and(self, a, b):
        return And(a, b)

    def make_or(self, a, b):
        return or_(a, b)

    def make_implies(self, a, b):
        return implies(a, b)

    def make_iff(self, a, b):
        return iff(a, b)

    def make_top(self):
        return TOP

    def make_bottom(self):
        return BOT

    def make_modal(self, sym, args):
        return Modal(sym, tuple(args))

    def atom(self, t: _Token):
        raise ParseError(f"unexpected identifier {t.text!r}", t.pos)


class _FormulaParser(_Parser):
    """Parser for ordinary formulas: atoms are p<k>, v<k>, or aliased names."""

    def __init__(self, text, sig):
        super().__init__(text, sig)
        reserved = set()
        for tok in self.tokens:
            if tok.kind == "ident":
                m = _INDEXED_ATOM_RE.match(tok.text)
                if m:
                    reserved.add(int(m.group(1)))
        self.reserved = reserved
        self.aliases: dict[str, int] = {}

    def atom(self, t: _Token):
        m = _INDEXED_ATOM_RE.match(t.text)
        if m:
            return Atom(int(m.group(1)))
        if t.text in self.aliases:
            return Atom(self.aliases[t.text])
        index = 0
        taken = self.reserved | set(self.aliases.values())
        while index in taken:
            index += 1
        self.aliases[t.text] = index
        return Atom(index)


def parse(text: str, sig: SimilarityType) -> Formula:
    """Parse a formula; sugar is expanded so only the core grammar remains."""
    p = _FormulaParser(text, sig)
    out = p.formula()
    p.done()
    return out


def parse_with_aliases(text: str, sig: SimilarityType) -> tuple[Formula, dict[str, int]]:
    """Like `parse` but also reports which names were aliased to which indices."""
    p = _FormulaParser(text, sig)
    out = p.formula()
    p.done()
    return out, dict(p.aliases)


# ---------------------------------------------------------------------------
# printer


def render(f: Formula) -> str:
    """Deterministic concrete syntax with `parse(render(f))` structurally == f.

    Implication, disjunction, truth and diamond patterns are re-sugared for
    readability; everything round-trips because the sugar normalises back to
    the identical core AST.
    """
    if isinstance(f, Atom):
        return f"p{f.index}"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Not):
        a = f.arg
        if isinstance(a, Bottom):
            return "true"
        if isinstance(a, And):
            if isinstance(a.left, Not) and isinstance(a.right, Not):
                return f"({render(a.left.arg)} | {render(a.right.arg)})"
            if isinstance(a.right, Not):
                return f"({render(a.left)} -> {render(a.right.arg)})"
        if (isinstance(a, Modal) and a.op.family == "box" and a.op.param is None
                and isinstance(a.args[0], Not)):
            return f"<>({render(a.args[0].arg)})"
        return f"!{_render_negand(a)}"
    if isinstance(f, And):
        return f"({render(f.left)} & {render(f.right)})"
    if isinstance(f, Modal):
        if f.op.family == "box" and f.op.param is None:
            return f"[]({render(f.args[0])})"
        if f.op.family == "cond" and f.op.param is None:
            return f"({render(f.args[0])} => {render(f.args[1])})"
        args = ", ".join(render(a) for a in f.args)
        return f"{f.op.text()}({args})"
    raise TypeError(f"not a formula: {f!r}")


def _render_negand(f: Formula) -> str:
    out = render(f)
    # every composite rendering is already parenthesised or operator-headed
    return out

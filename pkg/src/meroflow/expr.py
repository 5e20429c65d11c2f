"""Meromorphic expressions in one complex variable.

Expressions are immutable trees of frozen dataclasses.  The text grammar is::

    term   := factor (('+'|'-') factor)*
    factor := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' signed-integer)?
    atom   := number | 'z' | 'i' | func '(' term ')' | '(' term ')'
    func   := exp | log | sin | cos | tan

A number immediately followed by ``i`` is an imaginary literal (``2.5i``), and
a parenthesised pair ``(a+bi)`` of literals is read as one complex constant.
That is the form the canonical printer uses for constants that are not plain
non-negative reals, so ``parse(to_text(e)) == e`` holds for every tree.
"""
from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Expression", "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow",
    "Exp", "Log", "Sin", "Cos", "Tan",
    "EvalOutcome", "ExprSyntaxError", "InconclusiveOrder",
    "parse", "to_text", "evaluate", "differentiate", "local_order",
    "compile_scalar", "compile_numpy", "NonFiniteValue",
    "parse_complex", "format_complex", "OVERFLOW_THRESHOLD", "POLE_THRESHOLD", "MAX_EXPONENT",
]

OVERFLOW_THRESHOLD = 1e300
POLE_THRESHOLD = 1e-300
MAX_EXPONENT = 64

_HALF_PI = math.pi / 2


class Expression:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)

    def __call__(self, z: complex) -> "EvalOutcome":
        return evaluate(self, z)


@dataclass(frozen=True, eq=True)
class Const(Expression):
    value: complex

    def __post_init__(self):
        v = complex(self.value)
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValueError(f"constant must be finite, got {v!r}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Var(Expression):
    pass


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Pow(Expression):
    base: Expression
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or isinstance(self.exponent, bool):
            raise TypeError("exponent must be an int")
        if abs(self.exponent) > MAX_EXPONENT:
            raise ValueError(f"exponent {self.exponent} outside [-{MAX_EXPONENT}, {MAX_EXPONENT}]")


@dataclass(frozen=True)
class Exp(Expression):
    arg: Expression


@dataclass(frozen=True)
class Log(Expression):
    arg: Expression


@dataclass(frozen=True)
class Sin(Expression):
    arg: Expression


@dataclass(frozen=True)
class Cos(Expression):
    arg: Expression


@dataclass(frozen=True)
class Tan(Expression):
    arg: Expression


_FUNCS = {"exp": Exp, "log": Log, "sin": Sin, "cos": Cos, "tan": Tan}
_FUNC_NAMES = {cls: name for name, cls in _FUNCS.items()}
_BINARY_SYMBOLS = {Add: "+", Sub: "-", Mul: "*", Div: "/"}

Z = Var()


# ---------------------------------------------------------------- parsing

class ExprSyntaxError(ValueError):
    """Raised by :func:`parse`; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    pos: int
    value: complex = 0j


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        if m.group("num") is not None:
            x = float(m.group("num"))
            v = complex(0.0, x) if m.group("imag") else complex(x, 0.0)
            toks.append(_Tok("num", m.group(0), pos, v))
        elif m.group("ident") is not None:
            toks.append(_Tok("ident", m.group(0), pos))
        elif m.group("op") is not None:
            toks.append(_Tok("op", m.group(0), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None) -> ExprSyntaxError:
        tok = tok or self.tok
        return ExprSyntaxError(msg, _byte_offset(self.text, tok.pos))

    def accept(self, op: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == op:
            self.i += 1
            return True
        return False

    def expect(self, op: str):
        if not self.accept(op):
            what = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise self.error(f"expected {op!r}, found {what}")

    def parse(self) -> Expression:
        e = self.term()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def term(self) -> Expression:
        e = self.factor()
        while True:
            if self.accept("+"):
                e = Add(e, self.factor())
            elif self.accept("-"):
                e = Sub(e, self.factor())
            else:
                return e

    def factor(self) -> Expression:
        e = self.unary()
        while True:
            if self.accept("*"):
                e = Mul(e, self.unary())
            elif self.accept("/"):
                e = Div(e, self.unary())
            else:
                return e

    def unary(self) -> Expression:
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.accept("^"):
            sign_tok = self.tok
            sign = -1 if self.accept("-") else 1
            if sign == 1:
                self.accept("+")
            tok = self.tok
            if tok.kind != "num" or tok.value.imag != 0 or not re.fullmatch(r"\d+", tok.text):
                raise self.error("expected integer exponent", tok)
            self.i += 1
            k = sign * int(tok.text)
            if abs(k) > MAX_EXPONENT:
                raise self.error(f"exponent {k} out of range [-{MAX_EXPONENT}, {MAX_EXPONENT}]", sign_tok)
            return Pow(base, k)
        return base

    def _complex_literal(self) -> Const | None:
        # '(' ['-'] num ('+'|'-') imag-num ')'
        t = self.toks
        j = self.i + 1
        neg = t[j].kind == "op" and t[j].text == "-"
        j += neg
        if t[j].kind != "num" or t[j].text.endswith("i"):
            return None
        re_part = -t[j].value.real if neg else t[j].value.real
        j += 1
        if not (t[j].kind == "op" and t[j].text in "+-"):
            return None
        sgn = -1.0 if t[j].text == "-" else 1.0
        j += 1
        if t[j].kind != "num" or not t[j].text.endswith("i"):
            return None
        im_part = sgn * t[j].value.imag
        j += 1
        if not (t[j].kind == "op" and t[j].text == ")"):
            return None
        self.i = j + 1
        return Const(complex(re_part, im_part))

    def atom(self) -> Expression:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(tok.value)
        if tok.kind == "ident":
            self.i += 1
            if tok.text == "z":
                return Var()
            if tok.text == "i":
                return Const(1j)
            if tok.text in _FUNCS:
                self.expect("(")
                arg = self.term()
                self.expect(")")
                return _FUNCS[tok.text](arg)
            raise self.error(f"unknown identifier {tok.text!r}", tok)
        if tok.kind == "op" and tok.text == "(":
            lit = self._complex_literal()
            if lit is not None:
                return lit
            self.i += 1
            e = self.term()
            self.expect(")")
            return e
        if tok.kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {tok.text!r}")


def parse(text: str) -> Expression:
    """Parse expression text into a tree.

    Raises
    ------
    ExprSyntaxError
        On malformed input, an out-of-range exponent or an unknown identifier.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# --------------------------------------------------------------- printing

def _fmt_real(x: float) -> str:
    return repr(float(x))


def _fmt_const(v: complex) -> str:
    if v.imag == 0 and not math.copysign(1.0, v.real) < 0 and not math.copysign(1.0, v.imag) < 0:
        return _fmt_real(v.real)
    im = v.imag
    sign = "-" if math.copysign(1.0, im) < 0 else "+"
    return f"({_fmt_real(v.real)}{sign}{_fmt_real(abs(im))}i)"


def to_text(e: Expression) -> str:
    """Canonical, fully parenthesised text of ``e``."""
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return "z"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if type(e) in _BINARY_SYMBOLS:
        return f"({to_text(e.left)}{_BINARY_SYMBOLS[type(e)]}{to_text(e.right)})"
    if isinstance(e, Pow):
        return f"({to_text(e.base)}^{e.exponent})"
    if type(e) in _FUNC_NAMES:
        return f"{_FUNC_NAMES[type(e)]}({to_text(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


# ------------------------------------------------------------- evaluation

class NonFiniteValue(ArithmeticError):
    """Raised by compiled evaluators; ``reason`` is pole, overflow or branch-undefined."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class EvalOutcome:
    """Result of :func:`evaluate`: a finite value, or ``None`` plus a reason."""

    value: complex | None
    reason: str | None = None

    @property
    def finite(self) -> bool:
        return self.value is not None


def _check(v: complex) -> complex:
    a = abs(v)
    if a != a:  # nan
        raise NonFiniteValue("overflow")
    if a >= OVERFLOW_THRESHOLD:
        raise NonFiniteValue("overflow")
    return v


def _div(a: complex, b: complex) -> complex:
    if abs(b) < POLE_THRESHOLD:
        raise NonFiniteValue("pole")
    try:
        return _check(a / b)
    except OverflowError:
        raise NonFiniteValue("overflow") from None


def _pow(a: complex, k: int) -> complex:
    if k < 0 and abs(a) < POLE_THRESHOLD:
        raise NonFiniteValue("pole")
    try:
        return _check(a ** k)
    except OverflowError:
        raise NonFiniteValue("overflow") from None
    except ZeroDivisionError:
        raise NonFiniteValue("pole") from None


def _exp(a: complex) -> complex:
    try:
        return _check(cmath.exp(a))
    except OverflowError:
        raise NonFiniteValue("overflow") from None


def _log(a: complex) -> complex:
    if a == 0:
        raise NonFiniteValue("branch-undefined")
    if a.imag == 0:
        a = complex(a.real, 0.0)  # cut approached from above
    return cmath.log(a)


def _tan_pole(a: complex) -> bool:
    if abs(a.imag) > 1e-8:
        return False
    k = round((a.real - _HALF_PI) / math.pi)
    p = _HALF_PI + k * math.pi
    return abs(a - p) <= 4 * 2.2204460492503131e-16 * max(1.0, abs(p))


def _tan(a: complex) -> complex:
    if _tan_pole(a):
        raise NonFiniteValue("pole")
    try:
        return _check(cmath.tan(a))
    except OverflowError:
        raise NonFiniteValue("overflow") from None


def _trig(fn):
    def g(a):
        try:
            return _check(fn(a))
        except OverflowError:
            raise NonFiniteValue("overflow") from None
    return g


_sin = _trig(cmath.sin)
_cos = _trig(cmath.cos)


def compile_scalar(e: Expression) -> Callable[[complex], complex]:
    """Compile ``e`` into a fast scalar function.

    The returned callable raises :class:`NonFiniteValue` instead of returning
    a non-finite value.
    """
    if isinstance(e, Const):
        v = e.value
        return lambda z: v
    if isinstance(e, Var):
        return lambda z: z
    if isinstance(e, Neg):
        a = compile_scalar(e.arg)
        return lambda z: -a(z)
    if isinstance(e, Pow):
        a = compile_scalar(e.base)
        k = e.exponent
        return lambda z: _pow(a(z), k)
    if type(e) in _BINARY_SYMBOLS:
        a = compile_scalar(e.left)
        b = compile_scalar(e.right)
        if isinstance(e, Add):
            return lambda z: _check(a(z) + b(z))
        if isinstance(e, Sub):
            return lambda z: _check(a(z) - b(z))
        if isinstance(e, Mul):
            return lambda z: _check(a(z) * b(z))
        return lambda z: _div(a(z), b(z))
    fn = {Exp: _exp, Log: _log, Sin: _sin, Cos: _cos, Tan: _tan}[type(e)]
    a = compile_scalar(e.arg)
    return lambda z: fn(a(z))


def evaluate(e: Expression, z: complex) -> EvalOutcome:
    """Evaluate ``e`` at ``z``.

    >>> evaluate(parse("z^2"), 1 + 1j).value
    2j
    """
    try:
        return EvalOutcome(complex(compile_scalar(e)(complex(z))))
    except NonFiniteValue as exc:
        return EvalOutcome(None, exc.reason)


def _np_log(a):
    a = np.where(a.imag == 0, a.real + 0j, a)
    return np.log(a)


def _np_div(a, b):
    with np.errstate(all="ignore"):
        out = a / b
    return np.where(np.abs(b) < POLE_THRESHOLD, np.nan, out)


def compile_numpy(e: Expression) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``e`` into a vectorised function of a complex array.

    Non-finite points come back as ``nan`` or ``inf``; callers decide what
    that means.  No pole detection beyond division by near-zero values.
    """
    def build(n: Expression):
        if isinstance(n, Const):
            v = n.value
            return lambda z: np.full(z.shape, v, dtype=complex)
        if isinstance(n, Var):
            return lambda z: z
        if isinstance(n, Neg):
            a = build(n.arg)
            return lambda z: -a(z)
        if isinstance(n, Pow):
            a = build(n.base)
            k = n.exponent
            if k >= 0:
                return lambda z: a(z) ** k
            return lambda z: _np_div(1.0 + 0j, a(z) ** (-k))
        if type(n) in _BINARY_SYMBOLS:
            a, b = build(n.left), build(n.right)
            if isinstance(n, Add):
                return lambda z: a(z) + b(z)
            if isinstance(n, Sub):
                return lambda z: a(z) - b(z)
            if isinstance(n, Mul):
                return lambda z: a(z) * b(z)
            return lambda z: _np_div(a(z), b(z))
        fn = {Exp: np.exp, Log: _np_log, Sin: np.sin, Cos: np.cos, Tan: np.tan}[type(n)]
        a = build(n.arg)
        return lambda z: fn(a(z))

    inner = build(e)

    def f(z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            out = np.asarray(inner(z), dtype=complex)
        return np.where(np.abs(out) >= OVERFLOW_THRESHOLD, np.inf, out)

    return f


# --------------------------------------------------------- differentiation

def _is_const(e: Expression, v: complex | None = None) -> bool:
    return isinstance(e, Const) and (v is None or e.value == v)


def _add(a, b):
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a, b):
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return _neg(b)
    return Sub(a, b)


def _neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_const(a, 0) or _is_const(b, 0):
        return Const(0)
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div_e(a, b):
    if _is_const(a, 0):
        return Const(0)
    if _is_const(b, 1):
        return a
    return Div(a, b)


def differentiate(e: Expression) -> Expression:
    """Symbolic derivative with respect to ``z`` (light constant folding only)."""
    if isinstance(e, Const):
        return Const(0)
    if isinstance(e, Var):
        return Const(1)
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg))
    if isinstance(e, Add):
        return _add(differentiate(e.left), differentiate(e.right))
    if isinstance(e, Sub):
        return _sub(differentiate(e.left), differentiate(e.right))
    if isinstance(e, Mul):
        return _add(_mul(differentiate(e.left), e.right), _mul(e.left, differentiate(e.right)))
    if isinstance(e, Div):
        num = _sub(_mul(differentiate(e.left), e.right), _mul(e.left, differentiate(e.right)))
        return _div_e(num, Pow(e.right, 2))
    if isinstance(e, Pow):
        u, k = e.base, e.exponent
        du = differentiate(u)
        if k == 0:
            return Const(0)
        if k == 1:
            return du
        if k - 1 >= -MAX_EXPONENT:
            lead = Pow(u, k - 1) if k != 2 else u
        else:
            lead = Div(Pow(u, k), u)
        return _mul(_mul(Const(k), lead), du)
    du = differentiate(e.arg)
    u = e.arg
    if isinstance(e, Exp):
        return _mul(e, du)
    if isinstance(e, Log):
        return _div_e(du, u)
    if isinstance(e, Sin):
        return _mul(Cos(u), du)
    if isinstance(e, Cos):
        return _neg(_mul(Sin(u), du))
    if isinstance(e, Tan):
        return _mul(Add(Const(1), Pow(Tan(u), 2)), du)
    raise TypeError(f"not an expression node: {e!r}")


# ------------------------------------------------------------- local order

class InconclusiveOrder(ValueError):
    """The probe circles do not show a clean power law around the point."""


def local_order(
    e: Expression,
    z0: complex,
    rho: float = 1e-3,
    samples: int = 64,
    slope_tol: float = 0.1,
) -> tuple[int, complex]:
    """Estimate ``k`` and ``c`` with ``e(z) ~ c (z - z0)^k`` near ``z0``.

    ``k < 0`` at a pole, ``k > 0`` at a zero.  The order comes from the mean
    log-modulus on the circles of radius ``rho`` and ``rho/2``; ``c`` is the
    mean of ``(z - z0)^(-k) e(z)`` on the smaller circle.

    Raises
    ------
    InconclusiveOrder
        If the slope is not within ``slope_tol`` of an integer, a sample is
        non-finite, or the normalised values are not nearly constant (as for
        an essential singularity).
    """
    f = compile_scalar(e)
    z0 = complex(z0)
    # half-step offset keeps sample points off axis-aligned singular lines
    theta = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    u = np.exp(1j * theta)

    def ring(r):
        vals = []
        for w in u:
            try:
                vals.append(f(z0 + r * w))
            except NonFiniteValue as exc:
                raise InconclusiveOrder(f"non-finite sample ({exc.reason}) at radius {r:g}") from None
        vals = np.array(vals)
        if np.any(vals == 0):
            raise InconclusiveOrder(f"exact zero sampled at radius {r:g}")
        return vals

    outer, inner = ring(rho), ring(rho / 2)
    slope = (np.mean(np.log(np.abs(outer))) - np.mean(np.log(np.abs(inner)))) / math.log(2.0)
    k = int(round(slope))
    if abs(slope - k) > slope_tol:
        raise InconclusiveOrder(f"slope {slope:.4f} is not near an integer")
    normalised = inner * (rho / 2 * u) ** (-k)
    c = complex(np.mean(normalised))
    spread = float(np.max(np.abs(normalised - c)))
    if c == 0 or spread > slope_tol * abs(c):
        raise InconclusiveOrder(f"leading coefficient not stable (spread {spread:.3g}, |c| {abs(c):.3g})")
    return k, c


# ------------------------------------------------------- complex literals

_REAL = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_CPLX = re.compile(rf"^(?P<re>{_REAL})?(?:(?P<im>[+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[+-])?i)?$")


def parse_complex(text: str) -> complex:
    """Parse ``a+bi`` style literals: ``1.5-2i``, ``3``, ``-i``, ``2e-3+0i``."""
    s = text.strip().replace(" ", "")
    m = _CPLX.match(s)
    if not s or m is None:
        raise ValueError(f"not a complex literal: {text!r}")
    re_part, im_part = m.group("re"), m.group("im")
    if s.endswith("i") and im_part is None and re_part is not None:
        # "2i" or "-1.5i": the lone number is the imaginary part
        return complex(0.0, float(re_part))
    im = 0.0
    if s.endswith("i"):
        im = 1.0 if im_part in (None, "+") else -1.0 if im_part == "-" else float(im_part)
    return complex(float(re_part) if re_part else 0.0, im)


def format_complex(v: complex) -> str:
    """Round-trippable ``a+bi`` text; negative zeros print as zeros."""
    v = complex(v)
    def short(x: float) -> str:
        t = repr(x + 0.0)
        return t[:-2] if t.endswith(".0") else t

    im = short(v.imag)
    return f"{short(v.real)}{'' if im.startswith('-') else '+'}{im}i"

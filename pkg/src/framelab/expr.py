"""Small symbolic expression engine for metric coefficient functions.

Expressions are immutable trees over symbols, exact rational constants and
the operators + - * / ^ sqrt sin cos tan exp log.  Differentiation is
symbolic (closed under the node set), so higher metric derivatives needed
by curvature gradients stay exact.  Simplification is deliberately limited
to constant folding and a few identities (x*1, x+0, sin^2+cos^2); we never
attempt aggressive rewriting.
"""

from __future__ import annotations

import math
from fractions import Fraction


class ExprError(ValueError):
    pass


class ExprEvalError(ExprError):
    """Evaluation left the real domain (log of a negative number, 0/0, ...)."""


class ParseError(ExprError):
    def __init__(self, message, line, col):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


_FUNCTIONS = ("sqrt", "sin", "cos", "tan", "exp", "log")


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, other):
        return Pow(self, _coerce(other))

    def __neg__(self):
        return Neg(self)

    def __repr__(self):
        return f"{type(self).__name__}({to_str(self)!r})"

    def __str__(self):
        return to_str(self)

    def __eq__(self, other):
        if not isinstance(other, Expr):
            return NotImplemented
        return _key(self) == _key(other)

    def __hash__(self):
        return hash(_key(self))


def _coerce(v):
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return Num(Fraction(v))
    if isinstance(v, float):
        return Num(v)
    raise TypeError(f"cannot use {type(v).__name__} in an expression")


class Num(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        if isinstance(value, float):
            # keep floats only when they are not exactly representable
            if value == int(value) and abs(value) < 2**52:
                value = Fraction(int(value))
        object.__setattr__(self, "value", value)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")


class Sym(Expr):
    """A named symbol: either a chart coordinate or a named parameter."""

    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")


class _Binary(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        object.__setattr__(self, "a", _coerce(a))
        object.__setattr__(self, "b", _coerce(b))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(_Binary):
    __slots__ = ()


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        object.__setattr__(self, "a", _coerce(a))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")


class Call(Expr):
    __slots__ = ("fn", "a")

    def __init__(self, fn, a):
        if fn not in _FUNCTIONS:
            raise ExprError(f"unknown function {fn!r}")
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "a", _coerce(a))

    def __setattr__(self, *a):
        raise AttributeError("Expr nodes are immutable")


def sqrt(a):
    return Call("sqrt", a)


def sin(a):
    return Call("sin", a)


def cos(a):
    return Call("cos", a)


def tan(a):
    return Call("tan", a)


def exp(a):
    return Call("exp", a)


def log(a):
    return Call("log", a)


# ---------------------------------------------------------------------------
# structural key (used for equality, hashing and canonical ordering)

def _key(e):
    t = type(e)
    if t is Num:
        v = e.value
        return ("num", str(v))
    if t is Sym:
        return ("sym", e.name)
    if t is Neg:
        return ("neg", _key(e.a))
    if t is Call:
        return ("call", e.fn, _key(e.a))
    return (t.__name__.lower(), _key(e.a), _key(e.b))


# ---------------------------------------------------------------------------
# tokenizer / parser

class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(source):
    tokens = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_col = col
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = False
            seen_exp = False
            while j < n:
                cj = source[j]
                if cj.isdigit():
                    j += 1
                elif cj == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif cj in "eE" and not seen_exp and j + 1 < n and (
                    source[j + 1].isdigit() or (source[j + 1] in "+-" and j + 2 < n and source[j + 2].isdigit())
                ):
                    seen_exp = True
                    j += 1
                    if source[j] in "+-":
                        j += 1
                else:
                    break
            text = source[i:j]
            tokens.append(_Token("number", text, line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("name", source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if c in "+-*/^(),[];=":
            tokens.append(_Token(c, c, line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.text!r}", tok.line, tok.col)
        return self.next()

    def parse_expr(self):
        return self._additive()

    def _additive(self):
        node = self._multiplicative()
        while self.peek().kind in ("+", "-"):
            op = self.next().kind
            rhs = self._multiplicative()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def _multiplicative(self):
        node = self._unary()
        while self.peek().kind in ("*", "/"):
            op = self.next().kind
            rhs = self._unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def _unary(self):
        tok = self.peek()
        if tok.kind == "-":
            self.next()
            return Neg(self._unary())
        if tok.kind == "+":
            self.next()
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        if self.peek().kind == "^":
            self.next()
            # right associative, binds tighter than unary minus on the left
            exponent = self._unary_power()
            return Pow(base, exponent)
        return base

    def _unary_power(self):
        tok = self.peek()
        if tok.kind == "-":
            self.next()
            return Neg(self._unary_power())
        return self._power()

    def _atom(self):
        tok = self.next()
        if tok.kind == "number":
            if "e" in tok.text or "E" in tok.text:
                return Num(float(tok.text))
            return Num(Fraction(tok.text))
        if tok.kind == "name":
            if self.peek().kind == "(":
                if tok.text not in _FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.line, tok.col)
                self.next()
                arg = self.parse_expr()
                self.expect(")")
                return Call(tok.text, arg)
            return Sym(tok.text)
        if tok.kind == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)


def parse_expr(source):
    """Parse a single expression string into an Expr tree."""
    parser = _Parser(_tokenize(source))
    node = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return node


# ---------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4, "atom": 5}


def _prec(e):
    t = type(e)
    if t in (Num, Sym, Call):
        if t is Num and (e.value < 0):
            return _PREC["neg"]
        return _PREC["atom"]
    if t is Neg:
        return _PREC["neg"]
    if t is Pow:
        return _PREC["pow"]
    if t in (Mul, Div):
        return _PREC["mul"]
    return _PREC["add"]


def _wrap(e, parent_prec, strict=False):
    s = to_str(e)
    p = _prec(e)
    if p < parent_prec or (strict and p == parent_prec):
        return f"({s})"
    return s


def to_str(e):
    """Canonical text form; parse(to_str(e)) evaluates identically to e."""
    t = type(e)
    if t is Num:
        v = e.value
        if isinstance(v, Fraction):
            if v.denominator == 1:
                return str(v.numerator)
            return f"{v.numerator}/{v.denominator}"
        return repr(v)
    if t is Sym:
        return e.name
    if t is Add:
        return f"{_wrap(e.a, 1)} + {_wrap(e.b, 1)}"
    if t is Sub:
        return f"{_wrap(e.a, 1)} - {_wrap(e.b, 1, strict=True)}"
    if t is Mul:
        return f"{_wrap(e.a, 2)}*{_wrap(e.b, 2)}"
    if t is Div:
        return f"{_wrap(e.a, 2)}/{_wrap(e.b, 2, strict=True)}"
    if t is Neg:
        return f"-{_wrap(e.a, 3, strict=True)}"
    if t is Pow:
        return f"{_wrap(e.a, 4, strict=True)}^{_wrap(e.b, 4)}"
    if t is Call:
        return f"{e.fn}({to_str(e.a)})"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# symbols / substitution

def free_symbols(e):
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        t = type(node)
        if t is Sym:
            out.add(node.name)
        elif t in (Neg, Call):
            stack.append(node.a)
        elif t is not Num:
            stack.append(node.a)
            stack.append(node.b)
    return out


def substitute(e, bindings):
    """Replace symbols by expressions/numbers per dict name -> Expr|number."""
    t = type(e)
    if t is Num:
        return e
    if t is Sym:
        if e.name in bindings:
            return _coerce(bindings[e.name])
        return e
    if t is Neg:
        return Neg(substitute(e.a, bindings))
    if t is Call:
        return Call(e.fn, substitute(e.a, bindings))
    return t(substitute(e.a, bindings), substitute(e.b, bindings))


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e, var):
    """Exact partial derivative of e with respect to the symbol named var."""
    if isinstance(var, Sym):
        var = var.name
    return simplify(_diff(e, var))


def _diff(e, var):
    t = type(e)
    if t is Num:
        return Num(Fraction(0))
    if t is Sym:
        return Num(Fraction(1)) if e.name == var else Num(Fraction(0))
    if t is Add:
        return Add(_diff(e.a, var), _diff(e.b, var))
    if t is Sub:
        return Sub(_diff(e.a, var), _diff(e.b, var))
    if t is Neg:
        return Neg(_diff(e.a, var))
    if t is Mul:
        return Add(Mul(_diff(e.a, var), e.b), Mul(e.a, _diff(e.b, var)))
    if t is Div:
        num = Sub(Mul(_diff(e.a, var), e.b), Mul(e.a, _diff(e.b, var)))
        return Div(num, Pow(e.b, Num(Fraction(2))))
    if t is Pow:
        base, expo = e.a, e.b
        if not free_symbols(expo):
            # d(u^c) = c u^(c-1) u'
            c = expo
            return Mul(Mul(c, Pow(base, Sub(c, Num(Fraction(1))))), _diff(base, var))
        # general: u^v (v' ln u + v u'/u)
        term = Add(Mul(_diff(expo, var), Call("log", base)),
                   Div(Mul(expo, _diff(base, var)), base))
        return Mul(e, term)
    if t is Call:
        inner = _diff(e.a, var)
        fn = e.fn
        if fn == "sin":
            outer = Call("cos", e.a)
        elif fn == "cos":
            outer = Neg(Call("sin", e.a))
        elif fn == "tan":
            outer = Div(Num(Fraction(1)), Pow(Call("cos", e.a), Num(Fraction(2))))
        elif fn == "exp":
            outer = e
        elif fn == "log":
            outer = Div(Num(Fraction(1)), e.a)
        elif fn == "sqrt":
            outer = Div(Num(Fraction(1)), Mul(Num(Fraction(2)), e))
        else:  # pragma: no cover
            raise ExprError(f"no derivative rule for {fn}")
        return Mul(outer, inner)
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# simplification: constant folding plus a few safe identities

def _num(e):
    return type(e) is Num


def _is_const(e, v):
    return type(e) is Num and e.value == v


def simplify(e):
    t = type(e)
    if t in (Num, Sym):
        return e
    if t is Neg:
        a = simplify(e.a)
        if _num(a):
            return Num(-a.value)
        if type(a) is Neg:
            return a.a
        return Neg(a)
    if t is Call:
        a = simplify(e.a)
        if _num(a) and e.fn == "sqrt" and isinstance(a.value, Fraction) and a.value >= 0:
            num_root = math.isqrt(a.value.numerator)
            den_root = math.isqrt(a.value.denominator)
            if num_root * num_root == a.value.numerator and den_root * den_root == a.value.denominator:
                return Num(Fraction(num_root, den_root))
        if _is_const(a, 0) and e.fn in ("sin", "tan"):
            return Num(Fraction(0))
        if _is_const(a, 0) and e.fn == "cos":
            return Num(Fraction(1))
        if _is_const(a, 0) and e.fn == "exp":
            return Num(Fraction(1))
        if _is_const(a, 1) and e.fn == "log":
            return Num(Fraction(0))
        return Call(e.fn, a)
    a = simplify(e.a)
    b = simplify(e.b)
    if t is Add:
        if _is_const(a, 0):
            return b
        if _is_const(b, 0):
            return a
        if _num(a) and _num(b):
            return Num(a.value + b.value)
        pyth = _pythagorean(a, b)
        if pyth is not None:
            return pyth
        return Add(a, b)
    if t is Sub:
        if _is_const(b, 0):
            return a
        if _num(a) and _num(b):
            return Num(a.value - b.value)
        if _is_const(a, 0):
            return simplify(Neg(b))
        if _key(a) == _key(b):
            return Num(Fraction(0))
        return Sub(a, b)
    if t is Mul:
        if _is_const(a, 0) or _is_const(b, 0):
            return Num(Fraction(0))
        if _is_const(a, 1):
            return b
        if _is_const(b, 1):
            return a
        if _num(a) and _num(b):
            return Num(a.value * b.value)
        if _is_const(a, -1):
            return simplify(Neg(b))
        if _is_const(b, -1):
            return simplify(Neg(a))
        return Mul(a, b)
    if t is Div:
        if _is_const(b, 1):
            return a
        if _is_const(a, 0) and not _is_const(b, 0):
            return Num(Fraction(0))
        if _num(a) and _num(b) and not _is_const(b, 0):
            if isinstance(a.value, Fraction) and isinstance(b.value, Fraction):
                return Num(a.value / b.value)
        return Div(a, b)
    if t is Pow:
        if _is_const(b, 0):
            return Num(Fraction(1))
        if _is_const(b, 1):
            return a
        if _num(a) and _num(b) and isinstance(b.value, Fraction) and b.value.denominator == 1:
            p = b.value.numerator
            if isinstance(a.value, Fraction) and (p >= 0 or a.value != 0):
                return Num(a.value ** p)
        return Pow(a, b)
    raise TypeError(f"not an Expr: {e!r}")


def _pythagorean(a, b):
    """Recognize sin(u)^2 + cos(u)^2 -> 1."""
    def square_of(e):
        if type(e) is Pow and _is_const(e.b, 2) and type(e.a) is Call:
            return e.a
        return None

    sa, sb = square_of(a), square_of(b)
    if sa is None or sb is None:
        return None
    fns = {sa.fn, sb.fn}
    if fns == {"sin", "cos"} and _key(sa.a) == _key(sb.a):
        return Num(Fraction(1))
    return None


# ---------------------------------------------------------------------------
# compilation to fast python callables

_MATH_ENV = {
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
}


def _emit(e, names):
    t = type(e)
    if t is Num:
        v = e.value
        return repr(float(v))
    if t is Sym:
        if e.name not in names:
            raise ExprError(f"unbound symbol {e.name!r}")
        return names[e.name]
    if t is Add:
        return f"({_emit(e.a, names)} + {_emit(e.b, names)})"
    if t is Sub:
        return f"({_emit(e.a, names)} - {_emit(e.b, names)})"
    if t is Mul:
        return f"({_emit(e.a, names)} * {_emit(e.b, names)})"
    if t is Div:
        return f"({_emit(e.a, names)} / {_emit(e.b, names)})"
    if t is Neg:
        return f"(-{_emit(e.a, names)})"
    if t is Pow:
        if type(e.b) is Num and isinstance(e.b.value, Fraction) and e.b.value.denominator == 1:
            return f"({_emit(e.a, names)} ** {int(e.b.value)})"
        return f"({_emit(e.a, names)} ** {_emit(e.b, names)})"
    if t is Call:
        return f"{e.fn}({_emit(e.a, names)})"
    raise TypeError(f"not an Expr: {e!r}")


def compile_exprs(exprs, coords, params=None):
    """Compile a flat list of Exprs into one callable point -> list of floats.

    coords: ordered coordinate names, bound positionally from the argument.
    params: dict of parameter name -> value, baked in at compile time.
    """
    exprs = list(exprs)
    params = dict(params or {})
    names = {}
    for idx, c in enumerate(coords):
        names[c] = f"_x[{idx}]"
    env = dict(_MATH_ENV)
    for pname, pval in params.items():
        if pname in names:
            raise ExprError(f"parameter {pname!r} shadows a coordinate")
        key = f"_p_{pname}"
        names[pname] = key
        env[key] = float(pval)
    body = ", ".join(_emit(simplify(e), names) for e in exprs)
    src = f"def _compiled(_x):\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    scope = dict(env)
    exec(src, scope)
    fn = scope["_compiled"]

    def evaluate(point):
        try:
            out = fn(point)
        except (ValueError, ZeroDivisionError, OverflowError) as err:
            raise ExprEvalError(f"expression undefined at {list(point)}: {err}") from None
        for v in out:
            if not math.isfinite(v):
                raise ExprEvalError(f"expression not finite at {list(point)}")
        return out

    return evaluate


def evaluate(e, bindings):
    """Evaluate a single Expr with a dict of symbol values."""
    names = sorted(free_symbols(e))
    fn = compile_exprs([e], names)
    try:
        point = [float(bindings[n]) for n in names]
    except KeyError as err:
        raise ExprError(f"missing binding for symbol {err.args[0]!r}") from None
    return fn(point)[0]

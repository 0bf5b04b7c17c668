"""Formula parsing and design-matrix construction for additive predictors.

Grammar::

    formula := "~" term ("+" term)*
    term    := "1"
             | name                                   linear effect
             | "s(" name ["," "k=" int] ["," "lambda=" real] ")"
             | "lasso(" name "," "lambda=" real ")"
             | net "(" name ("," name)* ")"            deep network term

``s()`` additionally accepts ``degree=`` and ``order=`` keywords.
Whitespace between tokens is ignored.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .exceptions import DataError, DimensionError, FormulaParseError, SpecError

_RESERVED = {"s", "lasso"}


@dataclass(frozen=True)
class Intercept:
    def label(self) -> str:
        return "(Intercept)"

    def render(self) -> str:
        return "1"


@dataclass(frozen=True)
class Linear:
    var: str

    def label(self) -> str:
        return self.var

    def render(self) -> str:
        return self.var


@dataclass(frozen=True)
class Smooth:
    var: str
    n_basis: int = 10
    degree: int = 3
    penalty_order: int = 2
    lam: float = 1.0

    def __post_init__(self):
        if self.degree < 1:
            raise SpecError(f"s({self.var}): degree must be >= 1")
        if self.n_basis < self.degree + 2:
            raise SpecError(f"s({self.var}): k must be >= degree + 2")
        if self.penalty_order not in (1, 2):
            raise SpecError(f"s({self.var}): penalty order must be 1 or 2")
        if not self.lam >= 0:
            raise SpecError(f"s({self.var}): lambda must be >= 0")

    def label(self) -> str:
        return f"s({self.var})"

    def render(self) -> str:
        parts = [self.var, f"k={self.n_basis}"]
        if self.degree != 3:
            parts.append(f"degree={self.degree}")
        if self.penalty_order != 2:
            parts.append(f"order={self.penalty_order}")
        parts.append(f"lambda={float(self.lam)!r}")
        return f"s({','.join(parts)})"


@dataclass(frozen=True)
class Lasso:
    var: str
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise SpecError(f"lasso({self.var}): lambda must be >= 0")

    def label(self) -> str:
        return f"lasso({self.var})"

    def render(self) -> str:
        return f"lasso({self.var},lambda={float(self.lam)!r})"


@dataclass(frozen=True)
class Deep:
    net: str
    vars: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        if not self.vars:
            raise SpecError(f"deep term {self.net}() needs at least one variable")

    def label(self) -> str:
        return self.render()

    def render(self) -> str:
        return f"{self.net}({','.join(self.vars)})"


Term = Union[Intercept, Linear, Smooth, Lasso, Deep]


@dataclass(frozen=True)
class Formula:
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if sum(isinstance(t, Intercept) for t in terms) > 1:
            raise SpecError("formula has more than one intercept")
        linear = [t.var for t in terms if isinstance(t, Linear)]
        if len(set(linear)) != len(linear):
            raise SpecError("formula repeats a linear term")

    @property
    def variables(self) -> list[str]:
        out = []
        for t in self.terms:
            names = t.vars if isinstance(t, Deep) else (getattr(t, "var", None),)
            out.extend(n for n in names if n and n not in out)
        return out

    @property
    def deep_terms(self) -> list[Deep]:
        return [t for t in self.terms if isinstance(t, Deep)]

    @property
    def has_intercept(self) -> bool:
        return any(isinstance(t, Intercept) for t in self.terms)

    def __str__(self):
        return render(self)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)|(?P<op>[~+(),=]))"
)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                bad = len(text) - len(text[pos:].lstrip())
                raise FormulaParseError(f"unexpected character {text[bad]!r}", text, bad)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "", len(self.text))

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _expect(self, kind, value=None):
        tok = self._next()
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise FormulaParseError(f"expected {want!r}, got {got!r}", self.text, tok[2])
        return tok

    def parse(self) -> Formula:
        self._expect("op", "~")
        terms = [self._term()]
        while self._peek()[:2] == ("op", "+"):
            self._next()
            terms.append(self._term())
        tok = self._peek()
        if tok[0] != "end":
            raise FormulaParseError(f"unexpected {tok[1]!r}", self.text, tok[2])
        try:
            return Formula(tuple(terms))
        except SpecError as err:
            raise FormulaParseError(str(err), self.text, 0) from None

    def _term(self):
        kind, value, pos = self._next()
        if kind == "num":
            if value != "1":
                raise FormulaParseError(f"only '1' may appear as a number term, got {value!r}",
                                        self.text, pos)
            return Intercept()
        if kind != "name":
            raise FormulaParseError(f"expected a term, got {value or 'end of input'!r}",
                                    self.text, pos)
        if self._peek()[:2] != ("op", "("):
            if value in _RESERVED:
                raise FormulaParseError(f"{value!r} is reserved", self.text, pos)
            return Linear(value)
        self._next()
        try:
            if value == "s":
                return self._smooth(pos)
            if value == "lasso":
                return self._lasso(pos)
        except FormulaParseError:
            raise
        except SpecError as err:
            raise FormulaParseError(str(err), self.text, pos) from None
        names = [self._expect("name")[1]]
        while self._peek()[:2] == ("op", ","):
            self._next()
            names.append(self._expect("name")[1])
        self._expect("op", ")")
        return Deep(value, tuple(names))

    def _keywords(self):
        kw = {}
        while self._peek()[:2] == ("op", ","):
            self._next()
            _, key, kpos = self._expect("name")
            self._expect("op", "=")
            _, val, vpos = self._expect("num")
            if key in kw:
                raise FormulaParseError(f"repeated keyword {key!r}", self.text, kpos)
            kw[key] = (val, vpos, kpos)
        self._expect("op", ")")
        return kw

    def _int(self, val, pos):
        try:
            return int(val)
        except ValueError:
            raise FormulaParseError(f"expected an integer, got {val!r}", self.text, pos) from None

    def _smooth(self, pos):
        var = self._expect("name")[1]
        kw = self._keywords()
        args = {}
        for key, (val, vpos, kpos) in kw.items():
            if key == "k":
                args["n_basis"] = self._int(val, vpos)
            elif key == "degree":
                args["degree"] = self._int(val, vpos)
            elif key == "order":
                args["penalty_order"] = self._int(val, vpos)
            elif key == "lambda":
                args["lam"] = float(val)
            else:
                raise FormulaParseError(f"unknown keyword {key!r} for s()", self.text, kpos)
        return Smooth(var, **args)

    def _lasso(self, pos):
        var = self._expect("name")[1]
        kw = self._keywords()
        if set(kw) != {"lambda"}:
            raise FormulaParseError("lasso() takes exactly one keyword, lambda=", self.text, pos)
        return Lasso(var, float(kw["lambda"][0]))


def parse_formula(text: str) -> Formula:
    """Parse a formula string such as ``"~ 1 + x + s(z,k=8,lambda=0.5)"``."""
    if isinstance(text, Formula):
        return text
    return _Parser(str(text)).parse()


def render(formula: Formula) -> str:
    """Inverse of :func:`parse_formula`."""
    return "~" + " + ".join(t.render() for t in formula.terms)


def augment_knots(breakpoints, degree: int) -> np.ndarray:
    """Repeat each boundary breakpoint ``degree`` extra times."""
    b = np.asarray(breakpoints, dtype=float)
    return np.concatenate([np.repeat(b[0], degree), b, np.repeat(b[-1], degree)])


def bspline_design(x, breakpoints, degree: int) -> np.ndarray:
    """B-spline basis matrix via the Cox-de Boor recursion.

    Parameters
    ----------
    x : array_like, shape (n,)
        Evaluation points in ``[breakpoints[0], breakpoints[-1]]``; values
        outside by at most ``1e-12`` are clamped.
    breakpoints : array_like, shape (r,)
        Strictly increasing breakpoints; the boundary ones are repeated
        ``degree`` times to form the clamped knot vector.
    degree : int

    Returns
    -------
    ndarray, shape (n, r + degree - 1)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.asarray(breakpoints, dtype=float)
    if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
        raise DimensionError("breakpoints must be strictly increasing with at least 2 entries")
    lo, hi = b[0], b[-1]
    if np.any((x < lo - 1e-12) | (x > hi + 1e-12)) or np.any(np.isnan(x)):
        raise DimensionError(f"x outside the knot range [{lo}, {hi}]")
    x = np.clip(x, lo, hi)
    t = augment_knots(b, degree)
    n_basis = len(t) - degree - 1
    # interval index: t[j] <= x < t[j+1]; right end belongs to the last real interval
    j = np.searchsorted(t, x, side="right") - 1
    j = np.clip(j, degree, n_basis - 1)
    n = x.size
    # de Boor triangle: values of the degree+1 nonzero bases at each x
    vals = np.zeros((n, degree + 1))
    vals[:, 0] = 1.0
    left = np.empty((n, degree + 1))
    right = np.empty((n, degree + 1))
    for d in range(1, degree + 1):
        left[:, d] = x - t[j + 1 - d]
        right[:, d] = t[j + d] - x
        saved = np.zeros(n)
        for r in range(d):
            denom = right[:, r + 1] + left[:, d - r]
            temp = vals[:, r] / denom
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, d - r] * temp
        vals[:, d] = saved
    out = np.zeros((n, n_basis))
    rows = np.arange(n)
    for r in range(degree + 1):
        out[rows, j - degree + r] = vals[:, r]
    return out


def bspline_basis(x: float, knots, degree: int) -> np.ndarray:
    """Values of all B-spline basis functions at a single point ``x``.

    ``knots`` are the breakpoints before boundary augmentation, so e.g.
    ``bspline_basis(0.25, [0, 1, 2], 1)`` gives the three hat functions
    ``(0.75, 0.25, 0)``.
    """
    return bspline_design([x], knots, degree)[0]


def difference_penalty(n_basis: int, order: int) -> np.ndarray:
    """P-spline penalty ``D.T @ D`` with ``D`` the ``order``-th difference matrix."""
    if order < 1 or n_basis <= order:
        raise DimensionError(f"difference penalty needs n_basis > order >= 1, "
                             f"got n_basis={n_basis}, order={order}")
    d = np.diff(np.eye(n_basis), n=order, axis=0)
    return d.T @ d


def smooth_breakpoints(term: Smooth, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise DataError(f"s({term.var}): variable has no spread (min == max == {lo})")
    return np.linspace(lo, hi, term.n_basis - term.degree + 1)


@dataclass
class DesignBlock:
    """Design columns of one non-deep term with its quadratic penalty."""

    matrix: np.ndarray
    penalty: np.ndarray
    lam: float
    term: object

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


@dataclass
class DeepInput:
    term: Deep
    matrix: np.ndarray = field(repr=False)


def get_column(data, name: str) -> np.ndarray:
    """Fetch a numeric column from a mapping-like dataset."""
    try:
        col = data[name]
    except (KeyError, IndexError, ValueError):
        raise DataError(f"missing column {name!r}") from None
    try:
        arr = np.asarray(col, dtype=float)
    except (TypeError, ValueError):
        raise DataError(f"column {name!r} is not numeric") from None
    if arr.ndim != 1:
        raise DataError(f"column {name!r} must be one-dimensional")
    if np.any(np.isnan(arr)):
        raise DataError(f"column {name!r} contains NaN")
    return arr


def variable_ranges(formulas, data) -> dict[str, tuple[float, float]]:
    """Observed ``(min, max)`` of every variable that enters a smooth term."""
    out = {}
    for f in formulas:
        for t in f.terms:
            if isinstance(t, Smooth) and t.var not in out:
                x = get_column(data, t.var)
                out[t.var] = (float(x.min()), float(x.max()))
    return out


def build_design(formula: Formula, data, ranges=None):
    """Design blocks and deep-term inputs for ``formula`` on ``data``.

    ``ranges`` fixes the knot range of smooth terms (training ranges when
    predicting on new data); smooth inputs are clamped to it.  Returns
    ``(blocks, deep_inputs)``.
    """
    formula = parse_formula(formula)
    ranges = dict(ranges or {})
    n = None
    blocks, deep = [], []

    def col(name):
        nonlocal n
        x = get_column(data, name)
        if n is not None and len(x) != n:
            raise DataError(f"column {name!r} has length {len(x)}, expected {n}")
        n = len(x)
        return x

    for t in formula.terms:
        if isinstance(t, Deep):
            deep.append(DeepInput(t, np.column_stack([col(v) for v in t.vars])))
        elif isinstance(t, (Linear, Lasso)):
            x = col(t.var)
            lam = t.lam if isinstance(t, Lasso) else 0.0
            blocks.append(DesignBlock(x[:, None], np.zeros((1, 1)), lam, t))
        elif isinstance(t, Smooth):
            x = col(t.var)
            lo, hi = ranges.get(t.var, (float(x.min()), float(x.max())))
            bp = smooth_breakpoints(t, lo, hi)
            mat = bspline_design(np.clip(x, lo, hi), bp, t.degree)
            pen = difference_penalty(t.n_basis, t.penalty_order)
            blocks.append(DesignBlock(mat, pen, float(t.lam), t))
    if n is None:
        n = _infer_rows(data)
    for i, t in enumerate(formula.terms):
        if isinstance(t, Intercept):
            blocks.insert(_block_position(formula, i), DesignBlock(
                np.ones((n, 1)), np.zeros((1, 1)), 0.0, t))
    return blocks, deep


def _block_position(formula, index):
    return sum(not isinstance(t, Deep) for t in formula.terms[:index])


def _infer_rows(data) -> int:
    if hasattr(data, "n_rows"):
        return data.n_rows
    lengths = {len(np.asarray(v)) for v in data.values()} if isinstance(data, Mapping) \
        else {len(data)}
    if len(lengths) != 1:
        raise DataError("cannot determine the number of rows")
    return lengths.pop()


def evaluate_predictor(blocks, coefficients, deep_outputs=()) -> np.ndarray:
    """Additive predictor: sum of ``block @ beta`` plus the deep-term outputs.

    ``coefficients`` is either a flat vector covering all blocks in order or
    one vector per block.
    """
    widths = [b.width for b in blocks]
    if np.ndim(coefficients) == 1 and not isinstance(coefficients, (list, tuple)):
        flat = np.asarray(coefficients, dtype=float)
        if flat.size != sum(widths):
            raise DimensionError(f"expected {sum(widths)} coefficients, got {flat.size}")
        segments = np.split(flat, np.cumsum(widths)[:-1]) if blocks else []
    else:
        segments = [np.atleast_1d(np.asarray(c, dtype=float)) for c in coefficients]
        if len(segments) != len(blocks):
            raise DimensionError(f"expected {len(blocks)} coefficient sets, got {len(segments)}")
    n = blocks[0].matrix.shape[0] if blocks else len(np.asarray(deep_outputs[0]))
    eta = np.zeros(n)
    for b, beta in zip(blocks, segments):
        if beta.size != b.width:
            raise DimensionError(f"term {b.term.label()} needs {b.width} coefficients, "
                                 f"got {beta.size}")
        eta += b.matrix @ beta
    for out in deep_outputs:
        out = np.asarray(out, dtype=float).reshape(-1)
        if out.size != n:
            raise DimensionError(f"deep output has length {out.size}, expected {n}")
        eta += out
    return eta

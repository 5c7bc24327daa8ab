"""Sparse multivariate polynomials over named variable blocks.

Variables live in a :class:`VariableSpace` made of ordered blocks (time,
state, control).  Exponent vectors are plain integer tuples over the global
variable index; monomial order is graded lexicographic (total degree first,
then lexicographic with earlier variables ranked higher), which is the single
canonical order used everywhere downstream (moment vectors, matrix rows,
constraint assembly).
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass

import numpy as np

BLOCK_NAMES = ("time", "state", "control")


@dataclass(frozen=True)
class VariableSpace:
    """Ordered variable blocks with stable global indices."""

    blocks: tuple[tuple[str, int], ...]

    def __post_init__(self):
        names = [name for name, _ in self.blocks]
        if not self.blocks:
            raise ValueError("variable space needs at least one block")
        for name, dim in self.blocks:
            if name not in BLOCK_NAMES:
                raise ValueError(f"unknown block name {name!r}")
            if dim < 1:
                raise ValueError(f"block {name!r} must have positive dimension")
        if len(set(names)) != len(names):
            raise ValueError("duplicate block names")
        order = [BLOCK_NAMES.index(n) for n in names]
        if order != sorted(order):
            raise ValueError("blocks must be ordered time, state, control")
        if self.dim("time") > 1:
            raise ValueError("time block must be one-dimensional")

    @staticmethod
    def for_control_problem(state_dim: int, control_dim: int = 0) -> "VariableSpace":
        blocks = [("time", 1), ("state", state_dim)]
        if control_dim:
            blocks.append(("control", control_dim))
        return VariableSpace(tuple(blocks))

    @staticmethod
    def state_only(state_dim: int) -> "VariableSpace":
        return VariableSpace((("state", state_dim),))

    @property
    def n_total(self) -> int:
        return sum(dim for _, dim in self.blocks)

    def has_block(self, name: str) -> bool:
        return any(n == name for n, _ in self.blocks)

    def dim(self, name: str) -> int:
        for n, d in self.blocks:
            if n == name:
                return d
        return 0

    def offset(self, name: str) -> int:
        off = 0
        for n, d in self.blocks:
            if n == name:
                return off
            off += d
        raise KeyError(f"no block {name!r}")

    def indices(self, name: str) -> range:
        off = self.offset(name)
        return range(off, off + self.dim(name))

    def var_name(self, idx: int) -> str:
        off = 0
        for n, d in self.blocks:
            if idx < off + d:
                local = idx - off
                if n == "time":
                    return "t"
                return ("x" if n == "state" else "u") + str(local + 1)
            off += d
        raise IndexError(f"variable index {idx} out of range")

    def var_names(self) -> list[str]:
        return [self.var_name(i) for i in range(self.n_total)]

    def name_to_index(self) -> dict[str, int]:
        return {self.var_name(i): i for i in range(self.n_total)}


def grlex_key(exponent: tuple[int, ...]):
    """Sort key for graded lexicographic order (ascending)."""
    return (sum(exponent), tuple(-e for e in exponent))


def _compositions(total: int, positions: tuple[int, ...], n_total: int):
    """Exponent tuples of given total degree on the given positions,
    descending lexicographically (matching grlex within one degree)."""
    if not positions:
        if total == 0:
            yield (0,) * n_total
        return
    base = [0] * n_total
    idx = positions[0]
    rest = positions[1:]
    for e in range(total, -1, -1):
        for tail in _compositions(total - e, rest, n_total):
            out = list(tail)
            out[idx] = e
            yield tuple(out)


@functools.lru_cache(maxsize=None)
def monomial_basis(
    space: VariableSpace,
    max_degree: int,
    blocks: tuple[str, ...] | None = None,
) -> tuple[tuple[int, ...], ...]:
    """All exponent tuples of degree <= max_degree, graded-lex sorted.

    `blocks` restricts the support to a subset of blocks (other exponents
    stay zero).  Length is C(n_sub + max_degree, max_degree).
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if blocks is None:
        positions = tuple(range(space.n_total))
    else:
        for b in blocks:
            if not space.has_block(b):
                raise ValueError(f"space has no block {b!r}")
        positions = tuple(i for b in blocks for i in space.indices(b))
        positions = tuple(sorted(positions))
    out = []
    for deg in range(max_degree + 1):
        out.extend(_compositions(deg, positions, space.n_total))
    return tuple(out)


def basis_size(n_vars: int, max_degree: int) -> int:
    return math.comb(n_vars + max_degree, max_degree)


class Polynomial:
    """Sparse polynomial: exponent tuple -> float coefficient.

    Canonical form stores no exact-zero coefficients and keeps terms in
    graded-lex order, so iteration (and therefore evaluation and assembly)
    is deterministic.  The zero polynomial has an empty term map.
    """

    __slots__ = ("space", "terms")

    def __init__(self, space: VariableSpace, terms=None):
        self.space = space
        clean = {}
        if terms:
            n = space.n_total
            for exp, coeff in terms.items():
                exp = tuple(int(e) for e in exp)
                if len(exp) != n:
                    raise ValueError("exponent length does not match space")
                if any(e < 0 for e in exp):
                    raise ValueError("negative exponent")
                c = float(coeff)
                if c != 0.0:
                    clean[exp] = clean.get(exp, 0.0) + c
            clean = {e: c for e, c in clean.items() if c != 0.0}
        self.terms = dict(sorted(clean.items(), key=lambda kv: grlex_key(kv[0])))

    # ---- constructors -------------------------------------------------
    @staticmethod
    def zero(space: VariableSpace) -> "Polynomial":
        return Polynomial(space, {})

    @staticmethod
    def constant(space: VariableSpace, value: float) -> "Polynomial":
        return Polynomial(space, {(0,) * space.n_total: value})

    @staticmethod
    def monomial(space: VariableSpace, exponent, coeff: float = 1.0) -> "Polynomial":
        return Polynomial(space, {tuple(exponent): coeff})

    @staticmethod
    def variable(space: VariableSpace, idx: int) -> "Polynomial":
        exp = [0] * space.n_total
        exp[idx] = 1
        return Polynomial(space, {tuple(exp): 1.0})

    # ---- basic queries -------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0."""
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def degree_in(self, block: str) -> int:
        if not self.terms or not self.space.has_block(block):
            return 0
        sl = self.space.indices(block)
        return max(sum(e[i] for i in sl) for e in self.terms)

    def depends_on(self, idx: int) -> bool:
        return any(e[idx] > 0 for e in self.terms)

    def coefficient(self, exponent) -> float:
        return self.terms.get(tuple(exponent), 0.0)

    # ---- arithmetic ----------------------------------------------------
    def _check_space(self, other: "Polynomial"):
        if self.space != other.space:
            raise ValueError("polynomial spaces do not match")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        self._check_space(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.space, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.space, {e: c * other for e, c in self.terms.items()})
        self._check_space(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.space, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self.space, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and self.space == other.space
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.space, tuple(self.terms.items())))

    # ---- calculus -------------------------------------------------------
    def diff(self, *var_indices: int) -> "Polynomial":
        """Partial derivative w.r.t. one variable index, or several applied
        in sequence (e.g. p.diff(i, j) for a mixed second derivative)."""
        p = self
        for idx in var_indices:
            if not 0 <= idx < p.space.n_total:
                raise IndexError(f"variable index {idx} out of range")
            terms = {}
            for e, c in p.terms.items():
                k = e[idx]
                if k == 0:
                    continue
                e2 = list(e)
                e2[idx] = k - 1
                terms[tuple(e2)] = terms.get(tuple(e2), 0.0) + c * k
            p = Polynomial(p.space, terms)
        return p

    # ---- evaluation ------------------------------------------------------
    def eval(self, point) -> float:
        """Evaluate at one point (length n_total).  Terms are accumulated in
        canonical (graded-lex) order so the summation order is deterministic."""
        pt = np.asarray(point, dtype=float)
        if pt.shape != (self.space.n_total,):
            raise ValueError("point length does not match space")
        total = 0.0
        for e, c in self.terms.items():
            v = c
            for i, k in enumerate(e):
                if k:
                    v *= pt[i] ** k
            total += v
        return total

    def __call__(self, point) -> float:
        return self.eval(point)

    def eval_many(self, points) -> np.ndarray:
        """Vectorized evaluation at an (N, n_total) array of points."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.space.n_total:
            raise ValueError("points must be (N, n_total)")
        out = np.zeros(pts.shape[0])
        for e, c in self.terms.items():
            v = np.full(pts.shape[0], c)
            for i, k in enumerate(e):
                if k:
                    v *= pts[:, i] ** k
            out += v
        return out

    # ---- substitution -----------------------------------------------------
    def substitute_value(self, idx: int, value: float) -> "Polynomial":
        """Replace variable idx by a number (exponent folded into coefficient)."""
        terms = {}
        for e, c in self.terms.items():
            k = e[idx]
            e2 = list(e)
            e2[idx] = 0
            key = tuple(e2)
            terms[key] = terms.get(key, 0.0) + c * value**k
        return Polynomial(self.space, terms)

    def substitute_affine(self, offsets, scales) -> "Polynomial":
        """Substitute every variable i by offsets[i] + scales[i] * x_i."""
        off = np.asarray(offsets, dtype=float)
        sc = np.asarray(scales, dtype=float)
        n = self.space.n_total
        if off.shape != (n,) or sc.shape != (n,):
            raise ValueError("offset/scale length does not match space")
        out = Polynomial.zero(self.space)
        for e, c in self.terms.items():
            term = Polynomial.constant(self.space, c)
            for i, k in enumerate(e):
                if k == 0:
                    continue
                lin = Polynomial(
                    self.space,
                    {
                        (0,) * n: off[i],
                        tuple(1 if j == i else 0 for j in range(n)): sc[i],
                    },
                )
                term = term * lin**k
            out = out + term
        return out

    def embed(self, target: VariableSpace, index_map) -> "Polynomial":
        """Lift into a bigger space: variable i here becomes index_map[i] there."""
        if isinstance(index_map, dict):
            # iterating a dict would silently yield its keys, not the mapping
            raise TypeError("index_map must be a sequence of destination indices")
        index_map = list(index_map)
        if len(index_map) != self.space.n_total:
            raise ValueError("index_map length does not match space")
        terms = {}
        for e, c in self.terms.items():
            e2 = [0] * target.n_total
            for i, k in enumerate(e):
                e2[index_map[i]] += k
            terms[tuple(e2)] = terms.get(tuple(e2), 0.0) + c
        return Polynomial(target, terms)

    # ---- text form ---------------------------------------------------------
    def text(self) -> str:
        """Canonical text form: terms `coeff * v^k ...` joined by ` + `."""
        if not self.terms:
            return "0"
        names = self.space.var_names()
        parts = []
        for e, c in self.terms.items():
            factors = []
            for i, k in enumerate(e):
                if k == 1:
                    factors.append(names[i])
                elif k > 1:
                    factors.append(f"{names[i]}^{k}")
            coeff = f"{c:.12g}"
            parts.append(f"{coeff} * {' '.join(factors)}" if factors else coeff)
        return " + ".join(parts)

    def __str__(self):
        return self.text()

    def __repr__(self):
        return f"Polynomial({self.text()!r})"

    @staticmethod
    def parse(source: str, space: VariableSpace) -> "Polynomial":
        return parse_polynomial(source, space)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z]\w*)"
    r"|(?P<op>[*^+-]))"
)


def parse_polynomial(source: str, space: VariableSpace) -> Polynomial:
    """Parse the canonical polynomial text form.

    Grammar: terms joined by `+` (or a leading `-` opening a negated term);
    each term is an optional coefficient and monomial factors `var^exp`
    separated by `*` or whitespace.  Raises ValueError with the offending
    fragment on anything else.
    """
    if not isinstance(source, str):
        raise ValueError("polynomial source must be a string")
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad polynomial syntax near {source[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
    if not tokens:
        raise ValueError("empty polynomial text")

    name_map = space.name_to_index()
    n = space.n_total
    terms: dict[tuple[int, ...], float] = {}

    def flush(coeff, exps, seen_any):
        if not seen_any:
            raise ValueError("empty term in polynomial text")
        key = tuple(exps)
        terms[key] = terms.get(key, 0.0) + coeff

    coeff = 1.0
    exps = [0] * n
    seen_any = False
    sign = 1.0
    expect_factor = False
    i = 0
    while i < len(tokens):
        kind, val = tokens[i]
        if kind == "op" and val in "+-":
            if expect_factor:
                raise ValueError("dangling '*' in polynomial text")
            if seen_any:
                flush(sign * coeff, exps, seen_any)
                coeff, exps, seen_any = 1.0, [0] * n, False
                sign = 1.0
            if val == "-":
                sign = -sign
            i += 1
            continue
        if kind == "op" and val == "*":
            if not seen_any or expect_factor:
                raise ValueError("misplaced '*' in polynomial text")
            expect_factor = True
            i += 1
            continue
        if kind == "num":
            coeff *= float(val)
            seen_any = True
            expect_factor = False
            i += 1
            continue
        if kind == "name":
            if val not in name_map:
                raise ValueError(f"unknown variable {val!r} for this space")
            exp = 1
            if i + 2 < len(tokens) and tokens[i + 1] == ("op", "^"):
                k_kind, k_val = tokens[i + 2]
                if k_kind != "num" or not re.fullmatch(r"\d+", k_val):
                    raise ValueError(f"bad exponent after {val!r}")
                exp = int(k_val)
                i += 2
            exps[name_map[val]] += exp
            seen_any = True
            expect_factor = False
            i += 1
            continue
        raise ValueError(f"unexpected token {val!r} in polynomial text")
    if expect_factor:
        raise ValueError("dangling '*' in polynomial text")
    flush(sign * coeff, exps, seen_any)
    return Polynomial(space, terms)

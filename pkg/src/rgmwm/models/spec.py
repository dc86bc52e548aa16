"""Model specifications and their text form.

Grammar (whitespace is ignored)::

    spec      := component | "sum(" component ("," component)* ")"
    component := name "(" [arg ("," arg)*] ")"
    arg       := key "=" value
    value     := "?" | number | "[" [value ("," value)*] "]"

Components and keys::

    wn(s2)                 white noise, variance s2
    rw(g2)                 random walk, innovation variance g2
    ar1(rho, v2)           AR(1), innovation variance v2
    arma(ar=[..], ma=[..], s2)
    exp(phi, s2)           s2 * exp(-d / phi)
    gauss(phi, s2)         s2 * exp(-(d / phi)**2)

``?`` marks a free parameter; a number fixes it during fitting and gives
its value for simulation. Example: ``sum(ar1(rho=?, v2=?), wn(s2=?))``.
"""

import math
import re
from collections import Counter

import numpy as np

from ..exceptions import InvalidInputError
from .components import ARMA, REGISTRY

_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>[()\[\],=?]))")


def _tokenize(text):
    pos = 0
    out = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise InvalidInputError(f"cannot parse model spec at column {pos + 1}: "
                                    f"{text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None, kind=None):
        tok = self.peek()
        if tok[0] is None or (value and tok[1] != value) or (kind and tok[0] != kind):
            want = value or kind
            raise InvalidInputError(f"model spec: expected {want!r}, got {tok[1]!r}")
        self.i += 1
        return tok[1]

    def value(self):
        kind, tok = self.peek()
        if tok == "?":
            self.take("?")
            return math.nan
        if tok == "[":
            self.take("[")
            vals = []
            if self.peek()[1] != "]":
                vals.append(self.value())
                while self.peek()[1] == ",":
                    self.take(",")
                    vals.append(self.value())
            self.take("]")
            return vals
        return float(self.take(kind="num"))

    def component(self):
        name = self.take(kind="name").lower()
        self.take("(")
        args = {}
        if self.peek()[1] != ")":
            while True:
                key = self.take(kind="name").lower()
                self.take("=")
                args[key] = self.value()
                if self.peek()[1] != ",":
                    break
                self.take(",")
        self.take(")")
        return _build(name, args)

    def spec(self):
        kind, tok = self.peek()
        if tok == "sum" and self.toks[self.i + 1][1] == "(":
            self.take("sum")
            self.take("(")
            comps = [self.component()]
            while self.peek()[1] == ",":
                self.take(",")
                comps.append(self.component())
            self.take(")")
        else:
            comps = [self.component()]
        if self.peek()[0] is not None:
            raise InvalidInputError(f"model spec: trailing input {self.peek()[1]!r}")
        return ModelSpec(comps)


def _build(name, args):
    if name not in REGISTRY:
        raise InvalidInputError(f"unknown model component {name!r}")
    if name == "arma":
        ar = args.pop("ar", [])
        ma = args.pop("ma", [])
        ar = ar if isinstance(ar, list) else [ar]
        ma = ma if isinstance(ma, list) else [ma]
        s2 = args.pop("s2", math.nan)
        if args:
            raise InvalidInputError(f"arma: unknown keys {sorted(args)}")
        return ARMA(len(ar), len(ma), ar + ma + [s2])
    cls = REGISTRY[name]
    unknown = set(args) - set(cls.names)
    if unknown:
        raise InvalidInputError(f"{name}: unknown keys {sorted(unknown)}")
    return cls([args.get(k, math.nan) for k in cls.names])


def _fmt(x):
    return "?" if math.isnan(x) else repr(float(x))


class ModelSpec:
    """Ordered sum of independent latent components.

    ``theta`` is the flattened natural-space parameter vector (``nan`` for
    parameters not yet known); ``free`` marks the parameters to estimate.
    """

    def __init__(self, components):
        components = list(components)
        if not components:
            raise InvalidInputError("a model needs at least one component")
        spatial = {c.spatial for c in components}
        if len(spatial) > 1:
            raise InvalidInputError("spatial and temporal components cannot be mixed")
        self.components = components
        self.spatial = spatial.pop()
        offsets = np.cumsum([0] + [c.n_params for c in components])
        self.blocks = [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    # construction ----------------------------------------------------
    @classmethod
    def parse(cls, text):
        return _Parser(text).spec()

    def to_string(self, theta=None):
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        parts = []
        for comp, blk in zip(self.components, self.blocks):
            v = theta[blk]
            if isinstance(comp, ARMA):
                ar, ma, s2 = comp.split(v)
                parts.append("arma(ar=[{}], ma=[{}], s2={})".format(
                    ", ".join(map(_fmt, ar)), ", ".join(map(_fmt, ma)), _fmt(s2)))
            else:
                args = ", ".join(f"{k}={_fmt(x)}" for k, x in zip(comp.names, v))
                parts.append(f"{comp.kind}({args})")
        if len(parts) == 1:
            return parts[0]
        return "sum(" + ", ".join(parts) + ")"

    def template(self):
        """Same structure with every non-fixed parameter shown as ``?``."""
        theta = np.where(self.free, math.nan, self.theta)
        return self.to_string(theta)

    def __str__(self):
        return self.to_string()

    def __repr__(self):
        return f"ModelSpec.parse({self.to_string()!r})"

    def __eq__(self, other):
        return (isinstance(other, ModelSpec) and self.structure() == other.structure()
                and np.array_equal(self.theta, other.theta, equal_nan=True)
                and np.array_equal(self.free, other.free))

    def __hash__(self):
        return hash((self.structure(), self.to_string()))

    def structure(self):
        return tuple(c.structure() for c in self.components)

    # parameters ------------------------------------------------------
    @property
    def theta(self):
        return np.concatenate([c.values for c in self.components])

    @property
    def free(self):
        return np.concatenate([c.free for c in self.components])

    @property
    def n_params(self):
        return int(sum(c.n_params for c in self.components))

    @property
    def n_free(self):
        return int(self.free.sum())

    @property
    def param_names(self):
        counts = Counter(c.kind for c in self.components)
        seen = Counter()
        names = []
        for c in self.components:
            seen[c.kind] += 1
            suffix = f"_{seen[c.kind]}" if counts[c.kind] > 1 else ""
            names.extend(n + suffix for n in c.names)
        return names

    def bounds(self):
        return [b for c in self.components for b in c.bounds()]

    def with_theta(self, theta, free=None):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InvalidInputError(
                f"theta must have {self.n_params} entries, got {theta.shape}")
        free = self.free if free is None else np.asarray(free, dtype=bool)
        comps = [c.copy(theta[b], free[b]) for c, b in zip(self.components, self.blocks)]
        return ModelSpec(comps)

    def fixed(self):
        """Copy with every parameter marked fixed (used for simulation)."""
        return self.with_theta(self.theta, np.zeros(self.n_params, dtype=bool))

    def check_theta(self, theta=None):
        theta = self.theta if theta is None else np.asarray(theta, dtype=float)
        if np.any(np.isnan(theta)):
            raise InvalidInputError("model has unspecified parameters")
        for c, b in zip(self.components, self.blocks):
            if not c.valid(theta[b]):
                raise InvalidInputError(
                    f"invalid parameters for {c.kind}: {theta[b].tolist()}")
        return theta

    def is_valid(self, theta):
        return all(c.valid(theta[b]) for c, b in zip(self.components, self.blocks))

    def at_bound(self, theta, tol=1e-6):
        return any(c.at_bound(theta[b], tol) for c, b in zip(self.components, self.blocks))

    def to_unbounded(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.concatenate([c.to_unbounded(theta[b])
                               for c, b in zip(self.components, self.blocks)])

    def from_unbounded(self, z):
        z = np.asarray(z, dtype=float)
        return np.concatenate([c.from_unbounded(z[b])
                               for c, b in zip(self.components, self.blocks)])

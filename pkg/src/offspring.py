"""
Offspring Distributions
Generating functions, derivatives, divided differences and sampling for Galton-Watson laws
"""

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import DistributionError

ArrayLike = Union[float, np.ndarray]

# Probability vectors within this distance of 1 are renormalized, others rejected
RENORMALIZE_TOL = 1e-12
# Arguments this far outside [0, 1] are treated as rounding and clipped
DOMAIN_SLACK = 1e-12
# Finite supports up to this degree are stored densely and evaluated by Horner's rule
DENSE_DEGREE_LIMIT = 256


class DistributionKind(str, Enum):
    FINITE = 'finite'
    POISSON = 'poisson'
    GEOMETRIC = 'geometric'
    BINOMIAL = 'binomial'


def _power_divided_difference(k: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    (b**k - a**k) / (b - a) for 0 <= a <= b, one row per exponent in k.

    Differences are formed as a**k * expm1(k*log1p(d/a)) or b**k * -expm1(-k*log1p(d/a))
    so that nearly equal arguments keep full relative accuracy even for k ~ 1e9.
    """
    k = np.asarray(k, dtype=float)[:, None]
    a = np.asarray(a, dtype=float)[None, :]
    b = np.asarray(b, dtype=float)[None, :]
    d = b - a
    with np.errstate(all='ignore'):
        tangent = np.where(k > 0, k * a ** (k - 1), 0.0)
        from_zero = np.where(k > 0, b ** (k - 1), 0.0)
        safe_a = np.where(a > 0, a, 1.0)
        safe_d = np.where(d > 0, d, 1.0)
        kl = k * np.log1p(safe_d / safe_a)
        near = a ** k * np.expm1(kl)
        far = b ** k * -np.expm1(-kl)
        secant = np.where(kl < 1.0, near, far) / safe_d
    return np.where(d > 0, np.where(a > 0, secant, from_zero), tangent)


@dataclass(frozen=True)
class OffspringDistribution:
    """
    An offspring law p with its generating function G(x) = sum p_i x^i.

    FINITE laws are stored as (degrees, weights) pairs so that sparse laws with
    huge degree (p_{K^3} in the counterexample family) stay cheap; the parametric
    kinds keep closed forms for G and G'.
    """

    kind: DistributionKind
    degrees: Tuple[int, ...] = ()
    weights: Tuple[float, ...] = ()
    lam: float = 0.0
    alpha: float = 0.0
    n: int = 0
    p: float = 0.0
    _deg: np.ndarray = field(init=False, repr=False, compare=False)
    _w: np.ndarray = field(init=False, repr=False, compare=False)
    _coeffs: Optional[Tuple[float, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        deg = np.asarray(self.degrees, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        coeffs = None
        if self.kind == DistributionKind.FINITE and deg.size and deg.max() <= DENSE_DEGREE_LIMIT:
            dense = np.zeros(int(deg.max()) + 1)
            dense[deg] = w
            coeffs = tuple(float(c) for c in dense)
        object.__setattr__(self, '_deg', deg)
        object.__setattr__(self, '_w', w)
        object.__setattr__(self, '_coeffs', coeffs)

    # ------------------------------------------------------------------ evaluation

    @staticmethod
    def _check_domain(x: ArrayLike) -> ArrayLike:
        if np.ndim(x) == 0:
            value = float(x)
            if not (-DOMAIN_SLACK <= value <= 1.0 + DOMAIN_SLACK):
                raise DistributionError(f"argument {value!r} outside [0, 1]")
            return min(max(value, 0.0), 1.0)
        arr = np.asarray(x, dtype=float)
        if np.any(arr < -DOMAIN_SLACK) or np.any(arr > 1.0 + DOMAIN_SLACK) or np.any(np.isnan(arr)):
            raise DistributionError("argument array has entries outside [0, 1]")
        return np.clip(arr, 0.0, 1.0)

    def g(self, x: ArrayLike) -> ArrayLike:
        """Generating function G(x)"""
        x = self._check_domain(x)
        scalar = np.ndim(x) == 0
        if self.kind == DistributionKind.FINITE:
            if self._coeffs is not None:
                if scalar:
                    acc = 0.0
                    for c in reversed(self._coeffs):
                        acc = acc * x + c
                    return acc
                return np.polynomial.polynomial.polyval(x, self._coeffs)
            if scalar:
                return math.fsum(w * x ** k for k, w in zip(self.degrees, self.weights))
            return np.power.outer(x, self._deg.astype(float)) @ self._w
        if self.kind == DistributionKind.POISSON:
            return math.exp(-self.lam * (1.0 - x)) if scalar else np.exp(-self.lam * (1.0 - x))
        if self.kind == DistributionKind.GEOMETRIC:
            return (1.0 - self.alpha) / (1.0 - self.alpha * x)
        return (1.0 - self.p + self.p * x) ** self.n

    def g_prime(self, x: ArrayLike) -> ArrayLike:
        """Derivative G'(x)"""
        x = self._check_domain(x)
        scalar = np.ndim(x) == 0
        if self.kind == DistributionKind.FINITE:
            if self._coeffs is not None:
                deriv = [i * c for i, c in enumerate(self._coeffs)][1:] or [0.0]
                if scalar:
                    acc = 0.0
                    for c in reversed(deriv):
                        acc = acc * x + c
                    return acc
                return np.polynomial.polynomial.polyval(x, deriv)
            terms = [(k, w) for k, w in zip(self.degrees, self.weights) if k > 0]
            if scalar:
                return math.fsum(k * w * x ** (k - 1) for k, w in terms)
            out = np.zeros_like(x)
            for k, w in terms:
                out = out + k * w * np.power(x, k - 1)
            return out
        if self.kind == DistributionKind.POISSON:
            return self.lam * (math.exp(-self.lam * (1.0 - x)) if scalar
                               else np.exp(-self.lam * (1.0 - x)))
        if self.kind == DistributionKind.GEOMETRIC:
            return (1.0 - self.alpha) * self.alpha / (1.0 - self.alpha * x) ** 2
        if self.n == 0:
            return 0.0 if scalar else np.zeros_like(x)
        return self.n * self.p * (1.0 - self.p + self.p * x) ** (self.n - 1)

    def f(self, x: ArrayLike) -> ArrayLike:
        """F(x) = 1 - G(x): normal-play map"""
        return 1.0 - self.g(x)

    def h(self, x: ArrayLike) -> ArrayLike:
        """H(x) = 1 - G(x) + p0: misère-play map"""
        return 1.0 - self.g(x) + self.p0

    def divided_difference(self, x: ArrayLike, y: ArrayLike) -> ArrayLike:
        """
        Divided difference G[x, y] = (G(y) - G(x)) / (y - x), equal to G'(x) when x == y.

        Args:
            x: Point(s) in [0, 1]
            y: Point(s) in [0, 1], broadcast against x

        Returns:
            G[x, y] without cancellation, float for scalar input
        """
        scalar = np.ndim(x) == 0 and np.ndim(y) == 0
        xa, ya = np.broadcast_arrays(np.atleast_1d(self._check_domain(x)),
                                     np.atleast_1d(self._check_domain(y)))
        shape = xa.shape
        lo = np.minimum(xa, ya).ravel()
        hi = np.maximum(xa, ya).ravel()

        if self.kind == DistributionKind.FINITE:
            out = np.tensordot(self._w, _power_divided_difference(self._deg, lo, hi), axes=1)
        elif self.kind == DistributionKind.POISSON:
            d = hi - lo
            safe_d = np.where(d > 0, d, 1.0)
            ratio = np.where(d > 0, np.expm1(self.lam * d) / safe_d, self.lam)
            out = np.exp(-self.lam * (1.0 - lo)) * ratio
        elif self.kind == DistributionKind.GEOMETRIC:
            a = self.alpha
            out = (1.0 - a) * a / ((1.0 - a * lo) * (1.0 - a * hi))
        else:
            u = 1.0 - self.p + self.p * lo
            v = 1.0 - self.p + self.p * hi
            out = self.p * _power_divided_difference(np.array([self.n]), u, v)[0]

        out = np.asarray(out, dtype=float).reshape(shape)
        return float(out.ravel()[0]) if scalar else out

    # ------------------------------------------------------------------ moments

    @property
    def p0(self) -> float:
        """Probability of no children"""
        if self.kind == DistributionKind.FINITE:
            return float(self._w[self._deg == 0].sum())
        if self.kind == DistributionKind.POISSON:
            return math.exp(-self.lam)
        if self.kind == DistributionKind.GEOMETRIC:
            return 1.0 - self.alpha
        return (1.0 - self.p) ** self.n

    @property
    def p1(self) -> float:
        """Probability of exactly one child"""
        return float(self.g_prime(0.0))

    def mean(self) -> float:
        """Mean offspring count"""
        if self.kind == DistributionKind.FINITE:
            return math.fsum(k * w for k, w in zip(self.degrees, self.weights))
        if self.kind == DistributionKind.POISSON:
            return self.lam
        if self.kind == DistributionKind.GEOMETRIC:
            return self.alpha / (1.0 - self.alpha)
        return self.n * self.p

    def probability(self, k: int) -> float:
        """Point mass p_k"""
        if k < 0:
            return 0.0
        if self.kind == DistributionKind.FINITE:
            return float(self._w[self._deg == k].sum())
        if self.kind == DistributionKind.POISSON:
            return math.exp(-self.lam + k * math.log(self.lam) - math.lgamma(k + 1)) if self.lam > 0 \
                else float(k == 0)
        if self.kind == DistributionKind.GEOMETRIC:
            return (1.0 - self.alpha) * self.alpha ** k
        if k > self.n:
            return 0.0
        return math.comb(self.n, k) * self.p ** k * (1.0 - self.p) ** (self.n - k)

    @property
    def is_identity_law(self) -> bool:
        """True for the point mass at one child, where F is the reflection 1 - x"""
        return self.kind == DistributionKind.FINITE and tuple(self.degrees) == (1,)

    # ------------------------------------------------------------------ sampling

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw i.i.d. offspring counts"""
        if self.kind == DistributionKind.FINITE:
            if self._deg.size == 1:
                return np.full(size, int(self._deg[0]), dtype=np.int64)
            return rng.choice(self._deg, size=size, p=self._w / self._w.sum())
        if self.kind == DistributionKind.POISSON:
            return rng.poisson(self.lam, size).astype(np.int64)
        if self.kind == DistributionKind.GEOMETRIC:
            return (rng.geometric(1.0 - self.alpha, size) - 1).astype(np.int64)
        return rng.binomial(self.n, self.p, size).astype(np.int64)

    # ------------------------------------------------------------------ literals

    def literal(self) -> str:
        """Canonical literal, accepted by parse_distribution"""
        if self.kind == DistributionKind.FINITE:
            if self._coeffs is not None:
                return 'finite:' + ','.join(f"{c:.17g}" for c in self._coeffs)
            return 'sparse:' + ','.join(f"{k}={w:.17g}" for k, w in zip(self.degrees, self.weights))
        if self.kind == DistributionKind.POISSON:
            return f"poisson:{self.lam:.17g}"
        if self.kind == DistributionKind.GEOMETRIC:
            return f"geometric:{self.alpha:.17g}"
        return f"binomial:{self.n},{self.p:.17g}"

    def __str__(self) -> str:
        return self.literal()


# ---------------------------------------------------------------------- constructors

def finite_sparse(terms: Dict[int, float]) -> OffspringDistribution:
    """
    Finite-support law from a {degree: probability} mapping.

    Sums within 1e-12 of one are renormalized; the largest weight absorbs the
    residual so that G(1) = 1 up to a single rounding.
    """
    items = sorted((int(k), float(w)) for k, w in terms.items())
    if not items:
        raise DistributionError("empty probability vector")
    for k, w in items:
        if k < 0:
            raise DistributionError(f"negative degree {k}")
        if not math.isfinite(w) or w < -1e-15:
            raise DistributionError(f"invalid probability {w!r} at degree {k}")
    items = [(k, max(w, 0.0)) for k, w in items if w > 0.0] or [(items[0][0], 0.0)]
    total = math.fsum(w for _, w in items)
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise DistributionError(f"probabilities sum to {total!r}, not 1")
    weights = [w / total for _, w in items]
    largest = max(range(len(weights)), key=lambda i: weights[i])
    weights[largest] = 1.0 - math.fsum(w for i, w in enumerate(weights) if i != largest)
    return OffspringDistribution(
        kind=DistributionKind.FINITE,
        degrees=tuple(k for k, _ in items),
        weights=tuple(weights),
    )


def finite(probs: Sequence[float]) -> OffspringDistribution:
    """Finite-support law from the dense vector p0..pd"""
    return finite_sparse({i: w for i, w in enumerate(probs)})


def poisson(lam: float) -> OffspringDistribution:
    if not (math.isfinite(lam) and lam >= 0):
        raise DistributionError(f"Poisson mean must be nonnegative, got {lam!r}")
    return OffspringDistribution(kind=DistributionKind.POISSON, lam=float(lam))


def geometric(alpha: float) -> OffspringDistribution:
    if not (0.0 <= alpha < 1.0):
        raise DistributionError(f"geometric alpha must lie in [0, 1), got {alpha!r}")
    return OffspringDistribution(kind=DistributionKind.GEOMETRIC, alpha=float(alpha))


def binomial(n: int, p: float) -> OffspringDistribution:
    if int(n) != n or n < 1:
        raise DistributionError(f"binomial n must be a positive integer, got {n!r}")
    if not (0.0 <= p <= 1.0):
        raise DistributionError(f"binomial p must lie in [0, 1], got {p!r}")
    return OffspringDistribution(kind=DistributionKind.BINOMIAL, n=int(n), p=float(p))


def k_family(k: int) -> OffspringDistribution:
    """p0 = p1 = 1/K and p_{K^3} = 1 - 2/K"""
    if k < 3:
        raise DistributionError("K must be at least 3")
    return finite_sparse({0: 1.0 / k, 1: 1.0 / k, k ** 3: 1.0 - 2.0 / k})


def random_distribution(seed: int, max_support: int) -> OffspringDistribution:
    """
    Random law on {0..max_support} from normalized standard-exponential draws

    Args:
        seed: Generator seed; equal seeds give equal laws
        max_support: Largest offspring count

    Returns:
        Finite-support OffspringDistribution
    """
    if max_support < 0:
        raise DistributionError("max_support must be nonnegative")
    draws = np.random.default_rng(seed).standard_exponential(max_support + 1)
    return finite(draws / draws.sum())


# ---------------------------------------------------------------------- families

@dataclass(frozen=True)
class Family:
    """One-parameter family of offspring laws"""

    family_id: str
    lo: float
    hi: float
    n: int = 0
    endpoints: Tuple[OffspringDistribution, ...] = ()

    @property
    def parameter_range(self) -> Tuple[float, float]:
        return self.lo, self.hi

    def at(self, t: float) -> OffspringDistribution:
        """Family member at parameter t"""
        if not (self.lo - DOMAIN_SLACK <= t <= self.hi + DOMAIN_SLACK):
            raise DistributionError(
                f"parameter {t!r} outside [{self.lo}, {self.hi}] for family {self.family_id}"
            )
        t = min(max(float(t), self.lo), self.hi)
        fid = self.family_id
        if fid == 'binary':
            return finite([1.0 - t, 0.0, t])
        if fid == 'poisson':
            return poisson(t)
        if fid == 'geometric':
            return geometric(t)
        if fid.startswith('binomial-'):
            return binomial(self.n, t)
        if fid == 'exotic1':
            return finite_sparse({0: 1.0 - t, 2: 0.5 * t, 10: 0.5 * t})
        if fid == 'exotic2':
            return finite_sparse({0: 1.0 - t, 1: 0.15 * t, 20: 0.85 * t})
        if fid == 'exotic3':
            return finite_sparse({0: 1.0 / 18.0 - t, 1: 2.0 / 3.0, 3: 5.0 / 18.0 + t})
        if fid == 'interp':
            first, second = self.endpoints
            support = set(first.degrees) | set(second.degrees)
            return finite_sparse({
                k: (1.0 - t) * first.probability(k) + t * second.probability(k) for k in support
            })
        raise DistributionError(f"unknown family {fid}")

    def describe(self) -> str:
        if self.family_id == 'interp':
            return f"interp({self.endpoints[0].literal()};{self.endpoints[1].literal()})"
        return self.family_id


_FAMILY_RANGES = {
    'binary': (0.0, 1.0),
    'poisson': (0.0, 50.0),
    'geometric': (0.0, 0.999),
    'exotic1': (0.0, 1.0),
    'exotic2': (0.0, 1.0),
    'exotic3': (-5.0 / 18.0, 1.0 / 18.0),
}


def parse_family(text: str) -> Family:
    """
    Parse a family id: binary, poisson, geometric, binomial-<n>, exotic1..3,
    or interp(<finite literal>;<finite literal>)
    """
    family_id = text.strip()
    if family_id.startswith('family:'):
        family_id = family_id[len('family:'):]
    key = family_id.lower()
    if key in _FAMILY_RANGES:
        lo, hi = _FAMILY_RANGES[key]
        return Family(key, lo, hi)
    match = re.fullmatch(r'binomial-(\d+)', key)
    if match:
        n = int(match.group(1))
        if n < 1:
            raise DistributionError("binomial family needs n >= 1")
        return Family(key, 0.0, 1.0, n=n)
    match = re.fullmatch(r'interp\((.+);(.+)\)', family_id, flags=re.IGNORECASE)
    if match:
        first = parse_distribution(match.group(1))
        second = parse_distribution(match.group(2))
        if first.kind != DistributionKind.FINITE or second.kind != DistributionKind.FINITE:
            raise DistributionError("interp endpoints must be finite-support laws")
        return Family('interp', 0.0, 1.0, endpoints=(first, second))
    raise DistributionError(f"unknown family literal: {text!r}")


def _floats(body: str, literal: str) -> list:
    try:
        return [float(v) for v in body.split(',') if v.strip()]
    except ValueError:
        raise DistributionError(f"malformed distribution literal: {literal!r}") from None


def parse_distribution(text: str) -> OffspringDistribution:
    """
    Parse a distribution literal

    Args:
        text: finite:0.15,0,0.85 | sparse:0=0.5,3=0.5 | poisson:2.5 | geometric:0.4 |
              binomial:3,0.8 | family:binary@0.9

    Returns:
        OffspringDistribution
    """
    literal = text.strip()
    kind, sep, body = literal.partition(':')
    if not sep:
        raise DistributionError(f"malformed distribution literal: {text!r}")
    kind = kind.lower()
    if kind == 'finite':
        return finite(_floats(body, text))
    if kind == 'sparse':
        terms: Dict[int, float] = {}
        try:
            for item in body.split(','):
                k, _, w = item.partition('=')
                terms[int(k)] = terms.get(int(k), 0.0) + float(w)
        except ValueError:
            raise DistributionError(f"malformed distribution literal: {text!r}") from None
        return finite_sparse(terms)
    if kind == 'poisson':
        values = _floats(body, text)
        if len(values) != 1:
            raise DistributionError(f"poisson takes one parameter: {text!r}")
        return poisson(values[0])
    if kind == 'geometric':
        values = _floats(body, text)
        if len(values) != 1:
            raise DistributionError(f"geometric takes one parameter: {text!r}")
        return geometric(values[0])
    if kind == 'binomial':
        values = _floats(body, text)
        if len(values) != 2:
            raise DistributionError(f"binomial takes n,p: {text!r}")
        return binomial(values[0], values[1])
    if kind == 'family':
        name, at, param = body.rpartition('@')
        if not at:
            raise DistributionError(f"family literal needs @t: {text!r}")
        try:
            t = float(param)
        except ValueError:
            raise DistributionError(f"malformed family parameter in {text!r}") from None
        return parse_family(name).at(t)
    raise DistributionError(f"unknown distribution kind {kind!r} in {text!r}")

"""Exact mean AoI / PAoI of a cyclic generate-at-will schedule.

For every source n the inter-success gap S~_n (time from the end of one
successful source-n transmission to the start of the next) is characterised
by its first two moments.  The mean comes in closed form; the second moment
is read off a second-order expansion of the gap's moment generating function
about 0, carried around as :class:`TruncatedMgf` triples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasiblePatternError, InternalInvariantError, ValidationError
from .model import SystemSpec

CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class Pattern:
    """A cyclic schedule: 1-based source indices repeated forever."""

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if not entries:
            raise ValidationError("pattern must contain at least one entry")
        if min(entries) < 1:
            raise ValidationError("pattern entries are 1-based source indices")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def parse(cls, text: str) -> Pattern:
        tokens = [t.strip() for t in text.strip().split(",")]
        entries = []
        for tok in tokens:
            if not tok.isdigit() or int(tok) < 1:
                raise ValidationError(f"invalid pattern token {tok!r}")
            entries.append(int(tok))
        return cls(tuple(entries))

    def format(self) -> str:
        return ",".join(str(e) for e in self.entries)

    def __str__(self) -> str:
        return self.format()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def size(self) -> int:
        return len(self.entries)

    def counts(self, N: int) -> np.ndarray:
        """alpha_n for n = 1..N (sources above N are ignored)."""
        arr = np.asarray(self.entries)
        return np.bincount(arr[arr <= N] - 1, minlength=N)[:N]

    def check_feasible(self, N: int) -> None:
        too_big = sorted({e for e in self.entries if e > N})
        if too_big:
            raise ValidationError(f"pattern references source {too_big[0]} but system has {N} sources")
        missing = [n + 1 for n, a in enumerate(self.counts(N)) if a == 0]
        if missing:
            raise InfeasiblePatternError(missing)

    def rotate(self, shift: int) -> Pattern:
        shift %= self.size
        return Pattern(self.entries[shift:] + self.entries[:shift])

    def as_index_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.int64) - 1


def as_pattern(p) -> Pattern:
    if isinstance(p, Pattern):
        return p
    if isinstance(p, str):
        return Pattern.parse(p)
    return Pattern(tuple(p))


@dataclass(frozen=True)
class TruncatedMgf:
    """G(s) = g0 + g1 s + g2 s^2 + O(s^3).

    For a (sub-)probability mass ``g0`` on a nonnegative variable X the
    coefficients are (g0, g0 E[X], g0 E[X^2] / 2).  Products are truncated
    polynomial products, i.e. convolutions of independent sums.
    """

    g0: float
    g1: float = 0.0
    g2: float = 0.0

    @classmethod
    def from_moments(cls, mean: float, second: float, mass: float = 1.0) -> TruncatedMgf:
        return cls(mass, mass * mean, 0.5 * mass * second)

    @classmethod
    def one(cls) -> TruncatedMgf:
        return cls(1.0, 0.0, 0.0)

    def __mul__(self, other):
        if isinstance(other, TruncatedMgf):
            return TruncatedMgf(
                self.g0 * other.g0,
                self.g0 * other.g1 + self.g1 * other.g0,
                self.g0 * other.g2 + self.g1 * other.g1 + self.g2 * other.g0,
            )
        k = float(other)
        return TruncatedMgf(k * self.g0, k * self.g1, k * self.g2)

    __rmul__ = __mul__

    def __add__(self, other: TruncatedMgf) -> TruncatedMgf:
        return TruncatedMgf(self.g0 + other.g0, self.g1 + other.g1, self.g2 + other.g2)

    def __sub__(self, other: TruncatedMgf) -> TruncatedMgf:
        return TruncatedMgf(self.g0 - other.g0, self.g1 - other.g1, self.g2 - other.g2)

    def __rsub__(self, other):
        return TruncatedMgf(float(other), 0.0, 0.0) - self

    def __pow__(self, j: int) -> TruncatedMgf:
        out = TruncatedMgf.one()
        for _ in range(int(j)):
            out = out * self
        return out

    @property
    def mean(self) -> float:
        """First moment of the normalised variable (g1 / g0)."""
        return self.g1 / self.g0

    @property
    def second_moment(self) -> float:
        return 2.0 * self.g2 / self.g0

    def derivative(self, order: int) -> float:
        return (self.g0, self.g1, 2.0 * self.g2)[order]


# ---------------------------------------------------------------------------
# sub-patterns


@dataclass
class SubpatternMoments:
    """Gaps between cyclically consecutive appearances of each source.

    ``means[n][k]`` / ``variances[n][k]`` describe H_{n,k}: the summed
    service of every entry strictly between appearance k and k+1 of source
    n+1 (0-based ``n``).  ``positions[n]`` are the 0-based slots of source
    n+1 in the pattern.
    """

    pattern: Pattern
    N: int
    positions: list[np.ndarray]
    means: list[np.ndarray]
    variances: list[np.ndarray]

    def alpha(self, n: int) -> int:
        return len(self.positions[n - 1])

    def counts(self, n: int) -> np.ndarray:
        """alpha_{n,k,m} as an (alpha_n, N) array for 1-based source n."""
        idx = self.pattern.as_index_array()
        K = len(idx)
        pos = self.positions[n - 1]
        out = np.zeros((len(pos), self.N), dtype=np.int64)
        for k, start in enumerate(pos):
            stop = pos[k + 1] if k + 1 < len(pos) else pos[0] + K
            for j in range(start + 1, stop):
                out[k, idx[j % K]] += 1
        return out

    def second_moments(self, n: int) -> np.ndarray:
        m = self.means[n - 1]
        return self.variances[n - 1] + m * m


def extract_subpatterns(pattern, system: SystemSpec) -> SubpatternMoments:
    pattern = as_pattern(pattern)
    pattern.check_feasible(system.N)
    idx = pattern.as_index_array()
    K = len(idx)

    order = np.argsort(idx, kind="stable")
    alpha = np.bincount(idx, minlength=system.N)
    # next appearance of the same source, cyclically
    nxt = np.empty(K, dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(alpha)))
    for n in range(system.N):
        pos = order[starts[n]:starts[n + 1]]
        nxt[pos] = np.roll(pos, -1)

    def gap_sums(values):
        x = values[idx]
        c = np.concatenate(([0.0], np.cumsum(x)))
        j = np.arange(K)
        inner = c[nxt] - c[j + 1]
        wrap = (c[K] - c[j + 1]) + c[nxt]
        out = np.where(nxt > j, inner, wrap)
        # adjacent appearances (or a lone appearance with nothing between) are empty gaps
        empty = (nxt == j + 1) | ((nxt == 0) & (j == K - 1)) | ((nxt == j) & (K == 1))
        out[empty] = 0.0
        return np.maximum(out, 0.0)

    gm = gap_sums(np.asarray(system.s))
    gv = gap_sums(np.asarray(system.v))
    positions, means, variances = [], [], []
    for n in range(system.N):
        pos = order[starts[n]:starts[n + 1]]
        positions.append(pos)
        means.append(gm[pos])
        variances.append(gv[pos])
    return SubpatternMoments(pattern, system.N, positions, means, variances)


# ---------------------------------------------------------------------------
# per-source gap moments


@dataclass
class GapExpansion:
    """Numerator/denominator coefficients of the conditional gap MGF.

    For appearance k the conditional MGF is
    (D0 + a[k] s + b[k] s^2) / (D0 + c s + d s^2) up to O(s^3), where
    D0 = 1 - p^alpha.  The denominator does not depend on k.
    """

    a: np.ndarray
    b: np.ndarray
    c: float
    d: float
    D0: float
    numerator0: np.ndarray

    @property
    def s_tilde(self) -> float:
        return float(np.mean(self.a) - self.c) / self.D0

    @property
    def q_tilde(self) -> float:
        return _q_from_coefficients(float(np.mean(self.a)), float(np.mean(self.b)), self.c, self.d, self.D0)


def _q_from_coefficients(a_mean, b_mean, c, d, D0):
    # quotient rule at s = 0, averaged over appearances (linear in a_k, b_k)
    return 2.0 * c * (c - a_mean) / (D0 * D0) + 2.0 * (b_mean - d) / D0


def _pow_p(p: float, alpha: int) -> float:
    if p == 0.0:
        return 0.0
    lg = alpha * math.log(p)
    return 0.0 if lg < -745.0 else math.exp(lg)


def gap_expansion(gap_means, gap_vars, s, q, v, p, check=True) -> GapExpansion:
    """Rolling O(alpha) evaluation of the numerator/denominator expansions.

    With T_k = sum_j (pG)^{j-1} prod_{l<j} G_{k+l} the numerator is u T_k and
    T_k = G_k (D + pG T_{k+1}); T_0 is accumulated directly and the rest
    follow backwards.
    """
    gm = [float(x) for x in gap_means]
    gv = [float(x) for x in gap_vars]
    alpha = len(gm)
    u = 1.0 - p
    pa = _pow_p(p, alpha)
    tot_mean = alpha * s + math.fsum(gm)
    tot_var = alpha * v + math.fsum(gv)
    D0 = 1.0 - pa
    c = -pa * tot_mean
    d = -0.5 * pa * (tot_var + tot_mean * tot_mean)

    # pG = p * G_n
    h0, h1, h2 = p, p * s, 0.5 * p * q

    # T_0 by forward accumulation
    r0, r1, r2 = 1.0, 0.0, 0.0          # running product of gap MGFs
    w0, w1, w2 = 1.0, 0.0, 0.0          # running (pG)^(j-1)
    t0 = t1 = t2 = 0.0
    for k in range(alpha):
        m = gm[k]
        e1, e2 = m, 0.5 * (gv[k] + m * m)
        r0, r1, r2 = r0, r1 + r0 * e1, r2 + r1 * e1 + r0 * e2
        t0 += w0 * r0
        t1 += w0 * r1 + w1 * r0
        t2 += w0 * r2 + w1 * r1 + w2 * r0
        w0, w1, w2 = w0 * h0, w0 * h1 + w1 * h0, w0 * h2 + w1 * h1 + w2 * h0
        if w0 == 0.0 and w1 == 0.0 and w2 == 0.0:
            break

    T = [None] * alpha
    T[0] = (t0, t1, t2)
    nxt0, nxt1, nxt2 = t0, t1, t2
    for k in range(alpha - 1, 0, -1):
        # x = D + pG * T_{k+1}
        x0 = D0 + h0 * nxt0
        x1 = c + h0 * nxt1 + h1 * nxt0
        x2 = d + h0 * nxt2 + h1 * nxt1 + h2 * nxt0
        m = gm[k]
        e1, e2 = m, 0.5 * (gv[k] + m * m)
        nxt0, nxt1, nxt2 = x0, x1 + e1 * x0, x2 + e1 * x1 + e2 * x0
        T[k] = (nxt0, nxt1, nxt2)

    arr = np.array(T, dtype=float).reshape(alpha, 3) * u
    exp = GapExpansion(a=arr[:, 1], b=arr[:, 2], c=c, d=d, D0=D0, numerator0=arr[:, 0])
    if check:
        _check_expansion(exp)
    return exp


def gap_expansion_direct(gap_means, gap_vars, s, q, p) -> GapExpansion:
    """Literal O(alpha^2) evaluation with :class:`TruncatedMgf` products.

    Slow; kept as an independent route for cross-checking :func:`gap_expansion`.
    """
    alpha = len(gap_means)
    u = 1.0 - p
    G = TruncatedMgf.from_moments(s, q)
    Gk = [TruncatedMgf.from_moments(m, vv + m * m) for m, vv in zip(gap_means, gap_vars)]
    full = TruncatedMgf.one()
    for g in Gk:
        full = full * g
    den = 1.0 - (p ** alpha) * (G ** alpha) * full
    a, b, n0 = [], [], []
    for k in range(alpha):
        num = TruncatedMgf(0.0)
        prod = TruncatedMgf.one()
        for j in range(1, alpha + 1):
            prod = prod * Gk[(k + j - 1) % alpha]
            num = num + (p ** (j - 1)) * (G ** (j - 1)) * prod
        num = u * num
        n0.append(num.g0)
        a.append(num.g1)
        b.append(num.g2)
    return GapExpansion(np.array(a), np.array(b), den.g1, den.g2, den.g0, np.array(n0))


def _check_expansion(exp: GapExpansion) -> None:
    bad = np.abs(exp.numerator0 - exp.D0) > CONSISTENCY_TOL
    if bad.any():
        k = int(np.argmax(bad))
        raise InternalInvariantError(
            f"numerator constant term {exp.numerator0[k]!r} != 1 - p^alpha = {exp.D0!r} "
            f"at appearance {k}; a={exp.a[k]!r} b={exp.b[k]!r} c={exp.c!r} d={exp.d!r}"
        )


def _source_expansion(sub: SubpatternMoments, system: SystemSpec, n: int) -> GapExpansion:
    i = n - 1
    return gap_expansion(sub.means[i], sub.variances[i], system.s[i], system.q[i], system.v[i], system.p[i])


def tilde_mean(pattern, system: SystemSpec, n: int, sub: SubpatternMoments | None = None) -> float:
    """Closed-form mean of the inter-success gap of source n (1-based)."""
    if sub is None:
        sub = extract_subpatterns(pattern, system)
    i = n - 1
    gaps = sub.means[i]
    return (system.p[i] * system.s[i] + math.fsum(gaps) / len(gaps)) / system.u[i]


def tilde_second_moment(pattern, system: SystemSpec, n: int, sub: SubpatternMoments | None = None) -> float:
    if sub is None:
        sub = extract_subpatterns(pattern, system)
    return _source_expansion(sub, system, n).q_tilde


def source_aoi(s, q, s_tilde, q_tilde):
    return (2.0 * s * s + 4.0 * s * s_tilde + q + q_tilde) / (2.0 * (s + s_tilde))


def source_aoi_scov(s, c, s_tilde, c_tilde):
    """Same quantity written with squared coefficients of variation."""
    return (s * s * (c + 3.0) + s_tilde * s_tilde * (c_tilde + 1.0) + 4.0 * s * s_tilde) / (2.0 * (s + s_tilde))


def source_paoi(s, s_tilde):
    return 2.0 * s + s_tilde


def scov_of(mean, second):
    """Squared coefficient of variation; 0 for a variable that is identically 0."""
    mean = np.asarray(mean, dtype=float)
    second = np.asarray(second, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (second - mean * mean) / (mean * mean)
    return np.where(mean > 0, np.maximum(c, 0.0), 0.0)


@dataclass
class PatternReport:
    """Per-source gap moments and mean ages for one scheduler.

    ``pattern`` is ``None`` for reports produced for a probabilistic
    scheduler.
    """

    s_tilde: np.ndarray
    q_tilde: np.ndarray
    aoi: np.ndarray
    paoi: np.ndarray
    weights: np.ndarray
    pattern: Pattern | None = None
    alpha: np.ndarray | None = None
    c_tilde: np.ndarray = field(init=False)
    system_aoi: float = field(init=False)
    system_paoi: float = field(init=False)

    def __post_init__(self):
        self.c_tilde = scov_of(self.s_tilde, self.q_tilde)
        self.system_aoi = math.fsum(self.weights * self.aoi)
        self.system_paoi = math.fsum(self.weights * self.paoi)

    @property
    def K(self) -> int | None:
        return None if self.pattern is None else self.pattern.size

    @property
    def N(self) -> int:
        return len(self.aoi)

    def to_dict(self) -> dict:
        per = []
        for i in range(self.N):
            per.append({
                "source": i + 1,
                "weight": float(self.weights[i]),
                "s_tilde": float(self.s_tilde[i]),
                "q_tilde": float(self.q_tilde[i]),
                "c_tilde": float(self.c_tilde[i]),
                "aoi": float(self.aoi[i]),
                "paoi": float(self.paoi[i]),
            })
            if self.alpha is not None:
                per[-1]["alpha"] = int(self.alpha[i])
        out = {
            "system_aoi": self.system_aoi,
            "system_paoi": self.system_paoi,
            "sources": per,
        }
        if self.pattern is not None:
            out["pattern"] = self.pattern.format()
            out["K"] = self.pattern.size
        return out


def report_from_moments(system: SystemSpec, s_tilde, q_tilde, pattern=None, alpha=None) -> PatternReport:
    s_tilde = np.asarray(s_tilde, dtype=float)
    q_tilde = np.asarray(q_tilde, dtype=float)
    aoi = source_aoi(system.s, system.q, s_tilde, q_tilde)
    paoi = source_paoi(system.s, s_tilde)
    return PatternReport(s_tilde, q_tilde, aoi, paoi, np.asarray(system.w), pattern=pattern, alpha=alpha)


def evaluate_pattern(pattern, system: SystemSpec) -> PatternReport:
    """Mean AoI and PAoI of every source, and the weighted system values."""
    pattern = as_pattern(pattern)
    sub = extract_subpatterns(pattern, system)
    N = system.N
    s_t = np.empty(N)
    q_t = np.empty(N)
    for i in range(N):
        exp = _source_expansion(sub, system, i + 1)
        s_t[i] = tilde_mean(pattern, system, i + 1, sub=sub)
        q_t[i] = exp.q_tilde
    return report_from_moments(system, s_t, q_t, pattern=pattern, alpha=pattern.counts(N))

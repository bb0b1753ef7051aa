"""Compression operators on vectors and matrices.

Two operator classes are supported, each with a declared parameter:

* contraction operators with delta in (0, 1]:
      E ||A - C(A)||_F^2 <= (1 - delta) ||A||_F^2
* unbiased operators with variance parameter omega >= 0:
      E[C(A)] = A  and  E ||C(A)||_F^2 <= (omega + 1) ||A||_F^2

Every operator is immutable configuration bound to a fixed input shape;
randomness enters only through an explicit generator, so concurrent use
across clients is deterministic. `apply` returns the compressed value
together with the bit cost of transmitting it.

Bit-cost model (floats default to 64 bits, configurable to 32):
Top-K / Rand-K pay K floats plus K ceil(log2 N) index bits; Rank-R pays
R*(2d floats + 1 float); dithering pays one float for the norm plus
d*(1 + ceil(log2(s+1))) bits; natural rounding pays 9 bits per entry;
transmitted scalars pay one float and transmitted flags one bit.
"""

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .linalg import svd as _svd


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by (seed, round, client, purpose).

    Identical keys reproduce identical draws; distinct keys give
    statistically independent streams.
    """

    seed: int
    round: int = 0
    client: int = 0
    purpose: str = ""

    def generator(self):
        if self.seed < 0 or self.round < 0 or self.client < 0:
            raise ValueError("stream key components must be non-negative")
        key = zlib.crc32(self.purpose.encode("utf-8"))
        ss = np.random.SeedSequence([self.seed, self.round, self.client, key])
        return np.random.default_rng(ss)


@dataclass
class BitCost:
    """Transmission cost split into payload, index, and scalar bits."""

    payload: int = 0
    index: int = 0
    scalar: int = 0

    @property
    def total(self):
        return self.payload + self.index + self.scalar

    def __add__(self, other):
        return BitCost(
            self.payload + other.payload,
            self.index + other.index,
            self.scalar + other.scalar,
        )


def _index_bits(n):
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


class Compressor:
    """Base class: immutable config bound to a fixed input size."""

    deterministic = False
    delta = None  # contraction parameter, if declared
    omega = None  # unbiased variance parameter, if declared
    symmetric_domain = False
    preserves_symmetry = False  # symmetric input always gives symmetric output

    def apply(self, a, rng=None, size_hint=None):
        raise NotImplementedError

    def bit_cost(self, size_hint=None):
        """Analytic cost of one application."""
        raise NotImplementedError

    @property
    def name(self):
        return type(self).__name__


class Identity(Compressor):
    deterministic = True
    delta = 1.0
    omega = 0.0
    preserves_symmetry = True

    def __init__(self, size, float_bits=64):
        self.size = int(size)
        self.float_bits = float_bits

    def apply(self, a, rng=None, size_hint=None):
        return np.array(a, dtype=float), self.bit_cost(size_hint)

    def bit_cost(self, size_hint=None):
        n = self.size if size_hint is None else size_hint
        return BitCost(payload=n * self.float_bits)

    @property
    def name(self):
        return "identity"


class TopK(Compressor):
    """Keep the K largest-magnitude entries; ties go to the lowest
    row-major flat index. Contractive with delta = K/N."""

    deterministic = True

    def __init__(self, k, size, float_bits=64):
        size = int(size)
        if not 1 <= k <= size:
            raise ValueError(f"K={k} out of range [1, {size}]")
        self.k = int(k)
        self.size = size
        self.float_bits = float_bits
        self.delta = k / size

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        flat = a.ravel()
        keep = np.argsort(-np.abs(flat), kind="stable")[: self.k]
        out = np.zeros_like(flat)
        out[keep] = flat[keep]
        return out.reshape(a.shape), self.bit_cost()

    def bit_cost(self, size_hint=None):
        return BitCost(
            payload=self.k * self.float_bits,
            index=self.k * _index_bits(self.size),
        )

    @property
    def name(self):
        return f"top{self.k}"


class TopKSym(Compressor):
    """Top-K over the d(d+1)/2 triangular entries of a symmetric matrix,
    mirrored to keep symmetry.

    Entries are ranked by their energy contribution to the Frobenius
    norm (off-diagonal entries count twice), which makes the declared
    delta = K / (d(d+1)/2) hold for every input.
    """

    deterministic = True
    symmetric_domain = True
    preserves_symmetry = True

    def __init__(self, k, d, float_bits=64):
        ntri = d * (d + 1) // 2
        if not 1 <= k <= ntri:
            raise ValueError(f"K={k} out of range [1, {ntri}]")
        self.k = int(k)
        self.d = int(d)
        self.ntri = ntri
        self.float_bits = float_bits
        self.delta = k / ntri

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
            raise ValueError("symmetric Top-K requires a symmetric input")
        rows, cols = np.triu_indices(self.d)
        vals = a[rows, cols]
        energy = vals * vals * np.where(rows == cols, 1.0, 2.0)
        keep = np.argsort(-energy, kind="stable")[: self.k]
        out = np.zeros_like(a)
        out[rows[keep], cols[keep]] = vals[keep]
        out[cols[keep], rows[keep]] = vals[keep]
        return out, self.bit_cost()

    def bit_cost(self, size_hint=None):
        return BitCost(
            payload=self.k * self.float_bits,
            index=self.k * _index_bits(self.ntri),
        )

    @property
    def name(self):
        return f"topsym{self.k}"


class RandK(Compressor):
    """Keep a uniformly random K-subset of entries scaled by N/K.
    Unbiased with omega = N/K - 1."""

    def __init__(self, k, size, float_bits=64):
        size = int(size)
        if not 1 <= k <= size:
            raise ValueError(f"K={k} out of range [1, {size}]")
        self.k = int(k)
        self.size = size
        self.float_bits = float_bits
        self.omega = size / k - 1.0

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        flat = a.ravel()
        idx = rng.choice(self.size, size=self.k, replace=False)
        out = np.zeros_like(flat)
        out[idx] = flat[idx] * (self.size / self.k)
        return out.reshape(a.shape), self.bit_cost()

    def bit_cost(self, size_hint=None):
        return BitCost(
            payload=self.k * self.float_bits,
            index=self.k * _index_bits(self.size),
        )

    @property
    def name(self):
        return f"rand{self.k}"


class RankR(Compressor):
    """Truncate to the top R singular triples. Contractive with
    delta = R/d; symmetric inputs give symmetric outputs."""

    deterministic = True
    preserves_symmetry = True

    def __init__(self, r, d, float_bits=64):
        if not 1 <= r <= d:
            raise ValueError(f"R={r} out of range [1, {d}]")
        self.r = int(r)
        self.d = int(d)
        self.float_bits = float_bits
        self.delta = r / d

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        dec = _svd(a)
        r = self.r
        out = (dec.u[:, :r] * dec.sigma[:r]) @ dec.vt[:r]
        if np.array_equal(a, a.T):
            out = 0.5 * (out + out.T)
        return out, self.bit_cost()

    def bit_cost(self, size_hint=None):
        return BitCost(
            payload=self.r * 2 * self.d * self.float_bits,
            scalar=self.r * self.float_bits,
        )

    @property
    def name(self):
        return f"rank{self.r}"


class RandomDithering(Compressor):
    """Stochastic level rounding of |x_i| / ||x||_q onto an s-level grid.

    Unbiased; for q=2 the variance parameter is min(d/s^2, sqrt(d)/s),
    for q=inf the generic bound 2 + (sqrt(d) + 1)/s is used.
    """

    def __init__(self, s, q, dim, float_bits=64):
        if s < 1:
            raise ValueError("s must be >= 1")
        if q not in (2, math.inf):
            raise ValueError("q must be 2 or inf")
        self.s = int(s)
        self.q = q
        self.dim = int(dim)
        self.float_bits = float_bits
        if q == 2:
            self.omega = min(dim / s**2, math.sqrt(dim) / s)
        else:
            self.omega = 2.0 + (math.sqrt(dim) + 1.0) / s

    def apply(self, x, rng=None, size_hint=None):
        x = np.asarray(x, dtype=float)
        norm = float(np.linalg.norm(x.ravel(), ord=self.q))
        if norm == 0.0:
            return np.zeros_like(x), self.bit_cost()
        scaled = np.abs(x) / norm * self.s
        level = np.floor(scaled)
        frac = scaled - level
        bump = (rng.random(x.shape) < frac).astype(float)
        xi = level + bump
        return np.sign(x) * norm * xi / self.s, self.bit_cost()

    def bit_cost(self, size_hint=None):
        per_entry = 1 + _index_bits(self.s + 1)
        return BitCost(payload=self.dim * per_entry, scalar=self.float_bits)

    @property
    def name(self):
        q = "inf" if self.q == math.inf else "2"
        return f"dither(s={self.s},q={q})"


class NaturalCompression(Compressor):
    """Round each entry stochastically to a neighbouring signed power of
    two, with probabilities chosen so the map is unbiased (omega = 1/8)."""

    omega = 1.0 / 8.0

    def __init__(self, size, float_bits=64):
        self.size = int(size)
        self.float_bits = float_bits

    def apply(self, x, rng=None, size_hint=None):
        x = np.asarray(x, dtype=float)
        mant, expo = np.frexp(np.abs(x))  # |x| = mant * 2^expo, mant in [0.5, 1)
        low = np.ldexp(0.5, expo)
        p_high = 2.0 * mant - 1.0
        high = (rng.random(x.shape) < p_high).astype(float)
        out = np.sign(x) * low * (1.0 + high)
        return np.where(x == 0.0, 0.0, out), self.bit_cost()

    def bit_cost(self, size_hint=None):
        return BitCost(payload=9 * self.size)

    @property
    def name(self):
        return "natural"


class ComposedRankUnbiased(Compressor):
    """Rank-R truncation with the singular factors passed through two
    unbiased operators and rescaled to stay contractive:

        sum_{i<=R} sigma_i Q1(a_i u_i) Q2(b_i v_i)^T
                   / (a_i b_i (omega1+1)(omega2+1))

    Contractive with delta = R / (d (omega1+1)(omega2+1)).
    """

    def __init__(self, r, q1, q2, d, float_bits=64, scaling="ones"):
        if not 1 <= r <= d:
            raise ValueError(f"R={r} out of range [1, {d}]")
        if q1.omega is None or q2.omega is None:
            raise ValueError("inner operators must be unbiased")
        if scaling not in ("ones", "sqrt_sigma"):
            raise ValueError("scaling must be 'ones' or 'sqrt_sigma'")
        self.r = int(r)
        self.d = int(d)
        self.q1 = q1
        self.q2 = q2
        self.scaling = scaling
        self.float_bits = float_bits
        self.delta = r / (d * (q1.omega + 1.0) * (q2.omega + 1.0))
        self.deterministic = q1.deterministic and q2.deterministic

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        dec = _svd(a)
        damp = (self.q1.omega + 1.0) * (self.q2.omega + 1.0)
        out = np.zeros_like(a)
        for i in range(self.r):
            sig = dec.sigma[i]
            if sig == 0.0:
                continue
            if self.scaling == "sqrt_sigma":
                ai = bi = math.sqrt(sig)
            else:
                ai = bi = 1.0
            # sequential draws from one stream keep the factor pairs independent
            left, _ = self.q1.apply(ai * dec.u[:, i], rng)
            right, _ = self.q2.apply(bi * dec.vt[i], rng)
            out += sig * np.outer(left, right) / (ai * bi * damp)
        return out, self.bit_cost()

    def bit_cost(self, size_hint=None):
        cost = BitCost(scalar=self.r * self.float_bits)
        for _ in range(self.r):
            cost = cost + self.q1.bit_cost() + self.q2.bit_cost()
        return cost

    @property
    def name(self):
        return f"rank{self.r}*({self.q1.name},{self.q2.name})"


class ComposedSparseUnbiased(Compressor):
    """Top-K selection with the kept values passed through an unbiased
    operator and rescaled by 1/(omega+1); contractive with
    delta = (K/N) / (omega+1)."""

    def __init__(self, k, inner, size, float_bits=64):
        size = int(size)
        if not 1 <= k <= size:
            raise ValueError(f"K={k} out of range [1, {size}]")
        if inner.omega is None:
            raise ValueError("inner operator must be unbiased")
        self.k = int(k)
        self.size = size
        self.inner = inner
        self.float_bits = float_bits
        self.delta = (k / size) / (inner.omega + 1.0)
        self.deterministic = inner.deterministic

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        flat = a.ravel()
        keep = np.argsort(-np.abs(flat), kind="stable")[: self.k]
        keep = np.sort(keep)
        vals, _ = self.inner.apply(flat[keep], rng)
        out = np.zeros_like(flat)
        out[keep] = vals / (self.inner.omega + 1.0)
        return out.reshape(a.shape), self.bit_cost()

    def bit_cost(self, size_hint=None):
        return BitCost(index=self.k * _index_bits(self.size)) + self.inner.bit_cost()

    @property
    def name(self):
        return f"top{self.k}*{self.inner.name}"


class Symmetrized(Compressor):
    """Wrap a matrix operator: symmetric inputs get (C(A)+C(A)^T)/2,
    non-symmetric inputs pass through unchanged. Declared parameters are
    inherited (symmetrization cannot worsen either class)."""

    symmetric_domain = True
    preserves_symmetry = True

    def __init__(self, inner):
        self.inner = inner
        self.delta = inner.delta
        self.omega = inner.omega
        self.deterministic = inner.deterministic

    def apply(self, a, rng=None, size_hint=None):
        a = np.asarray(a, dtype=float)
        out, cost = self.inner.apply(a, rng, size_hint=size_hint)
        if np.array_equal(a, a.T):
            out = 0.5 * (out + out.T)
        return out, cost

    def bit_cost(self, size_hint=None):
        return self.inner.bit_cost(size_hint)

    @property
    def name(self):
        return f"sym({self.inner.name})"


# Convenience single-shot forms of the operators above.

def top_k(a, k, float_bits=64):
    a = np.asarray(a, dtype=float)
    return TopK(k, a.size, float_bits).apply(a)


def top_k_sym(a, k, float_bits=64):
    a = np.asarray(a, dtype=float)
    return TopKSym(k, a.shape[0], float_bits).apply(a)


def rand_k(a, k, rng, float_bits=64):
    a = np.asarray(a, dtype=float)
    return RandK(k, a.size, float_bits).apply(a, rng)


def rank_r(a, r, float_bits=64):
    a = np.asarray(a, dtype=float)
    return RankR(r, a.shape[0], float_bits).apply(a)


def random_dithering(x, s, q, rng, float_bits=64):
    x = np.asarray(x, dtype=float)
    return RandomDithering(s, q, x.size, float_bits).apply(x, rng)


def natural_compression(x, rng, float_bits=64):
    x = np.asarray(x, dtype=float)
    return NaturalCompression(np.asarray(x).size, float_bits).apply(x, rng)


# --- certification -----------------------------------------------------

@dataclass
class CertifyCheck:
    name: str
    measured: float
    bound: float
    passed: bool


@dataclass
class CertifyReport:
    """Certification result; `delta`/`omega` record the parameters the
    checks were run against (the sparsifier contraction parameter is
    K/N, the kept fraction)."""

    compressor: str
    delta: float = None
    omega: float = None
    checks: list = field(default_factory=list)
    max_violation: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, measured, bound, passed):
        self.checks.append(CertifyCheck(name, measured, bound, passed))
        self.max_violation = max(self.max_violation, measured - bound)


def _certify_inputs(comp, n_inputs, rng):
    """Random test inputs matched to the operator's domain, plus the
    all-ones input (the worst case for sparsifiers)."""
    if isinstance(comp, (RandomDithering,)):
        shape = (comp.dim,)
    elif isinstance(comp, (TopKSym, Symmetrized, RankR, ComposedRankUnbiased)):
        d = getattr(comp, "d", None)
        if d is None:
            d = getattr(comp.inner, "d", None)
        if d is None:
            d = int(math.isqrt(comp.inner.size))
        shape = (d, d)
    elif isinstance(comp, (TopK, RandK, NaturalCompression, Identity,
                           ComposedSparseUnbiased)):
        shape = (comp.size,)
    else:
        raise ValueError(f"cannot infer input shape for {comp.name}")
    inputs = [np.ones(shape)]
    for _ in range(n_inputs):
        a = rng.standard_normal(shape)
        if comp.symmetric_domain:
            a = 0.5 * (a + a.T)
        inputs.append(a)
    return inputs


def certify(comp, trials=1000, draws=10000, seed=0, delta=None, omega=None,
            mc_inputs=3):
    """Empirically check the declared operator-class inequalities.

    Deterministic contraction operators are checked per draw over
    `trials` random inputs. Stochastic operators are checked in the mean
    over `draws` applications on a few fixed inputs; the tolerance is
    bound * 4/sqrt(draws) or three standard errors, whichever is larger.
    `delta`/`omega` override the operator's declared parameters (useful
    for demonstrating that a wrong declaration fails).
    """
    if trials < 10:
        raise ValueError("trials must be at least 10")
    delta = comp.delta if delta is None else delta
    omega = comp.omega if omega is None else omega
    rng = np.random.default_rng(seed)
    report = CertifyReport(compressor=comp.name)

    if delta is not None:
        bound = 1.0 - delta
        if comp.deterministic:
            worst = 0.0
            for a in _certify_inputs(comp, trials, rng):
                norm2 = float(np.sum(a * a))
                if norm2 == 0.0:
                    continue
                out, _ = comp.apply(a, rng)
                resid = float(np.sum((a - out) ** 2)) / norm2
                worst = max(worst, resid)
            report.add("contraction(per-draw)", worst, bound + 1e-9,
                       worst <= bound + 1e-9)
        else:
            worst, worst_bound = 0.0, math.inf
            for a in _certify_inputs(comp, mc_inputs, rng):
                norm2 = float(np.sum(a * a))
                if norm2 == 0.0:
                    continue
                resid = np.empty(draws)
                for t in range(draws):
                    out, _ = comp.apply(a, rng)
                    resid[t] = np.sum((a - out) ** 2)
                mean = float(resid.mean()) / norm2
                stderr = float(resid.std(ddof=1)) / math.sqrt(draws) / norm2
                slack = max(3.0 * stderr, bound * 4.0 / math.sqrt(draws))
                if mean - (bound + slack) > worst - worst_bound:
                    worst, worst_bound = mean, bound + slack
            report.add("contraction(mc)", worst, worst_bound,
                       worst <= worst_bound)

    if omega is not None:
        sec_bound_factor = omega + 1.0
        worst_mean_z, worst_sec, worst_sec_bound = 0.0, 0.0, math.inf
        for a in _certify_inputs(comp, mc_inputs, rng):
            norm2 = float(np.sum(a * a))
            if norm2 == 0.0:
                continue
            acc = np.zeros_like(a, dtype=float)
            acc2 = np.zeros_like(a, dtype=float)
            sq = np.empty(draws)
            for t in range(draws):
                out, _ = comp.apply(a, rng)
                acc += out
                acc2 += out * out
                sq[t] = np.sum(out * out)
            mean = acc / draws
            var = np.maximum(acc2 / draws - mean * mean, 0.0)
            dev = float(np.linalg.norm((mean - a).ravel()))
            # deterministic operators have zero variance; floor the scale
            # so fp noise in the accumulated mean does not divide by zero
            sigma = max(math.sqrt(float(np.sum(var)) / draws),
                        1e-12 * (1.0 + math.sqrt(norm2)))
            worst_mean_z = max(worst_mean_z, dev / sigma)
            sec = float(sq.mean()) / norm2
            stderr = float(sq.std(ddof=1)) / math.sqrt(draws) / norm2
            slack = max(3.0 * stderr, sec_bound_factor * 4.0 / math.sqrt(draws))
            if sec - (sec_bound_factor + slack) > worst_sec - worst_sec_bound:
                worst_sec, worst_sec_bound = sec, sec_bound_factor + slack
        report.add("mean-recovery(3-sigma)", worst_mean_z, 3.0,
                   worst_mean_z <= 3.0)
        report.add("second-moment(mc)", worst_sec, worst_sec_bound,
                   worst_sec <= worst_sec_bound)

    if delta is None and omega is None:
        raise ValueError("operator declares neither delta nor omega")
    return report

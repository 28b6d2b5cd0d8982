"""Token-level draft selection and its acceptance-probability analysis.

Given a draft distribution p and a target distribution q over a shared
vocabulary, the routines here pick one output token from k i.i.d. draft
tokens so that the output is exactly q-distributed, while maximizing the
chance that it comes from the draft set:

* ``maximal_coupling_select``: the classic single-draft accept/resample rule.
* ``kseq_select``: sequential scan over k drafts, damped by a division
  factor gamma; valid for any gamma >= gamma*, near-linear to compute.
* ``otm_lp_solve``: the exact optimum as a linear program over joint masses
  pi(draft-tuple, output) with membership cost; exponential in k, so capped.
* ``alpha_upper_bound`` and the closed forms: analytic anchors used to
  cross-check both algorithms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _simplex
from .prob_core import (
    NEG_TOL,
    ProbVector,
    RngStream,
    SpectrError,
    TokenId,
    ValidationError,
    _check_same_vocab,
    residual_maximal,
    sample,
)

# Largest |vocab|^k the LP and the exhaustive bound will accept.
DEFAULT_TUPLE_CAP = 4096
# Subset enumeration in alpha_upper_bound is 2^|vocab|.
UPPER_BOUND_MAX_VOCAB = 16

MARGINAL_TOL = 1e-7
DEFAULT_GAMMA_DELTA = 1e-9


class InvalidDraftError(SpectrError):
    """A draft token has zero probability under p, so it cannot be a p-sample."""


class InvalidGammaError(SpectrError):
    """gamma is below gamma*; the residual distribution would go negative."""


class DegenerateSupportError(SpectrError):
    """p and q have disjoint support (total variation 1); gamma* is undefined."""


class SizeLimitError(SpectrError):
    """Instance exceeds an enumeration cap."""


@dataclass(frozen=True)
class TransportPlan:
    """Explicit joint distribution over (draft tuple, output token) pairs.

    Row marginals reproduce the i.i.d. draft law p^k, column marginals
    reproduce q. Only strictly positive masses are stored; draft tuples are
    ordered lexicographically in serialized form.
    """

    k: int
    vocab_size: int
    entries: Mapping[tuple[tuple[int, ...], int], float]

    def mass(self, draft_tuple: tuple[int, ...], token: int) -> float:
        return self.entries.get((draft_tuple, token), 0.0)

    def row_marginal(self, draft_tuple: tuple[int, ...]) -> float:
        return sum(m for (t, _), m in self.entries.items() if t == draft_tuple)

    def column_marginal(self, token: int) -> float:
        return sum(m for (_, y), m in self.entries.items() if y == token)

    def acceptance(self) -> float:
        """Probability mass on pairs whose output token appears in the tuple."""
        return sum(m for (t, y), m in self.entries.items() if y in t)

    def conditional(self, draft_tuple: tuple[int, ...]) -> ProbVector:
        """Output distribution given an observed draft tuple."""
        row = np.zeros(self.vocab_size)
        for (t, y), m in self.entries.items():
            if t == draft_tuple:
                row[y] += m
        total = row.sum()
        if total <= 0.0:
            raise InvalidDraftError(f"draft tuple {draft_tuple} has zero probability under the plan")
        return ProbVector(row / total)

    def csv_rows(self) -> list[tuple[str, int, float]]:
        """(hyphen-joined draft tuple, output token, mass), lexicographic."""
        keys = sorted(self.entries)
        return [("-".join(str(i) for i in t), y, self.entries[(t, y)]) for t, y in keys]

    def validate(self, p: ProbVector, q: ProbVector, tol: float = MARGINAL_TOL) -> None:
        rows: dict[tuple[int, ...], float] = {}
        cols = np.zeros(self.vocab_size)
        for (t, y), m in self.entries.items():
            if m < -NEG_TOL:
                raise ValidationError(f"negative plan mass {m!r} at {(t, y)}")
            rows[t] = rows.get(t, 0.0) + m
            cols[y] += m
        if np.abs(cols - q.probs).max() > tol:
            raise ValidationError("plan column marginals do not match q")
        supp = [int(i) for i in p.support()]
        for t in itertools.product(supp, repeat=self.k):
            expected = float(np.prod([p[i] for i in t]))
            if abs(rows.get(t, 0.0) - expected) > tol:
                raise ValidationError(f"plan row marginal at {t} is {rows.get(t, 0.0)}, want {expected}")


@dataclass(frozen=True)
class KseqParams:
    """Derived quantities of the sequential scan at a given gamma.

    beta = sum_x min(p(x), q(x)/gamma) is the per-draft acceptance mass,
    p_acc = 1 - (1 - beta)^k the chance the scan accepts anything, and
    residual the correction law used when it does not (None when p_acc = 1).
    """

    gamma: float
    beta: float
    p_acc: float
    residual: Optional[ProbVector]


@dataclass(frozen=True)
class AcceptanceReport:
    """One acceptance-probability figure plus how it was obtained."""

    method: str  # maximal | kseq | otm_lp | upper_bound | closed_form
    alpha: float
    k: int
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not -1e-12 <= self.alpha <= 1.0 + 1e-12:
            raise ValidationError(f"alpha {self.alpha!r} outside [0, 1]")
        object.__setattr__(self, "alpha", min(max(self.alpha, 0.0), 1.0))


def maximal_coupling_select(p: ProbVector, q: ProbVector, draft: TokenId,
                            rng: RngStream) -> tuple[TokenId, bool]:
    """Accept the draft with probability min(1, q/p), else sample the residual.

    When the draft is p-distributed the returned token is exactly
    q-distributed, and acceptance happens with probability 1 - tv(p, q).
    """
    _check_same_vocab(p, q)
    if p[draft] <= 0.0:
        raise InvalidDraftError(f"draft token {draft} has zero probability under p")
    ratio = min(1.0, q[draft] / p[draft])
    if rng.uniform() <= ratio:
        return draft, True
    return sample(residual_maximal(p, q), rng), False


def beta_damped(p: ProbVector, q: ProbVector, gamma: float) -> float:
    """sum_x min(p(x), q(x)/gamma)."""
    return float(np.minimum(p.probs, q.probs / gamma).sum())


def kseq_gamma_star(p: ProbVector, q: ProbVector, k: int,
                    delta: float = DEFAULT_GAMMA_DELTA) -> float:
    """Smallest valid division factor, solving 1 - (1-beta(g))^k = g*beta(g).

    Binary search on the monotone f(g) = 1 - (1-beta(g))^k - g*beta(g) over
    [1, k]; returns the upper end of the final bracket so the result is never
    below gamma*. Cost O(|vocab| * log((k-1)/delta)).
    """
    _check_same_vocab(p, q)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if delta <= 0.0:
        raise ValidationError("delta must be positive")
    if beta_damped(p, q, 1.0) <= NEG_TOL:
        raise DegenerateSupportError("p and q have disjoint support; gamma* undefined")

    def f(gamma: float) -> float:
        b = beta_damped(p, q, gamma)
        return 1.0 - (1.0 - b) ** k - gamma * b

    if f(1.0) <= 0.0:
        return 1.0
    lo, hi = 1.0, float(k)
    if f(hi) > 0.0:
        return hi
    while hi - lo > delta:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def kseq_params(p: ProbVector, q: ProbVector, k: int, gamma: float) -> KseqParams:
    """Compute beta, p_acc and the residual for the scan at this gamma.

    Raises InvalidGammaError when gamma sits below gamma* by more than
    rounding: the residual would then carry genuinely negative mass. Entries
    in [-1e-12, 0) are treated as rounding, clamped and renormalized.
    """
    _check_same_vocab(p, q)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if gamma < 1.0 - NEG_TOL:
        raise ValidationError(f"gamma {gamma!r} must be >= 1")
    b = beta_damped(p, q, gamma)
    p_acc = 1.0 - (1.0 - b) ** k
    if p_acc >= 1.0 - NEG_TOL:
        # Acceptance is certain; the residual branch is unreachable.
        return KseqParams(gamma=gamma, beta=b, p_acc=1.0, residual=None)
    if b <= 0.0:
        # Disjoint supports: nothing can be accepted and the correction is q itself.
        return KseqParams(gamma=gamma, beta=b, p_acc=0.0, residual=ProbVector(q.probs.copy()))
    accepted_share = np.minimum(p.probs, q.probs / gamma) * (p_acc / b)
    raw = (q.probs - accepted_share) / (1.0 - p_acc)
    if raw.min() < -NEG_TOL:
        raise InvalidGammaError(
            f"gamma {gamma!r} below gamma*: residual entry {raw.min():.3e} is negative")
    raw = np.where(raw < 0.0, 0.0, raw)
    return KseqParams(gamma=gamma, beta=b, p_acc=p_acc, residual=ProbVector(raw / raw.sum()))


def kseq_select(p: ProbVector, q: ProbVector, drafts: Sequence[TokenId], gamma: float,
                rng: RngStream, params: KseqParams | None = None,
                ) -> tuple[TokenId, Optional[int]]:
    """Scan drafts in order, accepting draft i with probability min(1, q/(gamma*p)).

    Returns (token, index of the accepted draft) or (residual sample, None).
    For i.i.d. p-drafts and gamma >= gamma*, the returned token is exactly
    q-distributed. `params` may carry a precomputed kseq_params(p, q, k, gamma)
    to amortize repeated calls.
    """
    if params is None:
        params = kseq_params(p, q, len(drafts), gamma)
    for i, x in enumerate(drafts):
        if p[x] <= 0.0:
            raise InvalidDraftError(f"draft token {x} has zero probability under p")
        accept = min(1.0, q[x] / (gamma * p[x]))
        if rng.uniform() <= accept:
            return x, i
    if params.residual is None:
        raise SpectrError("scan rejected all drafts although acceptance was certain")
    return sample(params.residual, rng), None


def kseq_output_marginal(p: ProbVector, q: ProbVector, k: int, gamma: float) -> ProbVector:
    """Exact analytic law of the scan's output token.

    min(p, q/gamma) * (1-(1-beta)^k)/beta + (1-p_acc) * residual. A validity
    oracle: for gamma >= gamma* this must equal q entrywise to 1e-9.
    """
    params = kseq_params(p, q, k, gamma)
    if params.beta > 0.0:
        accepted = np.minimum(p.probs, q.probs / gamma) * (params.p_acc / params.beta)
    else:
        accepted = np.zeros(p.vocab_size)
    total = accepted.copy()
    if params.residual is not None:
        total += (1.0 - params.p_acc) * params.residual.probs
    return ProbVector(total)


def kseq_acceptance(p: ProbVector, q: ProbVector, k: int, gamma: float) -> float:
    """Probability the scan accepts one of the k drafts, 1 - (1 - beta)^k."""
    return kseq_params(p, q, k, gamma).p_acc


def _tuple_space(p: ProbVector, k: int, cap: int) -> list[tuple[int, ...]]:
    if p.vocab_size ** k > cap:
        raise SizeLimitError(
            f"|vocab|^k = {p.vocab_size}^{k} exceeds the tuple cap {cap}")
    supp = [int(i) for i in p.support()]
    return list(itertools.product(supp, repeat=k))


def otm_lp_solve(p: ProbVector, q: ProbVector, k: int,
                 cap: int = DEFAULT_TUPLE_CAP) -> tuple[TransportPlan, float]:
    """Exact optimal transport with membership cost, via the dense simplex.

    Variables are pi(x^k, y) over draft tuples with positive product mass and
    outputs in supp(q); the objective charges 1 whenever y is not among the
    tuple's distinct tokens. Returns (plan, alpha = 1 - optimal cost).
    """
    _check_same_vocab(p, q)
    if k < 1:
        raise ValidationError("k must be >= 1")
    tuples = _tuple_space(p, k, cap)
    ys = [int(i) for i in q.support()]
    nt, ny = len(tuples), len(ys)
    n = nt * ny

    tuple_mass = np.array([float(np.prod([p[i] for i in t])) for t in tuples])

    cost = np.ones(n)
    for ti, t in enumerate(tuples):
        members = set(t)
        for yi, y in enumerate(ys):
            if y in members:
                cost[ti * ny + yi] = 0.0

    A = np.zeros((nt + ny, n))
    b = np.zeros(nt + ny)
    for ti in range(nt):
        A[ti, ti * ny:(ti + 1) * ny] = 1.0
        b[ti] = tuple_mass[ti]
    for yi, y in enumerate(ys):
        A[nt + yi, yi::ny] = 1.0
        b[nt + yi] = q[y]

    x, objective = _simplex.solve_equality_lp(cost, A, b)

    entries: dict[tuple[tuple[int, ...], int], float] = {}
    for ti, t in enumerate(tuples):
        for yi, y in enumerate(ys):
            m = x[ti * ny + yi]
            if m > 0.0:
                entries[(t, y)] = float(m)
    plan = TransportPlan(k=k, vocab_size=p.vocab_size, entries=entries)
    plan.validate(p, q)
    alpha = min(max(1.0 - objective, 0.0), 1.0)
    return plan, alpha


def alpha_upper_bound(p: ProbVector, q: ProbVector, k: int,
                      cap: int = DEFAULT_TUPLE_CAP,
                      ) -> tuple[float, tuple[int, ...]]:
    """Information-theoretic ceiling on the optimal acceptance probability.

    Minimizes, over subsets S of the vocabulary,
        sum_{y in S} min(q(y), 1-(1-p(y))^k)
      + sum_{x^k} min(prod p(x_i), q(distinct(x^k) \\ S)),
    and returns (value, minimizing subset). The subset witness is the
    smallest minimizer by (size, lexicographic order). Exponential in both
    |vocab| and k, hence the caps.
    """
    _check_same_vocab(p, q)
    if k < 1:
        raise ValidationError("k must be >= 1")
    v = p.vocab_size
    if v > UPPER_BOUND_MAX_VOCAB:
        raise SizeLimitError(f"|vocab| = {v} exceeds subset-enumeration cap {UPPER_BOUND_MAX_VOCAB}")
    tuples = _tuple_space(p, k, cap)
    tuple_mass = np.array([float(np.prod([p[i] for i in t])) for t in tuples])
    tuple_sets = np.array([_mask(t) for t in tuples], dtype=np.int64)

    first_term = np.minimum(q.probs, 1.0 - (1.0 - p.probs) ** k)
    # q-sum over every bitmask, by subset-sum DP.
    qsum = np.zeros(1 << v)
    for y in range(v):
        bit = 1 << y
        half = qsum[:bit].copy()
        qsum[bit:bit << 1] = half + q[y]

    best_value = np.inf
    best_key: tuple[int, tuple[int, ...]] | None = None
    full = (1 << v) - 1
    for subset in range(1 << v):
        members = [y for y in range(v) if subset >> y & 1]
        term1 = float(sum(first_term[y] for y in members))
        outside = qsum[tuple_sets & (full ^ subset)]
        value = term1 + float(np.minimum(tuple_mass, outside).sum())
        key = (len(members), tuple(members))
        if value < best_value or (value == best_value and key < best_key):
            best_value = value
            best_key = key
    return best_value, best_key[1]


def _mask(tokens: tuple[int, ...]) -> int:
    m = 0
    for t in tokens:
        m |= 1 << t
    return m


def alpha_bernoulli_closed_form(p_head: float, q_head: float, k: int) -> float:
    """Optimal acceptance for Ber(p_head) drafts against a Ber(q_head) target:
    min(q, 1-(1-p)^k) + min(1-q, 1-p^k)."""
    if not 0.0 <= p_head <= 1.0 or not 0.0 <= q_head <= 1.0:
        raise ValidationError("bernoulli parameters must lie in [0, 1]")
    if k < 1:
        raise ValidationError("k must be >= 1")
    return (min(q_head, 1.0 - (1.0 - p_head) ** k)
            + min(1.0 - q_head, 1.0 - p_head ** k))


def alpha_uniform_closed_form(d: int, r: float, k: int) -> float:
    """Optimal acceptance for U(d) drafts against U(d/r): 1 - (1 - 1/r)^k."""
    if d < 1:
        raise ValidationError("d must be a positive integer")
    if r < 1.0:
        raise ValidationError("r must be >= 1")
    if k < 1:
        raise ValidationError("k must be >= 1")
    target = d / r
    if abs(target - round(target)) > 1e-9 or round(target) < 1:
        raise ValidationError(f"d/r = {target!r} must be a positive integer")
    return 1.0 - (1.0 - 1.0 / r) ** k

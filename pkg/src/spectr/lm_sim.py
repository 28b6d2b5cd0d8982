"""Toy autoregressive models and the simulated cost of serial model calls.

A ToyLm is a table-based n-gram sampler: the conditional for a context is a
seeded function of the last `order` tokens, generated lazily and memoized, so
arbitrarily long contexts never blow up memory and repeated queries agree
bit-for-bit across processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .prob_core import ProbVector, RngStream, ValidationError, tv_distance

# Fraction of entries zeroed per row when allow_zeros is on; exercises the
# unbounded q/p regime.
ZERO_FRACTION = 0.25
# Uniform draws are scaled by this before exponentiation; larger means peakier
# rows (more LM-like contrast between likely and unlikely tokens).
ROW_SPREAD = 3.0


class ToyLm:
    """Seeded table-based autoregressive model.

    Rows are exponentiate-and-normalize transforms of seeded uniforms, so
    they are strictly positive (bounded q/p between any two such models)
    unless `allow_zeros` knocks out a seeded subset of entries.
    """

    def __init__(self, vocab_size: int, order: int, seed: int, allow_zeros: bool = False):
        if vocab_size < 2:
            raise ValidationError("vocab_size must be >= 2")
        if order < 0:
            raise ValidationError("order must be >= 0")
        self.vocab_size = vocab_size
        self.order = order
        self.seed = int(seed)
        self.allow_zeros = allow_zeros
        self._rows: dict[tuple[int, ...], ProbVector] = {}

    def context_key(self, context: Sequence[int]) -> tuple[int, ...]:
        """The suffix of the context that actually conditions the next token."""
        key = tuple(int(t) for t in context[-self.order:]) if self.order else ()
        for t in key:
            if not 0 <= t < self.vocab_size:
                raise ValidationError(f"token {t} out of range for vocab {self.vocab_size}")
        return key

    def next_dist(self, context: Sequence[int]) -> ProbVector:
        """Next-token conditional for the given context (memoized per key)."""
        key = self.context_key(context)
        row = self._rows.get(key)
        if row is None:
            row = ProbVector(self._row_values(key))
            self._rows[key] = row
        return row

    def _row_values(self, key: tuple[int, ...]) -> np.ndarray:
        rng = RngStream(self.seed, path=key)
        row = np.exp(ROW_SPREAD * rng.uniforms(self.vocab_size))
        if self.allow_zeros:
            zero = rng.uniforms(self.vocab_size) < ZERO_FRACTION
            if zero.all():
                zero[int(np.argmax(row))] = False
            row[zero] = 0.0
        return row / row.sum()


class _BlendedLm(ToyLm):
    """Per-context mixture (1-eps)*base + eps*perturbation, rows renormalized."""

    def __init__(self, base: ToyLm, perturbation: ToyLm, eps: float):
        super().__init__(base.vocab_size, base.order, perturbation.seed,
                         allow_zeros=base.allow_zeros or perturbation.allow_zeros)
        self._base = base
        self._perturbation = perturbation
        self._eps = eps

    def _row_values(self, key: tuple[int, ...]) -> np.ndarray:
        row = ((1.0 - self._eps) * self._base.next_dist(key).probs
               + self._eps * self._perturbation.next_dist(key).probs)
        return row / row.sum()


@dataclass(frozen=True)
class ModelPair:
    """A large target model and a small draft model built as its mixture."""

    big: ToyLm
    small: ToyLm
    divergence_eps: float


@dataclass(frozen=True)
class CostModel:
    """Simulated time units under the parallel computational model.

    One batched call to the big model costs `big_call_cost` regardless of
    batch size or length; drafting costs `small_call_cost` per serial draft
    step (the batch axis is free); `overhead_per_iter` covers bookkeeping.
    """

    big_call_cost: float = 1.0
    small_call_cost: float = 0.0
    overhead_per_iter: float = 0.0

    def __post_init__(self):
        if min(self.big_call_cost, self.small_call_cost, self.overhead_per_iter) < 0.0:
            raise ValidationError("costs must be nonnegative")


def make_model_pair(vocab_size: int, order: int, seed: int, eps: float,
                    allow_zeros: bool = False) -> ModelPair:
    """Deterministic (big, small) pair whose per-context divergence scales with eps.

    small's rows are (1-eps)*big + eps*perturbation for an independent seeded
    perturbation model, so eps=0 gives identical models and eps=1 makes the
    draft model independent of the target.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValidationError("eps must lie in [0, 1]")
    seeds = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    big = ToyLm(vocab_size, order, int(seeds[0]), allow_zeros=allow_zeros)
    perturbation = ToyLm(vocab_size, order, int(seeds[1]), allow_zeros=allow_zeros)
    small = _BlendedLm(big, perturbation, eps)
    return ModelPair(big=big, small=small, divergence_eps=eps)


def probe_contexts(vocab_size: int, order: int, count: int = 16,
                   seed: int = 0) -> list[tuple[int, ...]]:
    """A fixed, seeded set of contexts for comparing model pairs."""
    rng = RngStream(seed, path=(vocab_size, order))
    length = max(order, 1)
    draws = rng.uniforms(count * length)
    tokens = (draws * vocab_size).astype(int).clip(0, vocab_size - 1)
    return [tuple(int(t) for t in tokens[i * length:(i + 1) * length]) for i in range(count)]


def mean_probe_tv(pair: ModelPair, contexts: Iterable[Sequence[int]] | None = None) -> float:
    """Average tv(big, small) over a probe set of contexts."""
    if contexts is None:
        contexts = probe_contexts(pair.big.vocab_size, pair.big.order)
    values = [tv_distance(pair.big.next_dist(c), pair.small.next_dist(c)) for c in contexts]
    if not values:
        raise ValidationError("probe set is empty")
    return float(np.mean(values))

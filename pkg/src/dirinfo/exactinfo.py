"""Exact information measures over enumerated joint distributions.

This is the brute-force oracle the structure-learning algorithms consult:
KL divergence, mutual information, directed information, and causally
conditioned directed information, all computed by exhaustive summation in
bits.  Nothing here is estimated; expectations are taken over the full
enumerated joint.

Directed information from a source block ``I1`` to a target block ``T``
causally conditioned on ``I2`` is the sum over time of conditional mutual
informations

    sum_j [ H(T_j | T^{<j}, I2^{<j}) - H(T_j | T^{<j}, I2^{<j}, I1^{<j}) ],

where ``S^{<j}`` denotes all symbols of block ``S`` at times strictly
before ``j``.  Conditioning is causal throughout: no term ever reads a
symbol at the target's own time step or later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import JointDistribution

__all__ = [
    "EPS_BITS",
    "InfoValue",
    "ProcessSelector",
    "cc_directed_information",
    "directed_information",
    "is_causal_markov_chain",
    "kl_divergence",
    "mutual_information",
]

EPS_BITS = 1e-9
"""Default zero threshold, in bits, for exact comparisons against 0."""

_KINDS = frozenset({"KL", "MI", "DI", "CCDI", "entropy-rate"})
_SOURCES = frozenset({"exact", "estimated"})
_CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class InfoValue:
    """One information quantity with its provenance.

    ``value`` is reported in units of ``log_base`` (bits for the exact
    engine).  Values within ``1e-9`` below zero are clamped to exactly 0;
    anything more negative is rejected as a computation bug for exact
    sources.  ``denominator`` is set only on normalized estimated rates.
    """

    value: float
    kind: str
    log_base: float = 2.0
    source: str = "exact"
    denominator: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {sorted(_KINDS)}")
        if self.source not in _SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        value = float(self.value)
        if -_CLAMP_TOL <= value < 0.0:
            value = 0.0
        if value < 0.0:
            raise ValueError(
                f"information value {value!r} is negative beyond tolerance "
                f"{_CLAMP_TOL}; clamp estimated rates before wrapping them"
            )
        object.__setattr__(self, "value", value)
        if self.denominator is not None:
            object.__setattr__(self, "denominator", float(self.denominator))

    def is_zero(self, eps: float = EPS_BITS) -> bool:
        return self.value <= eps


@dataclass(frozen=True)
class ProcessSelector:
    """Which processes a directed-information query connects.

    ``sources`` flow into ``target`` causally conditioned on
    ``conditioning``; the three parts must be pairwise disjoint.
    """

    sources: frozenset[int]
    target: int
    conditioning: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        sources = frozenset(int(k) for k in self.sources)
        conditioning = frozenset(int(w) for w in self.conditioning)
        target = int(self.target)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "conditioning", conditioning)
        object.__setattr__(self, "target", target)
        if target in sources:
            raise ValueError(f"target {target} overlaps the source set {sorted(sources)}")
        if target in conditioning:
            raise ValueError(
                f"target {target} overlaps the conditioning set {sorted(conditioning)}"
            )
        if sources & conditioning:
            raise ValueError(
                f"source and conditioning sets overlap on {sorted(sources & conditioning)}"
            )

    def validate_for(self, m: int) -> None:
        indices = self.sources | {self.target} | self.conditioning
        bad = sorted(i for i in indices if not 0 <= i < m)
        if bad:
            raise ValueError(f"process indices {bad} out of range for m={m}")


def kl_divergence(p, q) -> InfoValue:
    """``D(p || q)`` in bits between two pmf tables of identical shape.

    Zero-probability entries of ``p`` contribute nothing.  If ``p`` puts
    mass where ``q`` does not, the divergence is infinite and reported as
    such rather than raised.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"pmf shapes differ: {p.shape} vs {q.shape}")
    for name, table in (("p", p), ("q", q)):
        if table.min() < 0.0:
            raise ValueError(f"{name} has negative entries")
        if abs(table.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {table.sum()!r}, not 1")
    mask = p > 0.0
    if np.any(q[mask] == 0.0):
        return InfoValue(value=math.inf, kind="KL")
    value = float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))
    return InfoValue(value=value, kind="KL")


def _block_slots(processes: Iterable[int], before: int) -> frozenset[tuple[int, int]]:
    return frozenset((p, t) for p in processes for t in range(before))


def _causal_information_bits(
    joint: JointDistribution,
    sources: frozenset[int],
    targets: frozenset[int],
    conditioning: frozenset[int],
) -> float:
    """Shared exhaustive-summation core; returns raw bits (may be ~-1e-15)."""
    if not targets:
        raise ValueError("target set is empty")
    if not sources:
        return 0.0
    total = 0.0
    past = targets | conditioning
    for j in range(joint.n):
        step = frozenset((i, j) for i in targets)
        base = _block_slots(past, j)
        full = base | _block_slots(sources, j)
        total += joint.conditional_entropy(step, base)
        total -= joint.conditional_entropy(step, full)
    return total


def cc_directed_information(joint: JointDistribution, sel: ProcessSelector) -> InfoValue:
    """Causally conditioned directed information for ``sel``, in bits.

    Equals plain directed information when the conditioning set is empty,
    and 0 (within tolerance) exactly when the sources, conditioning, and
    target form a causal Markov chain.
    """
    sel.validate_for(joint.m)
    value = _causal_information_bits(
        joint, sel.sources, frozenset({sel.target}), sel.conditioning
    )
    kind = "CCDI" if sel.conditioning else "DI"
    return InfoValue(value=value, kind=kind)


def directed_information(joint: JointDistribution, source: int, target: int) -> InfoValue:
    """``I(X_source -> X_target)`` in bits by exhaustive summation."""
    if source == target:
        raise ValueError(f"source and target are both process {source}")
    sel = ProcessSelector(sources=frozenset({source}), target=target)
    sel.validate_for(joint.m)
    value = _causal_information_bits(
        joint, sel.sources, frozenset({target}), frozenset()
    )
    return InfoValue(value=value, kind="DI")


def mutual_information(joint: JointDistribution, a: Iterable[int], b: Iterable[int]) -> InfoValue:
    """Whole-trajectory mutual information between two process blocks."""
    a = frozenset(int(i) for i in a)
    b = frozenset(int(i) for i in b)
    if a & b:
        raise ValueError(f"process blocks overlap on {sorted(a & b)}")
    for i in a | b:
        if not 0 <= i < joint.m:
            raise ValueError(f"process index {i} out of range for m={joint.m}")
    slots_a = _block_slots(a, joint.n)
    slots_b = _block_slots(b, joint.n)
    value = (
        joint.entropy(slots_a) + joint.entropy(slots_b) - joint.entropy(slots_a | slots_b)
    )
    return InfoValue(value=value, kind="MI")


def is_causal_markov_chain(
    joint: JointDistribution,
    x: Iterable[int],
    w: Iterable[int],
    y: Iterable[int],
    eps: float = EPS_BITS,
) -> bool:
    """True when ``x -> w -> y`` holds causally: the flow from ``x`` into
    the block ``y``, conditioned on ``w``, vanishes (within ``eps`` bits).
    """
    x = frozenset(int(i) for i in x)
    w = frozenset(int(i) for i in w)
    y = frozenset(int(i) for i in y)
    if (x & w) or (x & y) or (w & y):
        raise ValueError("x, w, y must be pairwise disjoint")
    if not y:
        raise ValueError("target block y is empty")
    for i in x | w | y:
        if not 0 <= i < joint.m:
            raise ValueError(f"process index {i} out of range for m={joint.m}")
    value = _causal_information_bits(joint, x, y, w)
    return value <= eps

"""Finite-alphabet process panels and positive joint distributions.

Everything exact in this package is computed from one representation: a
network of ``m`` discrete-time stochastic processes, each over a finite
alphabet, whose joint distribution factorizes over time into per-process
conditional tables that read only symbols from strictly earlier time steps.
This module defines that representation (:class:`GenerativeModel`), sampled
data containers (:class:`ProcessPanel`, :class:`Trajectory`), exhaustive
enumeration of the joint distribution, and the marginal/conditional queries
the information-theoretic layer is built on.

Conventions used throughout:

* a *slot* is a pair ``(process, time)`` with ``process in [0, m)`` and
  ``time in [0, n)``; slots are ordered lexicographically, which coincides
  with the flat index ``process * n + time``;
* the conditional table of process ``i`` at time ``j`` has one leading axis
  per context slot (all slots ``(p, t)`` with ``p`` in ``parents(i) ∪ {i}``
  and ``max(0, j - window) <= t < j``, in slot order) and a trailing axis
  over the symbols of process ``i`` itself.  Time ``j`` factors can never
  read symbols at times ``>= j``; the builder derives the context slots
  itself, so such a table is not expressible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Alphabet",
    "CapacityError",
    "ConditionalTable",
    "GenerativeModel",
    "JointDistribution",
    "PositivityReport",
    "ProcessPanel",
    "Trajectory",
    "enumerate_joint",
    "load_model",
    "marginal_conditional",
    "model_from_json",
    "model_to_json",
    "panel_from_csv",
    "panel_to_csv",
    "save_model",
    "trajectory_probability",
    "validate_positivity",
]

DEFAULT_ENUMERATION_CAP = 2 ** 24
"""Largest joint state count :func:`enumerate_joint` will materialize."""

POSITIVITY_FLOOR = 1e-12
"""Default minimum conditional probability accepted as positive."""

ROW_SUM_TOL = 1e-12


class CapacityError(RuntimeError):
    """The requested exact computation exceeds the enumeration cap."""


@dataclass(frozen=True)
class Alphabet:
    """Symbol set ``{0, ..., size - 1}`` of one process."""

    size: int

    def __post_init__(self) -> None:
        if not isinstance(self.size, (int, np.integer)) or self.size < 2:
            raise ValueError(
                f"alphabet size must be an integer >= 2, got {self.size!r}"
            )

    def contains(self, symbol: int) -> bool:
        return 0 <= symbol < self.size


def _coerce_alphabets(alphabets: Sequence[Alphabet | int], m: int) -> tuple[Alphabet, ...]:
    if len(alphabets) != m:
        raise ValueError(f"expected {m} alphabets, got {len(alphabets)}")
    return tuple(a if isinstance(a, Alphabet) else Alphabet(int(a)) for a in alphabets)


def _check_symbols(symbols: np.ndarray, alphabets: Sequence[Alphabet]) -> None:
    for i, alphabet in enumerate(alphabets):
        row = symbols[i]
        if row.min(initial=0) < 0 or row.max(initial=0) >= alphabet.size:
            raise ValueError(
                f"process {i} carries symbols outside its alphabet of size {alphabet.size}"
            )


@dataclass(frozen=True)
class Trajectory:
    """One complete realization: an ``m x n`` matrix of alphabet indices."""

    symbols: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.symbols, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError(f"trajectory must be a 2-d matrix, got shape {arr.shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @property
    def m(self) -> int:
        return self.symbols.shape[0]

    @property
    def n(self) -> int:
        return self.symbols.shape[1]


@dataclass(frozen=True)
class ProcessPanel:
    """Observed data: zero or more sampled trajectories of shared shape.

    Parameters
    ----------
    alphabets:
        One :class:`Alphabet` (or plain size) per process.
    n:
        Horizon; every trajectory covers times ``0 .. n-1``.
    data:
        Sequence of ``m x n`` integer matrices.
    """

    alphabets: tuple[Alphabet, ...]
    n: int
    data: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        alphabets = _coerce_alphabets(self.alphabets, len(self.alphabets))
        object.__setattr__(self, "alphabets", alphabets)
        if self.n < 1:
            raise ValueError(f"horizon must be >= 1, got {self.n}")
        matrices = []
        for k, traj in enumerate(self.data):
            arr = np.asarray(traj, dtype=np.int64)
            if arr.shape != (self.m, self.n):
                raise ValueError(
                    f"trajectory {k} has shape {arr.shape}, expected {(self.m, self.n)}"
                )
            _check_symbols(arr, alphabets)
            arr = arr.copy()
            arr.setflags(write=False)
            matrices.append(arr)
        object.__setattr__(self, "data", tuple(matrices))

    @property
    def m(self) -> int:
        return len(self.alphabets)

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.alphabets)

    @property
    def n_trajectories(self) -> int:
        return len(self.data)


def _context_slots(
    parents: frozenset[int], process: int, time: int, window: int
) -> tuple[tuple[int, int], ...]:
    lo = max(0, time - window)
    members = sorted(parents | {process})
    return tuple((p, t) for p in members for t in range(lo, time))


@dataclass(frozen=True)
class GenerativeModel:
    """Positive joint distribution given by causal per-process factors.

    ``tables[i][j]`` holds ``P(X_{i,j} = s | context)``: one leading axis per
    context slot of ``context_slots(i, j)`` and a trailing axis of length
    ``alphabets[i].size``.  Every entry must be strictly positive and every
    row must sum to one within ``1e-12``.
    """

    m: int
    n: int
    alphabets: tuple[Alphabet, ...]
    parents: tuple[frozenset[int], ...]
    window: int
    tables: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError("need m >= 1 processes and n >= 1 time steps")
        if self.window < 0:
            raise ValueError(f"window must be >= 0, got {self.window}")
        alphabets = _coerce_alphabets(self.alphabets, self.m)
        object.__setattr__(self, "alphabets", alphabets)

        if len(self.parents) != self.m:
            raise ValueError(f"expected {self.m} parent sets, got {len(self.parents)}")
        parents = tuple(frozenset(int(p) for p in ps) for ps in self.parents)
        for i, ps in enumerate(parents):
            if i in ps:
                raise ValueError(f"process {i} lists itself as a parent")
            bad = [p for p in ps if not 0 <= p < self.m]
            if bad:
                raise ValueError(f"process {i} has out-of-range parents {bad}")
        object.__setattr__(self, "parents", parents)

        if len(self.tables) != self.m:
            raise ValueError(f"expected {self.m} table groups, got {len(self.tables)}")
        checked: list[tuple[np.ndarray, ...]] = []
        for i in range(self.m):
            group = self.tables[i]
            if len(group) != self.n:
                raise ValueError(
                    f"process {i} has {len(group)} tables, expected {self.n}"
                )
            rows = []
            for j in range(self.n):
                table = np.asarray(group[j], dtype=float)
                expected = tuple(
                    alphabets[p].size for p, _ in self.context_slots(i, j)
                ) + (alphabets[i].size,)
                if table.shape != expected:
                    raise ValueError(
                        f"table for process {i} at time {j} has shape "
                        f"{table.shape}, expected {expected}; time-{j} factors "
                        f"may only condition on symbols at times < {j}"
                    )
                if table.min() <= 0.0:
                    raise ValueError(
                        f"table for process {i} at time {j} contains a "
                        f"non-positive entry; all conditional probabilities "
                        f"must be strictly positive"
                    )
                sums = table.sum(axis=-1)
                if np.abs(sums - 1.0).max() > ROW_SUM_TOL:
                    worst = float(np.abs(sums - 1.0).max())
                    raise ValueError(
                        f"table for process {i} at time {j} has a row summing "
                        f"to 1 {worst:.3e} away from 1.0 (tolerance {ROW_SUM_TOL})"
                    )
                table = table.copy()
                table.setflags(write=False)
                rows.append(table)
            checked.append(tuple(rows))
        object.__setattr__(self, "tables", tuple(checked))

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.alphabets)

    def context_slots(self, process: int, time: int) -> tuple[tuple[int, int], ...]:
        """Slots the factor of ``process`` at ``time`` conditions on."""
        return _context_slots(self.parents[process], process, time, self.window)

    def state_count(self) -> int:
        count = 1
        for a in self.alphabets:
            count *= a.size ** self.n
        return count

    def parent_graph(self) -> dict[int, frozenset[int]]:
        return {i: self.parents[i] for i in range(self.m)}


def trajectory_probability(model: GenerativeModel, traj: Trajectory | np.ndarray) -> float:
    """Exact probability of one trajectory under the model.

    The product of ``m * n`` conditional factors is accumulated in log space
    and exponentiated once, so long horizons do not underflow factor by
    factor.  Strictly positive by the model's positivity invariant.
    """
    symbols = traj.symbols if isinstance(traj, Trajectory) else np.asarray(traj, dtype=np.int64)
    if symbols.shape != (model.m, model.n):
        raise ValueError(
            f"trajectory shape {symbols.shape} does not match model "
            f"shape {(model.m, model.n)}"
        )
    _check_symbols(symbols, model.alphabets)
    log_p = 0.0
    for i in range(model.m):
        for j in range(model.n):
            idx = tuple(symbols[p, t] for p, t in model.context_slots(i, j))
            idx += (symbols[i, j],)
            log_p += math.log(float(model.tables[i][j][idx]))
    return math.exp(log_p)


@dataclass(frozen=True)
class JointDistribution:
    """Exhaustively enumerated joint distribution over all ``m * n`` slots.

    ``probs`` carries one axis per slot, in slot order (axis of ``(p, t)``
    is ``p * n + t``).  Marginal entropies are memoized because the
    information-theoretic layer asks for the same subsets repeatedly.
    """

    m: int
    n: int
    alphabet_sizes: tuple[int, ...]
    probs: np.ndarray
    _entropy_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def axis(self, slot: tuple[int, int]) -> int:
        p, t = slot
        if not (0 <= p < self.m and 0 <= t < self.n):
            raise ValueError(f"slot {slot} outside {self.m} processes x {self.n} times")
        return p * self.n + t

    @property
    def slots(self) -> tuple[tuple[int, int], ...]:
        return tuple((p, t) for p in range(self.m) for t in range(self.n))

    def marginal(self, slots: Iterable[tuple[int, int]]) -> np.ndarray:
        """Marginal over ``slots``; result axes follow slot order."""
        keep = sorted({self.axis(s) for s in slots})
        drop = tuple(ax for ax in range(self.probs.ndim) if ax not in keep)
        return self.probs.sum(axis=drop) if drop else self.probs

    def entropy(self, slots: Iterable[tuple[int, int]]) -> float:
        """Shannon entropy in bits of the marginal over ``slots``."""
        key = frozenset(self.axis(s) for s in slots)
        hit = self._entropy_cache.get(key)
        if hit is not None:
            return hit
        if not key:
            value = 0.0
        else:
            p = self.marginal((divmod(ax, self.n) for ax in key)).ravel()
            p = p[p > 0.0]
            value = float(-np.sum(p * np.log2(p)))
        self._entropy_cache[key] = value
        return value

    def conditional_entropy(
        self,
        target_slots: Iterable[tuple[int, int]],
        given_slots: Iterable[tuple[int, int]] = (),
    ) -> float:
        """``H(target | given)`` in bits, via ``H(t, g) - H(g)``."""
        target = frozenset(target_slots)
        given = frozenset(given_slots)
        return self.entropy(target | given) - self.entropy(given)

    def total_mass(self) -> float:
        return float(self.probs.sum())

    def as_table(self) -> dict[tuple[int, ...], float]:
        """Flat mapping from full slot-order symbol tuples to probability."""
        out = {}
        for idx in np.ndindex(self.probs.shape):
            out[idx] = float(self.probs[idx])
        return out


def _embed_factor(
    table: np.ndarray, slot_axes: Sequence[int], full_shape: Sequence[int]
) -> np.ndarray:
    """Reshape a factor so it broadcasts against the full joint array."""
    order = np.argsort(np.asarray(slot_axes, dtype=np.int64), kind="stable")
    arranged = np.transpose(table, order)
    shape = [1] * len(full_shape)
    for ax in slot_axes:
        shape[ax] = full_shape[ax]
    return arranged.reshape(shape)


def enumerate_joint(
    model: GenerativeModel, cap: int = DEFAULT_ENUMERATION_CAP
) -> JointDistribution:
    """Materialize the full joint distribution the model defines.

    Raises
    ------
    CapacityError
        If the joint state count exceeds ``cap``; callers should fall back
        to the sample-based estimation path.
    """
    count = model.state_count()
    if count > cap:
        raise CapacityError(
            f"joint state space has {count} entries, beyond the cap of {cap}; "
            f"use the estimation pipeline instead"
        )
    n = model.n
    sizes = model.alphabet_sizes
    full_shape = tuple(sizes[p] for p in range(model.m) for _ in range(n))
    probs = np.ones(full_shape, dtype=float)
    for i in range(model.m):
        for j in range(model.n):
            slots = model.context_slots(i, j) + ((i, j),)
            axes = [p * n + t for p, t in slots]
            probs = probs * _embed_factor(model.tables[i][j], axes, full_shape)
    joint = JointDistribution(
        m=model.m, n=model.n, alphabet_sizes=sizes, probs=probs
    )
    mass = joint.total_mass()
    if abs(mass - 1.0) > 1e-9:
        raise AssertionError(f"enumerated joint sums to {mass!r}, not 1")
    return joint


@dataclass(frozen=True)
class ConditionalTable:
    """Conditional pmf of one slot given a set of earlier slots.

    ``probs`` maps each realization of the given slots (a symbol tuple in
    the order of ``given``) to a pmf vector over the target symbols.
    Contexts with zero marginal probability are omitted.
    """

    target: tuple[int, int]
    given: tuple[tuple[int, int], ...]
    probs: dict[tuple[int, ...], np.ndarray]

    def pmf(self, context: tuple[int, ...] = ()) -> np.ndarray:
        return self.probs[tuple(context)]


def marginal_conditional(
    joint: JointDistribution,
    target: tuple[int, int],
    given: Iterable[tuple[int, int]] = (),
) -> ConditionalTable:
    """Conditional pmf ``P(target | given)`` from the enumerated joint.

    Enforces the causal-conditioning convention: every given slot must lie
    strictly before the target in time.
    """
    t_proc, t_time = target
    given = tuple(sorted(set(given)))
    for p, t in given:
        if t >= t_time:
            raise ValueError(
                f"conditioning slot ({p}, {t}) does not precede target time "
                f"{t_time}; factors may only condition on the past"
            )
    if target in given:
        raise ValueError("target slot cannot appear in the given set")

    slots = given + (target,)
    marg = joint.marginal(slots)
    # joint.marginal orders axes by slot id; move the target axis last.
    ordered = sorted(slots, key=lambda s: joint.axis(s))
    t_pos = ordered.index(target)
    marg = np.moveaxis(marg, t_pos, -1)
    ctx_order = [s for s in ordered if s != target]
    # Re-order the context axes to match the sorted `given` tuple.
    perm = [ctx_order.index(s) for s in given]
    if perm and perm != list(range(len(perm))):
        marg = np.transpose(marg, perm + [len(perm)])

    probs: dict[tuple[int, ...], np.ndarray] = {}
    if not given:
        mass = marg.sum()
        probs[()] = marg / mass
    else:
        ctx_mass = marg.sum(axis=-1)
        for idx in np.ndindex(*marg.shape[:-1]):
            mass = float(ctx_mass[idx])
            if mass > 0.0:
                probs[idx] = marg[idx] / mass
    return ConditionalTable(target=target, given=given, probs=probs)


@dataclass(frozen=True)
class PositivityReport:
    """Outcome of a positivity audit over all conditional tables."""

    ok: bool
    floor: float
    violations: tuple[tuple[int, int, tuple[int, ...]], ...]

    def __bool__(self) -> bool:
        return self.ok


def validate_positivity(
    model: GenerativeModel, floor: float = POSITIVITY_FLOOR
) -> PositivityReport:
    """Check that every conditional probability is at least ``floor``.

    Returns a report listing each offending ``(process, time, context)``
    rather than raising, so callers can surface all violations at once.
    """
    violations: list[tuple[int, int, tuple[int, ...]]] = []
    for i in range(model.m):
        for j in range(model.n):
            table = model.tables[i][j]
            bad = np.argwhere(table < floor)
            for idx in bad:
                violations.append((i, j, tuple(int(v) for v in idx[:-1])))
    return PositivityReport(ok=not violations, floor=floor, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Panel CSV format: header `t,p0,...,p{m-1}`, one row per time step, blank
# line between trajectories, symbols as nonnegative integers.
# ---------------------------------------------------------------------------

def panel_to_csv(panel: ProcessPanel, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"p{i}" for i in range(panel.m)])
        for k, traj in enumerate(panel.data):
            if k > 0:
                writer.writerow([])
            for t in range(panel.n):
                writer.writerow([t] + [int(traj[i, t]) for i in range(panel.m)])


def panel_from_csv(path, alphabets: Sequence[Alphabet | int] | None = None) -> ProcessPanel:
    """Read a panel written by :func:`panel_to_csv`.

    When ``alphabets`` is omitted, each process alphabet size is inferred as
    ``max(symbol) + 1`` (at least 2).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty panel file")
    header = rows[0]
    if not header or header[0] != "t":
        raise ValueError(f"{path}: expected header starting with 't', got {header}")
    m = len(header) - 1
    if m < 1 or header[1:] != [f"p{i}" for i in range(m)]:
        raise ValueError(f"{path}: malformed header {header}")

    blocks: list[list[list[int]]] = [[]]
    for row in rows[1:]:
        if not row or all(cell.strip() == "" for cell in row):
            if blocks[-1]:
                blocks.append([])
            continue
        if len(row) != m + 1:
            raise ValueError(f"{path}: row {row} has {len(row)} fields, expected {m + 1}")
        blocks[-1].append([int(cell) for cell in row])
    if not blocks[-1]:
        blocks.pop()
    if not blocks:
        raise ValueError(f"{path}: no data rows")

    n = len(blocks[0])
    matrices = []
    for b, block in enumerate(blocks):
        if len(block) != n:
            raise ValueError(
                f"{path}: trajectory {b} has {len(block)} rows, expected {n}"
            )
        times = [r[0] for r in block]
        if times != list(range(n)):
            raise ValueError(f"{path}: trajectory {b} times are not 0..{n - 1}")
        matrices.append(np.array(block, dtype=np.int64)[:, 1:].T)

    if alphabets is None:
        stacked = np.concatenate(matrices, axis=1)
        alphabets = [max(2, int(stacked[i].max()) + 1) for i in range(m)]
    return ProcessPanel(
        alphabets=_coerce_alphabets(list(alphabets), m), n=n, data=tuple(matrices)
    )


# ---------------------------------------------------------------------------
# Model JSON: {m, n, window, alphabets, parents, tables}; tables are nested
# lists in context-slot order with the target symbol axis last.
# ---------------------------------------------------------------------------

def model_to_json(model: GenerativeModel) -> dict:
    return {
        "m": model.m,
        "n": model.n,
        "window": model.window,
        "alphabets": list(model.alphabet_sizes),
        "parents": {str(i): sorted(model.parents[i]) for i in range(model.m)},
        "tables": {
            str(i): [model.tables[i][j].tolist() for j in range(model.n)]
            for i in range(model.m)
        },
    }


def model_from_json(payload: Mapping) -> GenerativeModel:
    try:
        m = int(payload["m"])
        n = int(payload["n"])
        window = int(payload["window"])
        sizes = [int(s) for s in payload["alphabets"]]
        parents = tuple(
            frozenset(int(p) for p in payload["parents"][str(i)]) for i in range(m)
        )
        tables = tuple(
            tuple(np.asarray(payload["tables"][str(i)][j], dtype=float) for j in range(n))
            for i in range(m)
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed model payload: {exc}") from exc
    return GenerativeModel(
        m=m, n=n, alphabets=tuple(Alphabet(s) for s in sizes),
        parents=parents, window=window, tables=tables,
    )


def save_model(model: GenerativeModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> GenerativeModel:
    with open(path) as fh:
        return model_from_json(json.load(fh))

"""Collocation sets from iid uniform draws or an unscrambled 2D Sobol stream."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, SequenceExhausted

_BITS = 32


@dataclass(frozen=True)
class CollocationSets:
    interior: np.ndarray            # (M_int, 2) columns x, t
    spatial_boundary: np.ndarray    # (M_sb, 2), x on a face
    temporal_boundary: np.ndarray   # (M_tb,)

    @property
    def counts(self):
        return len(self.interior), len(self.spatial_boundary), len(self.temporal_boundary)

    def rows(self):
        for x, t in self.interior:
            yield "int", x, t
        for x, t in self.spatial_boundary:
            yield "sb", x, t
        for x in self.temporal_boundary:
            yield "tb", x, 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "x", "t"])
            for kind, x, t in self.rows():
                w.writerow([kind, repr(float(x)), repr(float(t))])
        return Path(path)

    @classmethod
    def from_csv(cls, path):
        groups = {"int": [], "sb": [], "tb": []}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                groups[row["kind"]].append((float(row["x"]), float(row["t"])))
        tb = np.array([x for x, _ in groups["tb"]])
        return cls(np.array(groups["int"]).reshape(-1, 2), np.array(groups["sb"]).reshape(-1, 2), tb)


def _check_counts(counts):
    if len(counts) != 3 or any(int(c) < 1 for c in counts):
        raise ConfigurationError(f"counts must be three positive integers, got {counts}")
    return tuple(int(c) for c in counts)


def _faces(domain, m_sb):
    a, b = domain
    n_a = m_sb - m_sb // 2
    return np.concatenate([np.full(n_a, float(a)), np.full(m_sb - n_a, float(b))])


def _open_unit(rng, n):
    """Uniform draws in the open interval (0, 1)."""
    u = rng.random(n)
    u[u == 0.0] = 0.5
    return u


def sample_uniform(domain, T, counts, seed) -> CollocationSets:
    """iid uniform points; ``counts`` is ``(M_int, M_sb, M_tb)``.

    Spatial-boundary points are split evenly between the faces, any odd
    point going to the left face.
    """
    m_int, m_sb, m_tb = _check_counts(counts)
    a, b = domain
    rng = np.random.default_rng(seed)
    interior = np.column_stack([a + (b - a) * _open_unit(rng, m_int), T * _open_unit(rng, m_int)])
    sb = np.column_stack([_faces(domain, m_sb), T * rng.random(m_sb)])
    tb = a + (b - a) * rng.random(m_tb)
    return CollocationSets(interior, sb, tb)


def _direction_numbers(dim):
    """32 direction integers per dimension (dimension 0: identity, 1: polynomial x + 1)."""
    k = np.arange(1, _BITS + 1)
    if dim == 0:
        m = np.ones(_BITS, dtype=np.uint64)
    else:
        m = [1]
        for _ in range(_BITS - 1):
            m.append((m[-1] << 1) ^ m[-1])
        m = np.array(m, dtype=np.uint64)
    return (m << (_BITS - k).astype(np.uint64)).astype(np.uint64)


@dataclass
class SobolState:
    """Generator position; ``index`` is the next point to emit (0 is the origin)."""

    dimension: int = 2
    index: int = 0
    direction_numbers: list = field(default_factory=list)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError("only 1D and 2D Sobol streams are supported")
        if not self.direction_numbers:
            self.direction_numbers = [_direction_numbers(d) for d in range(self.dimension)]


def _sobol_points(state, indices):
    idx = np.asarray(indices, dtype=np.uint64)
    out = np.zeros((len(idx), state.dimension), dtype=np.uint64)
    for bit in range(_BITS):
        shifted = idx >> np.uint64(bit)
        if not shifted.any():
            break
        on = (shifted & np.uint64(1)).astype(bool)
        for d in range(state.dimension):
            out[on, d] ^= state.direction_numbers[d][bit]
    return out.astype(float) / 2.0 ** _BITS


def sobol_next(state: SobolState):
    """Return the point at ``state.index`` and advance.

    Points are generated in natural index order (bits of the index select
    the direction numbers), so dimension 0 is the base-2 van der Corput
    sequence and every prefix of length ``2**k`` is a (0, k, 2)-net.
    """
    if state.index >= 2 ** _BITS:
        raise SequenceExhausted("Sobol index exceeds 2**32")
    p = _sobol_points(state, [state.index])[0]
    state.index += 1
    return p


def sobol_block(state: SobolState, n):
    """The next ``n`` points as an ``(n, dimension)`` array."""
    if state.index + n > 2 ** _BITS:
        raise SequenceExhausted("Sobol index exceeds 2**32")
    pts = _sobol_points(state, np.arange(state.index, state.index + n))
    state.index += n
    return pts


def sample_sobol(domain, T, counts) -> CollocationSets:
    """Deterministic low-discrepancy sets; every stream starts at index 1."""
    m_int, m_sb, m_tb = _check_counts(counts)
    a, b = domain
    p = sobol_block(SobolState(2, index=1), m_int)
    interior = np.column_stack([a + (b - a) * p[:, 0], T * p[:, 1]])
    # both faces draw their times from the start of the same 1D stream
    n_a = m_sb - m_sb // 2
    stream = T * sobol_block(SobolState(1, index=1), n_a)[:, 0]
    sb_t = np.concatenate([stream, stream[:m_sb - n_a]])
    sb = np.column_stack([_faces(domain, m_sb), sb_t])
    tb = a + (b - a) * sobol_block(SobolState(1, index=1), m_tb)[:, 0]
    return CollocationSets(interior, sb, tb)


def sample(sampler, domain, T, counts, seed=0) -> CollocationSets:
    if sampler == "uniform":
        return sample_uniform(domain, T, counts, seed)
    if sampler == "sobol":
        return sample_sobol(domain, T, counts)
    raise ConfigurationError(f"unknown sampler {sampler!r}")

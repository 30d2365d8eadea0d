"""Amplitude-oracle access to a target state.

Protocols never read a target vector directly; they ask an oracle for
``<z|psi>`` (``std``) or ``<z|H^{(x)n}|psi>`` (``had``) and every answer is
counted.
"""
from __future__ import annotations

import threading
from abc import ABC, abstractmethod

import numpy as np

from .statevec import BASES, HAD, STD, StateVector, bits_to_index, check_split, fwht


class AmplitudeOracle(ABC):
    """Query interface O_psi(z, b) with a thread-safe query counter."""

    n: int

    def __init__(self, n: int):
        self.n = n
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def _charge(self, queries: int) -> None:
        with self._lock:
            self._count += queries

    def query(self, z, basis: str) -> complex:
        index = bits_to_index(z, self.n)
        _check_basis(basis)
        self._charge(1)
        return complex(self._lookup(np.array([index]), basis)[0])

    def query_many(self, indices: np.ndarray, basis: str) -> np.ndarray:
        """Answer one query per entry of ``indices``; the count grows by ``len(indices)``."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= 2**self.n):
            raise ValueError("query index out of range")
        _check_basis(basis)
        self._charge(int(indices.size))
        return self._lookup(indices, basis)

    @abstractmethod
    def _lookup(self, indices: np.ndarray, basis: str) -> np.ndarray:
        ...


def _check_basis(basis: str) -> None:
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")


class StateOracle(AmplitudeOracle):
    """In-memory oracle backed by a ``StateVector``.

    The Hadamard-basis amplitudes are computed once on construction.
    """

    def __init__(self, state: StateVector):
        super().__init__(state.n)
        self._tables = {STD: state.amplitudes, HAD: fwht(state.amplitudes)}

    def _lookup(self, indices, basis):
        return self._tables[basis][indices]


def query(oracle: AmplitudeOracle, z, basis: str) -> complex:
    return oracle.query(z, basis)


def conditional_via_oracle(oracle: AmplitudeOracle, z, r: int, basis: str) -> np.ndarray:
    """Unnormalized conditional block ``z`` from exactly ``2**(n - r)`` queries."""
    check_split(oracle.n, r)
    prefix = z if isinstance(z, (int, np.integer)) else bits_to_index(z, r)
    if not 0 <= prefix < 2**r:
        raise ValueError(f"block index {prefix} out of range for r={r}")
    d = 2 ** (oracle.n - r)
    return oracle.query_many(prefix * d + np.arange(d), basis)

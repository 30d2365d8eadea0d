"""Dense statevector arithmetic.

Amplitude index ``x`` of an ``n``-qubit state is read big-endian: the first
``r`` bits of ``x`` select the conditioned block when the state is split as
``|x> = |z>|w>`` with ``z`` of length ``r``.  A state reshaped to
``(2**r, 2**(n - r))`` therefore has block ``z`` in row ``z``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MAX_QUBITS = 24
NORM_TOL = 1e-9
RENORM_TOL = 1e-6
ZERO_BLOCK = 1e-12

STD = "std"
HAD = "had"
BASES = (STD, HAD)


class SizeGuardError(ValueError):
    """A requested size exceeds a memory or cost guard."""


# ---------------------------------------------------------------------------
# seeding


_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    """Reproducible random stream identified by ``(master, stream)``.

    Streams are independent Philox generators keyed through numpy's
    ``SeedSequence`` hash of the pair, so any trial can be replayed without
    touching shared generator state.
    """

    master: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise ValueError(f"stream index must be >= 0, got {self.stream}")

    def _sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.master & _MASK64, self.stream])

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self._sequence()))

    def spawn(self, index: int) -> "Seed":
        """Child seed for sub-task ``index`` (shots, components, ...)."""
        derived = int(self._sequence().generate_state(1, np.uint64)[0])
        return Seed(derived, index)


SeedLike = Union[Seed, int, np.random.Generator]


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, Seed):
        return seed.rng()
    return Seed(int(seed)).rng()


# ---------------------------------------------------------------------------
# states


def _num_qubits(length: int) -> int:
    if length < 1 or length & (length - 1):
        raise ValueError(f"length {length} is not a power of two")
    return length.bit_length() - 1


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm complex amplitude vector on ``n`` qubits.

    Inputs within ``RENORM_TOL`` of unit norm are rescaled; anything further
    off raises.  The amplitude array is made read-only.
    """

    n: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"n must be in [1, {MAX_QUBITS}], got {self.n}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != 2**self.n:
            raise ValueError(f"expected {2**self.n} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > RENORM_TOL:
            raise ValueError(f"state norm {norm!r} is not 1 (tolerance {RENORM_TOL})")
        if norm != 1.0:
            amps = amps / norm
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        return cls(_num_qubits(amps.size), amps)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        """Computational basis state, e.g. ``StateVector.basis("01")``."""
        amps = np.zeros(2 ** len(bits), dtype=np.complex128)
        amps[bits_to_index(bits, len(bits))] = 1.0
        return cls(len(bits), amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        _check_same_n(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.inner(other)) ** 2

    def kron(self, other: "StateVector") -> "StateVector":
        return StateVector(self.n + other.n, np.kron(self.amplitudes, other.amplitudes))

    def permute_qubits(self, order: Sequence[int]) -> "StateVector":
        """Qubit ``order[j]`` of ``self`` becomes qubit ``j`` of the result."""
        if sorted(order) != list(range(self.n)):
            raise ValueError(f"{order!r} is not a permutation of range({self.n})")
        tensor = self.amplitudes.reshape((2,) * self.n)
        return StateVector(self.n, np.transpose(tensor, order).reshape(-1))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StateVector":
        pairs = np.asarray(data["amplitudes"], dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("amplitudes must be a list of [re, im] pairs")
        return cls(int(data["n"]), pairs[:, 0] + 1j * pairs[:, 1])


def _check_same_n(a: StateVector, b: StateVector) -> None:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n} qubits")


def save_state(state: StateVector, path: Union[str, os.PathLike]) -> None:
    with open(path, "w") as fh:
        json.dump(state.to_dict(), fh)


def load_state(path: Union[str, os.PathLike]) -> StateVector:
    with open(path) as fh:
        return StateVector.from_dict(json.load(fh))


def bits_to_index(z, length: int) -> int:
    """Big-endian index of a bit string (``"0110"`` or a sequence of 0/1)."""
    if isinstance(z, str):
        if len(z) != length or set(z) - {"0", "1"}:
            raise ValueError(f"expected a {length}-bit string, got {z!r}")
        return int(z, 2) if length else 0
    bits = list(z)
    if len(bits) != length or any(b not in (0, 1) for b in bits):
        raise ValueError(f"expected {length} bits, got {z!r}")
    index = 0
    for b in bits:
        index = (index << 1) | int(b)
    return index


def index_to_bits(index: int, length: int) -> str:
    return format(index, f"0{length}b") if length else ""


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussians: real and imaginary variance 1/2, so |g|^2 ~ Exp(1)."""
    scale = np.sqrt(0.5)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def haar_state(n: int, seed: SeedLike) -> StateVector:
    """Haar-random pure state from 2**n normalized complex Gaussians."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"n must be in [1, {MAX_QUBITS}], got {n}")
    g = complex_gaussian(as_rng(seed), 2**n)
    return StateVector(n, g / np.linalg.norm(g))


# ---------------------------------------------------------------------------
# Walsh-Hadamard transform


def fwht(v, axis: int = -1) -> np.ndarray:
    """Normalized Walsh-Hadamard transform along ``axis``.

    Output position ``z`` holds ``2**(-m/2) * sum_w (-1)**(z.w) v[w]``.  Runs
    the radix-2 butterfly on a copy, O(m 2**m) per transformed vector.
    """
    a = np.moveaxis(np.array(v, dtype=np.complex128), axis, -1)
    size = a.shape[-1]
    m = _num_qubits(size)
    lead = a.shape[:-1]
    a = np.ascontiguousarray(a)
    h = 1
    while h < size:
        view = a.reshape(lead + (size // (2 * h), 2, h))
        top = view[..., 0, :].copy()
        bottom = view[..., 1, :]
        view[..., 0, :] += bottom
        top -= bottom
        view[..., 1, :] = top
        h *= 2
    a *= 2.0 ** (-m / 2)
    return np.moveaxis(a, -1, axis)


def hadamard_matrix(m: int) -> np.ndarray:
    """Dense H^{(x)m} with entries (-1)^(i.k)/sqrt(2**m); reference use only."""
    h1 = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    out = np.ones((1, 1))
    for _ in range(m):
        out = np.kron(out, h1)
    return out


# ---------------------------------------------------------------------------
# conditional decompositions


@dataclass(frozen=True, eq=False)
class ConditionalDecomposition:
    """Unnormalized conditionals of a state split after its first ``r`` qubits.

    ``blocks[z]`` is the sub-vector of the state (``std``) or of
    ``H^{(x)n}`` applied to the state (``had``) with the first ``r`` bits equal
    to ``z``.  ``weights[z]`` is the outcome probability of ``z``.
    """

    n: int
    r: int
    basis: str
    blocks: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.n - self.r

    @property
    def weights(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.blocks.conj(), self.blocks).real

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def block(self, z) -> np.ndarray:
        if not isinstance(z, (int, np.integer)):
            z = bits_to_index(z, self.r)
        return self.blocks[z]

    def normalized(self) -> np.ndarray:
        """Blocks scaled to unit norm; blocks of norm <= 1e-12 are left as zeros."""
        norms = self.norms
        out = np.zeros_like(self.blocks)
        live = norms > ZERO_BLOCK
        out[live] = self.blocks[live] / norms[live, None]
        return out

    def reassemble(self) -> StateVector:
        flat = self.blocks.reshape(-1)
        if self.basis == HAD:
            flat = fwht(flat)
        return StateVector(self.n, flat)

    def compatible(self, other: "ConditionalDecomposition") -> bool:
        return (self.n, self.r, self.basis) == (other.n, other.r, other.basis)


def check_split(n: int, r: int) -> None:
    if not 1 <= r <= n - 1:
        raise ValueError(f"split r={r} outside [1, {n - 1}] for n={n}")


def condition(state: StateVector, r: int, basis: str = STD) -> ConditionalDecomposition:
    check_split(state.n, r)
    if basis == STD:
        amps = state.amplitudes
    elif basis == HAD:
        amps = fwht(state.amplitudes)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    blocks = np.array(amps, dtype=np.complex128).reshape(2**r, 2 ** (state.n - r))
    return ConditionalDecomposition(state.n, r, basis, blocks)


def had_blocks_from_std(std: ConditionalDecomposition) -> np.ndarray:
    """Hadamard-basis blocks built block-wise from the standard ones.

    ``hat f_z = 2**(-r/2) sum_w (-1)**(z.w) H^{(x)(n-r)} f_w``: transform each
    block, then mix blocks with the r-qubit transform across the block index.
    """
    return fwht(fwht(std.blocks, axis=1), axis=0)


def sample_outcome(decomp: ConditionalDecomposition, seed: SeedLike) -> int:
    """Draw outcome ``z`` (as an index) with probability ``weights[z]``."""
    return draw_index(decomp.weights, as_rng(seed))


def draw_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(weights)
    total = cdf[-1]
    if not np.isfinite(total) or abs(total - 1.0) > NORM_TOL * 10 or np.any(weights < -NORM_TOL):
        raise ValueError("weights do not form a probability distribution")
    z = int(np.searchsorted(cdf, rng.random() * total, side="right"))
    return min(z, len(weights) - 1)


def pure_trace_distance(a: StateVector, b: StateVector) -> float:
    """sqrt(1 - |<a|b>|^2) for pure states."""
    return float(np.sqrt(max(0.0, 1.0 - a.fidelity(b))))

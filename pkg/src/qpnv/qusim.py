"""Dense qudit statevector engine.

A register holds the exact complex amplitude vector over a list of qudit
sites (site 0 is the most significant index). The engine provides the
entangled-state preparations, diagonal phase operators, site-local Fourier
transforms, and Born-rule projective measurement that the voting and
ledger layers consume. Measurement samples from a generator owned by the
register, so entire simulations replay from one root seed.

Tolerances: construction and unitarity checks hold to 1e-12, the running
norm invariant to 1e-9; statistical laws are asserted by the test suite
with explicit trial counts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

DIMENSION_GUARD = 2**24  # maximum product of site levels for any register
NORM_TOL = 1e-9


class Basis(enum.Enum):
    """Measurement basis; Fourier is the site-local DFT basis."""

    COMPUTATIONAL = "computational"
    FOURIER = "fourier"


_FOURIER_CACHE: dict[int, np.ndarray] = {}


def fourier_matrix(m: int) -> np.ndarray:
    """Site-local DFT with kernel exp(+2i pi j k / m) / sqrt(m); symmetric, unitary."""
    mat = _FOURIER_CACHE.get(m)
    if mat is None:
        j = np.arange(m)
        mat = np.exp(2j * np.pi * np.outer(j, j) / m) / math.sqrt(m)
        mat.setflags(write=False)
        _FOURIER_CACHE[m] = mat
    return mat


@dataclass(frozen=True)
class WeightedHyperedge:
    """Diagonal phase edge over a set of sites.

    Multiplies every basis string whose member sites all sit at their top
    level (dim - 1) by exp(i pi weight). Weight 1 on qubit sites is the
    plain controlled-Z with len(sites) - 1 controls.
    """

    sites: tuple[int, ...]
    weight: float = 1.0

    def __post_init__(self):
        sites = tuple(sorted(int(s) for s in self.sites))
        if not sites:
            raise ValueError("hyperedge needs at least one site")
        if len(set(sites)) != len(sites):
            raise ValueError("hyperedge sites must be distinct")
        # closed interval: weight 1 is the plain C^kZ default
        if not 0.0 <= float(self.weight) <= 1.0:
            raise ValueError(f"edge weight {self.weight} outside [0, 1]")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(eq=False)
class ParticleHandle:
    """Reference to one site of a register; owned by at most one node."""

    register: "QuditRegister"
    site: int
    owner: str | None = None

    def __post_init__(self):
        if not 0 <= self.site < self.register.n_sites:
            raise ValueError(f"site {self.site} outside register")

    @property
    def handle_id(self) -> str:
        return f"{self.register.label or 'reg'}#{self.site}"


class QuditRegister:
    """Complex amplitude vector over qudit sites with seeded Born sampling."""

    __slots__ = ("dims", "amps", "rng", "label", "_script")

    def __init__(self, dims: Sequence[int], amps, rng: np.random.Generator, label: str | None = None):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 2 for d in dims):
            raise ValueError("every site needs at least 2 levels")
        total = math.prod(dims)
        if total > DIMENSION_GUARD:
            raise ValueError(f"register dimension {total} exceeds guard {DIMENSION_GUARD}")
        amps = np.array(amps, dtype=np.complex128).reshape(-1)
        if amps.size != total:
            raise ValueError(f"amplitude vector length {amps.size} != {total}")
        self.dims = dims
        self.amps = amps
        self.rng = rng
        self.label = label
        self._script: dict[int, int] | None = None
        self._check_norm()

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return self.amps.size

    def _check_norm(self):
        nrm = float(np.linalg.norm(self.amps))
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"amplitude norm drifted to {nrm}")

    def _site_ok(self, site: int):
        if not 0 <= site < self.n_sites:
            raise ValueError(f"site {site} out of range for {self.n_sites} sites")

    # -- transformations -------------------------------------------------

    def apply_phase(self, site: int, theta: float):
        """Multiply every basis string with this 2-level site at 1 by exp(i theta)."""
        self._site_ok(site)
        if self.dims[site] != 2:
            raise ValueError("phase encoding requires a 2-level site")
        view = self.amps.reshape(self.dims)
        index: list = [slice(None)] * self.n_sites
        index[site] = 1
        view[tuple(index)] *= np.exp(1j * theta)
        self._check_norm()

    def apply_hyperedge(self, edge: WeightedHyperedge):
        """Apply the edge's phase to the all-top-level configuration of its sites."""
        for s in edge.sites:
            self._site_ok(s)
        view = self.amps.reshape(self.dims)
        index: list = [slice(None)] * self.n_sites
        for s in edge.sites:
            index[s] = self.dims[s] - 1
        view[tuple(index)] *= np.exp(1j * np.pi * edge.weight)
        self._check_norm()

    def fourier_site(self, site: int, inverse: bool = False):
        """Site-local DFT change of basis (conjugated kernel when inverse)."""
        self._site_ok(site)
        mat = fourier_matrix(self.dims[site])
        if inverse:
            mat = mat.conj()
        view = self.amps.reshape(self.dims)
        out = np.tensordot(mat, view, axes=([1], [site]))
        self.amps = np.ascontiguousarray(np.moveaxis(out, 0, site)).reshape(-1)
        self._check_norm()

    # -- measurement -----------------------------------------------------

    def script_outcomes(self, values: Sequence[int]):
        """Install forced measurement outcomes, one value per site.

        Verification-only hook: subsequent measurements return the scripted
        values instead of sampling, but still collapse the state and reject
        any outcome of zero Born probability, so a forced run remains a
        valid protocol trajectory.
        """
        values = [int(v) for v in values]
        if len(values) != self.n_sites:
            raise ValueError("need one scripted value per site")
        for s, v in enumerate(values):
            if not 0 <= v < self.dims[s]:
                raise ValueError(f"scripted value {v} outside site {s} levels")
        self._script = dict(enumerate(values))

    def measure(self, sites, basis: Basis = Basis.COMPUTATIONAL) -> list[int]:
        """Born-rule measurement of the listed sites; collapses the state.

        Fourier measurement is an inverse site-local DFT, a computational
        measurement, then the forward DFT on the measured (now definite)
        sites; outcomes are reported in the Fourier labeling.
        """
        if isinstance(sites, (int, np.integer)):
            sites = [int(sites)]
        sites = [int(s) for s in sites]
        for s in sites:
            self._site_ok(s)
        if len(set(sites)) != len(sites):
            raise ValueError("measured sites must be distinct")
        if basis is Basis.FOURIER:
            for s in sites:
                self.fourier_site(s, inverse=True)
        values = self._sample_and_collapse(sites)
        if basis is Basis.FOURIER:
            for s in sites:
                self.fourier_site(s)
        return values

    def _sample_and_collapse(self, sites: list[int]) -> list[int]:
        n = self.n_sites
        order = sorted(sites)
        probs = np.abs(self.amps.reshape(self.dims)) ** 2
        drop = tuple(ax for ax in range(n) if ax not in order)
        marg = probs.sum(axis=drop) if drop else probs
        # marg axes follow ascending site order
        if self._script is not None:
            wanted = tuple(self._script[s] for s in order)
            if float(marg[wanted]) <= 1e-12:
                raise ValueError(f"scripted outcome {wanted} has zero probability")
            by_site = dict(zip(order, wanted))
        else:
            flat = marg.reshape(-1)
            total = float(flat.sum())
            pick = int(np.searchsorted(np.cumsum(flat), self.rng.random() * total, side="right"))
            pick = min(pick, flat.size - 1)
            values = np.unravel_index(pick, marg.shape)
            by_site = {s: int(v) for s, v in zip(order, values)}
        view = self.amps.reshape(self.dims)
        index: list = [slice(None)] * n
        for s in order:
            keep = by_site[s]
            for w in range(self.dims[s]):
                if w != keep:
                    index[s] = w
                    view[tuple(index)] = 0.0
            index[s] = slice(None)
        nrm = float(np.linalg.norm(self.amps))
        if nrm <= 1e-12:
            raise ValueError("measurement projected onto a zero-amplitude branch")
        self.amps /= nrm
        return [by_site[s] for s in sites]

    # -- bookkeeping -----------------------------------------------------

    def replicate(self, rng: np.random.Generator, label: str | None = None) -> "QuditRegister":
        """Known-state replication.

        Copying is only legitimate when the caller knows the classical
        description of the state (e.g. a block preparer replicating its
        own phase-encoded qubit); this method is that explicit marker.
        """
        return QuditRegister(self.dims, self.amps.copy(), rng, label)

    def dump_amplitudes(self) -> str:
        """Amplitude table as text lines: index, real, imag."""
        return "\n".join(
            f"{i}\t{a.real:.17g}\t{a.imag:.17g}" for i, a in enumerate(self.amps)
        )

    def __repr__(self):
        return f"QuditRegister(dims={self.dims}, label={self.label!r})"


# -- constructors ---------------------------------------------------------


def new_plus_qubit(rng: np.random.Generator, label: str | None = None) -> QuditRegister:
    """Single qubit in the balanced superposition (|0> + |1>) / sqrt(2)."""
    inv = 1.0 / math.sqrt(2.0)
    return QuditRegister([2], [inv, inv], rng, label)


_ZERO_SUM_CACHE: dict[tuple[int, int], np.ndarray] = {}


def prepare_zero_sum_state(n: int, m: int, rng: np.random.Generator, label: str | None = None) -> QuditRegister:
    """Ballot-box resource: equal superposition of base-m strings with digit sum 0 mod m.

    Computational-basis outcomes always sum to 0 mod m; Fourier-basis
    outcomes are all identical. Both laws drive the security tests.
    """
    n, m = int(n), int(m)
    if n < 2:
        raise ValueError("need at least 2 particles")
    if m < 2:
        raise ValueError("need at least 2 levels")
    if m**n > DIMENSION_GUARD:
        raise ValueError(f"dimension {m}^{n} exceeds guard {DIMENSION_GUARD}")
    template = _ZERO_SUM_CACHE.get((n, m))
    if template is None:
        idx = np.arange(m**n, dtype=np.int64)
        digit_sum = np.zeros_like(idx)
        rest = idx.copy()
        for _ in range(n):
            digit_sum += rest % m
            rest //= m
        template = np.where(digit_sum % m == 0, 1.0 / math.sqrt(m ** (n - 1)), 0.0).astype(np.complex128)
        template.setflags(write=False)
        _ZERO_SUM_CACHE[(n, m)] = template
    return QuditRegister([m] * n, template.copy(), rng, label)


_ANTISYM_CACHE: dict[int, np.ndarray] = {}


def prepare_antisymmetric_state(n: int, rng: np.random.Generator, label: str | None = None) -> QuditRegister:
    """Ballot-index resource: the totally antisymmetric n-level n-particle state.

    1/sqrt(n!) sum over all permutations (s_0 ... s_{n-1}) of {0..n-1},
    signed by permutation parity. Measurement outcomes form a uniformly
    random permutation in either basis.
    """
    n = int(n)
    if n < 2:
        raise ValueError("need at least 2 particles")
    if n**n > DIMENSION_GUARD:
        raise ValueError(f"dimension {n}^{n} exceeds guard {DIMENSION_GUARD}")
    template = _ANTISYM_CACHE.get(n)
    if template is None:
        template = np.zeros(n**n, dtype=np.complex128)
        norm = 1.0 / math.sqrt(math.factorial(n))
        place = [n ** (n - 1 - i) for i in range(n)]
        for perm in permutations(range(n)):
            pos = sum(v * p for v, p in zip(perm, place))
            template[pos] = -norm if permutation_parity(perm) else norm
        template.setflags(write=False)
        _ANTISYM_CACHE[n] = template
    return QuditRegister([n] * n, template.copy(), rng, label)


def tensor(a: QuditRegister, b: QuditRegister, label: str | None = None) -> QuditRegister:
    """Join two registers; b's sites append after a's (less significant)."""
    return QuditRegister(a.dims + b.dims, np.kron(a.amps, b.amps), a.rng, label or a.label)


# -- pure helpers ----------------------------------------------------------


def permutation_parity(perm: Sequence[int]) -> int:
    """Parity (0 even, 1 odd) of a permutation of 0..n-1, by cycle decomposition."""
    seq = [int(p) for p in perm]
    n = len(seq)
    if sorted(seq) != list(range(n)):
        raise ValueError(f"{perm!r} is not a permutation of 0..{n - 1}")
    seen = [False] * n
    parity = 0
    for start in range(n):
        if seen[start]:
            continue
        length = 0
        node = start
        while not seen[node]:
            seen[node] = True
            node = seq[node]
            length += 1
        parity ^= (length - 1) & 1
    return parity


def fidelity(a: QuditRegister, b: QuditRegister) -> float:
    """Squared overlap |<a|b>|^2 of two registers with identical site layout."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch {a.dims} vs {b.dims}")
    return min(1.0, float(abs(np.vdot(a.amps, b.amps)) ** 2))

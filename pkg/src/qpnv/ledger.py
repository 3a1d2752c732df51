"""Phase-encoded quantum blocks chained as a weighted hypergraph state.

Each block commits its classical payload digest through a phase angle on
its own qubit; appending entangles the new qubit with the chain register
through the layout's diagonal edges. The classical mirror (block records)
is the durable side: the expected register can always be rebuilt from it,
and tamper detection is the fidelity between the live register and that
rebuild. Phase angles follow a geometric schedule so that every prefix sum
stays below pi/2.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math

import numpy as np

from .qusim import (
    ParticleHandle,
    QuditRegister,
    WeightedHyperedge,
    fidelity,
    new_plus_qubit,
    tensor,
)
from .voting import TallyResult

MAX_CHAIN_BLOCKS = 20
CHAIN_FIDELITY_TOL = 1e-10


class BlockKind(enum.Enum):
    ORDINARY = "ordinary"
    SPECIAL = "special"


@dataclasses.dataclass
class ThetaSchedule:
    """Geometric phase-angle rule theta_i = theta1 * ratio^(i-1).

    The infinite sum is theta1 / (1 - ratio), so the first angle must stay
    strictly below (pi/2) * (1 - ratio); with the default halving ratio
    that is the familiar pi/4 bound.
    """

    theta1: float
    ratio: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie strictly inside (0, 1)")
        if not 0.0 < self.theta1 < self.first_block_bound:
            raise ValueError(
                f"theta1 must lie in (0, {self.first_block_bound:.6f}) for ratio {self.ratio}"
            )

    @property
    def first_block_bound(self) -> float:
        return (math.pi / 2) * (1.0 - self.ratio)

    def theta_for(self, position: int) -> float:
        if position < 1:
            raise ValueError("block positions start at 1")
        return self.theta1 * self.ratio ** (position - 1)


@dataclasses.dataclass
class QuantumBlock:
    height: int
    payload_digest: str
    theta: float
    kind: BlockKind = BlockKind.ORDINARY
    next_bookkeeper: str | None = None
    vote_summary: TallyResult | None = None
    timestamp: int = 0
    random_value: int | None = None
    qrng_request_id: int | None = None
    qubit: ParticleHandle | None = None

    def __post_init__(self):
        if self.height < 1:
            raise ValueError("heights start at 1")
        if not 0.0 < self.theta < math.pi / 2:
            raise ValueError(f"theta {self.theta} outside (0, pi/2)")
        if self.height == 1 and self.theta >= math.pi / 4:
            raise ValueError("the first block's theta must stay below pi/4")


@dataclasses.dataclass(frozen=True)
class ChainLayout:
    """Which entangling edges a chain of a given length carries.

    "prefix" nests an edge over blocks 1..k for every k >= 2 (plain C^kZ at
    weight 1); "none" keeps blocks separable. Weights are configurable
    because only the resulting state, not the edge weighting, is pinned by
    the chaining construction.
    """

    kind: str = "prefix"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("prefix", "none"):
            raise ValueError(f"unknown chain layout {self.kind!r}")

    def all_edges(self, n_blocks: int) -> list[WeightedHyperedge]:
        if self.kind == "none" or n_blocks < 2:
            return []
        return [WeightedHyperedge(tuple(range(k)), self.weight) for k in range(2, n_blocks + 1)]

    def new_edges(self, n_blocks: int) -> list[WeightedHyperedge]:
        if self.kind == "none" or n_blocks < 2:
            return []
        return [WeightedHyperedge(tuple(range(n_blocks)), self.weight)]


def encode_block(
    payload_digest: str,
    height: int,
    schedule: ThetaSchedule,
    *,
    rng: np.random.Generator,
    position: int | None = None,
    kind: BlockKind = BlockKind.ORDINARY,
    next_bookkeeper: str | None = None,
    vote_summary: TallyResult | None = None,
    timestamp: int = 0,
    random_value: int | None = None,
    qrng_request_id: int | None = None,
    label: str | None = None,
) -> QuantumBlock:
    """Fresh |+> qubit with the schedule's phase for this chain position."""
    position = int(position) if position is not None else int(height)
    theta = schedule.theta_for(position)
    reg = new_plus_qubit(rng, label=label or f"block{height}")
    reg.apply_phase(0, theta)
    block = QuantumBlock(
        height=int(height),
        payload_digest=payload_digest,
        theta=theta,
        kind=kind,
        next_bookkeeper=next_bookkeeper,
        vote_summary=vote_summary,
        timestamp=int(timestamp),
        random_value=random_value,
        qrng_request_id=qrng_request_id,
    )
    block.qubit = ParticleHandle(reg, 0)
    return block


def payload_digest_for(transactions: list[bytes]) -> str:
    """Fixed-width digest over the canonical serialization of a transaction list."""
    h = hashlib.sha256()
    h.update(str(len(transactions)).encode())
    for tx in transactions:
        h.update(b"|")
        h.update(hashlib.sha256(tx).digest())
    return h.hexdigest()


def make_special_block(
    ranking: list[tuple[str, int]],
    winners: list[str],
    schedule: ThetaSchedule,
    chain: "ChainState",
    *,
    rng: np.random.Generator,
    next_bookkeeper: str | None = None,
    timestamp: int = 0,
    random_value: int | None = None,
    qrng_request_id: int | None = None,
) -> QuantumBlock:
    """Tenure-closing block committing the ranked election outcome."""
    if not ranking:
        raise ValueError("election incomplete: empty candidate ranking")
    payload = json.dumps(
        {"ranking": [[str(c), int(v)] for c, v in ranking], "winners": [str(w) for w in winners]},
        sort_keys=True,
        separators=(",", ":"),
    )
    digest = hashlib.sha256(payload.encode()).hexdigest()
    height = chain.start_height + len(chain.blocks)
    return encode_block(
        digest,
        height,
        schedule,
        rng=rng,
        position=len(chain.blocks) + 1,
        kind=BlockKind.SPECIAL,
        next_bookkeeper=next_bookkeeper,
        timestamp=timestamp,
        random_value=random_value,
        qrng_request_id=qrng_request_id,
    )


def expected_chain_state(blocks: list[QuantumBlock], layout: ChainLayout) -> QuditRegister:
    """Analytic weighted-hypergraph state for the given block records.

    Every amplitude has magnitude 1/sqrt(2^N) and phase pi*f(x), where f
    accumulates theta_i/pi on each block's own bit plus the layout edge
    weights on all-ones configurations.
    """
    n = len(blocks)
    if n == 0:
        raise ValueError("chain is empty")
    if n > MAX_CHAIN_BLOCKS:
        raise ValueError(f"chains are capped at {MAX_CHAIN_BLOCKS} blocks")
    idx = np.arange(2**n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1  # site 0 most significant
    f = bits.astype(float) @ (np.array([b.theta for b in blocks]) / math.pi)
    for edge in layout.all_edges(n):
        f = f + edge.weight * bits[:, list(edge.sites)].prod(axis=1)
    amps = np.exp(1j * math.pi * f) / math.sqrt(2**n)
    return QuditRegister([2] * n, amps, np.random.default_rng(0), label="expected-chain")


def validate_theta(block: QuantumBlock, chain: "ChainState") -> bool:
    """Angle in (0, pi/2), equal to the schedule slot, prefix sum below pi/2."""
    theta = block.theta
    if not 0.0 < theta < math.pi / 2:
        return False
    position = len(chain.blocks) + 1
    if abs(theta - chain.schedule.theta_for(position)) > 1e-12:
        return False
    if position == 1 and theta >= chain.schedule.first_block_bound:
        return False
    if sum(b.theta for b in chain.blocks) + theta >= math.pi / 2:
        return False
    return True


class ChainState:
    """One entanglement segment: live register plus its classical mirror."""

    def __init__(
        self,
        schedule: ThetaSchedule,
        layout: ChainLayout,
        *,
        start_height: int = 1,
        owner: str | None = None,
        label: str = "chain",
    ):
        self.schedule = schedule
        self.layout = layout
        self.start_height = int(start_height)
        self.owner = owner
        self.label = label
        self.blocks: list[QuantumBlock] = []
        self.register: QuditRegister | None = None
        self.applied_edges: list[WeightedHyperedge] = []

    def __len__(self):
        return len(self.blocks)

    @property
    def tip_height(self) -> int:
        return self.start_height + len(self.blocks) - 1

    def append_block(self, block: QuantumBlock, register: QuditRegister):
        """Adjoin a validated block's qubit and entangle it per the layout."""
        expected_height = self.start_height + len(self.blocks)
        if block.height != expected_height:
            raise ValueError(f"height gap: got {block.height}, chain expects {expected_height}")
        if self.blocks and block.timestamp <= self.blocks[-1].timestamp:
            raise ValueError("one block per rotation cycle: timestamp must advance")
        if len(self.blocks) + 1 > MAX_CHAIN_BLOCKS:
            raise ValueError(f"chains are capped at {MAX_CHAIN_BLOCKS} blocks")
        if tuple(register.dims) != (2,):
            raise ValueError("a block qubit is a single 2-level site")
        if not validate_theta(block, self):
            raise ValueError("theta schedule violated")
        block = dataclasses.replace(block)  # per-chain mirror copy
        if self.register is None:
            self.register = QuditRegister(
                register.dims, register.amps.copy(), register.rng, label=f"{self.label}"
            )
        else:
            self.register = tensor(self.register, register, label=self.label)
        self.blocks.append(block)
        for edge in self.layout.new_edges(len(self.blocks)):
            self.register.apply_hyperedge(edge)
            self.applied_edges.append(edge)
        for site, b in enumerate(self.blocks):
            b.qubit = ParticleHandle(self.register, site, owner=self.owner)

    def expected_register(self) -> QuditRegister:
        return expected_chain_state(self.blocks, self.layout)

    def verify(self) -> tuple[float, bool]:
        """Fidelity of the live register against the rebuilt analytic state."""
        if not self.blocks or self.register is None:
            raise ValueError("chain is empty")
        fid = fidelity(self.register, self.expected_register())
        return fid, fid >= 1.0 - CHAIN_FIDELITY_TOL


def export_chain(chain: ChainState) -> str:
    """Line-delimited block records preceded by a layout/schedule header."""
    lines = [
        json.dumps(
            {
                "record": "chain-header",
                "start_height": chain.start_height,
                "theta1": chain.schedule.theta1,
                "ratio": chain.schedule.ratio,
                "layout": chain.layout.kind,
                "layout_weight": chain.layout.weight,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
    ]
    for b in chain.blocks:
        lines.append(
            json.dumps(
                {
                    "record": "block",
                    "height": b.height,
                    "digest": b.payload_digest,
                    "theta": b.theta,
                    "kind": b.kind.value,
                    "next_bookkeeper": b.next_bookkeeper,
                    "tally": None
                    if b.vote_summary is None
                    else {
                        "row_sums": b.vote_summary.row_sums,
                        "counts": b.vote_summary.counts,
                        "accepted": b.vote_summary.accepted,
                        "n_total": b.vote_summary.n_total,
                    },
                    "timestamp": b.timestamp,
                    "random_value": b.random_value,
                    "request_id": b.qrng_request_id,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + "\n"


def import_chain(text: str) -> ChainState:
    """Rebuild a chain from exported records; the register is the expected state."""
    lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not lines or lines[0].get("record") != "chain-header":
        raise ValueError("chain export must start with a header record")
    head = lines[0]
    chain = ChainState(
        ThetaSchedule(head["theta1"], head["ratio"]),
        ChainLayout(head["layout"], head["layout_weight"]),
        start_height=head["start_height"],
        label="imported-chain",
    )
    for rec in lines[1:]:
        if rec.get("record") != "block":
            raise ValueError(f"unexpected record {rec.get('record')!r}")
        tally = rec["tally"]
        block = QuantumBlock(
            height=rec["height"],
            payload_digest=rec["digest"],
            theta=rec["theta"],
            kind=BlockKind(rec["kind"]),
            next_bookkeeper=rec["next_bookkeeper"],
            vote_summary=None
            if tally is None
            else TallyResult(tally["row_sums"], tally["counts"], tally["accepted"], tally["n_total"]),
            timestamp=rec["timestamp"],
            random_value=rec["random_value"],
            qrng_request_id=rec["request_id"],
        )
        reg = new_plus_qubit(np.random.default_rng(0), label=f"import{block.height}")
        reg.apply_phase(0, block.theta)
        chain.append_block(block, reg)
    return chain

"""Deterministic simulated hybrid network.

Synchronous-round abstraction: callers enqueue sends, then flush. The
queue delivers in send order; a message is delivered iff sender and
receiver sit in the same partition side at delivery time, otherwise it is
dropped and logged. Particle payloads move handle ownership atomically:
ownership is relinquished at send, granted at delivery, and lost on a
drop, so a handle never has two owners. Channels are lossless and
noiseless apart from partitions and scripted drops (declared
idealization).
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from .eventlog import EventLog


class MessageKind(enum.Enum):
    CLASSICAL_DATA = "classical"
    PARTICLE_TRANSFER = "particle"
    PUBLICATION = "publication"


@dataclass
class Message:
    msg_id: int
    sender: str
    receiver: str
    kind: MessageKind
    payload: Any
    send_time: int


@dataclass(frozen=True)
class DropFilter:
    sender: str | None = None
    receiver: str | None = None
    kind: MessageKind | None = None
    until_cycle: int = 0

    def matches(self, msg: Message) -> bool:
        return (
            (self.sender is None or self.sender == msg.sender)
            and (self.receiver is None or self.receiver == msg.receiver)
            and (self.kind is None or self.kind is msg.kind)
        )


ADVERSARY_KINDS = {
    "forge_ballot_state",
    "forge_index_state",
    "impersonate_qrng",
    "tamper_block_phase",
    "drop_messages",
    "partition",
    "heal",
}


@dataclass(frozen=True)
class AdversaryAction:
    """One scripted action, fired at the start of its rotation cycle."""

    kind: str
    at_cycle: int
    params: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary action {self.kind!r}")
        if self.at_cycle < 0:
            raise ValueError("actions fire at non-negative cycles")
        object.__setattr__(self, "params", tuple(self.params))

    @classmethod
    def make(cls, kind: str, at_cycle: int, **params) -> "AdversaryAction":
        return cls(kind, int(at_cycle), tuple(sorted(params.items())))

    @property
    def args(self) -> dict:
        return dict(self.params)


@dataclass
class AdversaryPlan:
    actions: list[AdversaryAction] = field(default_factory=list)

    def at(self, cycle: int) -> list[AdversaryAction]:
        return [a for a in self.actions if a.at_cycle == cycle]


class SimNetwork:
    """Roster, partitions, and a FIFO message queue with logged delivery."""

    def __init__(self, roster: list[str], log: EventLog | None = None):
        if len(set(roster)) != len(roster):
            raise ValueError("roster names must be unique")
        self.roster = list(roster)
        self.partitions: list[set[str]] = [set(roster)]
        self.queue: deque[Message] = deque()
        self.log = log
        self.drop_filters: list[DropFilter] = []
        self._next_id = 0

    # -- topology -----------------------------------------------------------

    def side_of(self, node: str) -> int:
        for i, side in enumerate(self.partitions):
            if node in side:
                return i
        raise ValueError(f"unknown node {node!r}")

    def same_side(self, a: str, b: str) -> bool:
        return self.side_of(a) == self.side_of(b)

    def partition(self, groups: list[list[str]]):
        """Split the roster; pending cross-group messages are dropped."""
        seen: set[str] = set()
        for g in groups:
            gset = set(g)
            if gset & seen:
                raise ValueError("partition groups overlap")
            seen |= gset
        if seen != set(self.roster):
            raise ValueError("partition groups must cover the roster")
        self.partitions = [set(g) for g in groups]
        survivors = deque()
        for msg in self.queue:
            if self.same_side(msg.sender, msg.receiver):
                survivors.append(msg)
            else:
                self._drop(msg, reason="partition")
        self.queue = survivors
        if self.log:
            self.log.emit(
                "net.partition", "network", level="summary", groups=[sorted(g) for g in groups]
            )

    def heal(self):
        self.partitions = [set(self.roster)]
        if self.log:
            self.log.emit("net.heal", "network", level="summary")

    # -- traffic --------------------------------------------------------------

    def send(self, sender: str, receiver: str, kind: MessageKind, payload: Any):
        if sender not in self.roster:
            raise ValueError(f"unknown sender {sender!r}")
        if receiver not in self.roster:
            raise ValueError(f"unknown receiver {receiver!r}")
        msg = Message(self._next_id, sender, receiver, kind, payload, self.log.time if self.log else 0)
        self._next_id += 1
        if kind is MessageKind.PARTICLE_TRANSFER:
            for h in payload:
                h.owner = None  # in flight
        if self.log:
            self.log.emit("net.send", sender, receiver=receiver, msg_kind=kind.value, msg_id=msg.msg_id)
        self.queue.append(msg)

    def broadcast(self, sender: str, kind: MessageKind, payload: Any):
        for receiver in self.roster:
            if receiver != sender:
                self.send(sender, receiver, kind, payload)

    def flush(self) -> list[Message]:
        """Deliver everything pending, in send order; returns delivered messages."""
        if self.log:
            self.log.tick()
        delivered = []
        while self.queue:
            msg = self.queue.popleft()
            if any(f.matches(msg) for f in self.drop_filters):
                self._drop(msg, reason="filtered")
            elif self.same_side(msg.sender, msg.receiver):
                if msg.kind is MessageKind.PARTICLE_TRANSFER:
                    for h in msg.payload:
                        h.owner = msg.receiver
                if self.log:
                    self.log.emit(
                        "net.deliver",
                        msg.receiver,
                        sender=msg.sender,
                        msg_kind=msg.kind.value,
                        msg_id=msg.msg_id,
                    )
                delivered.append(msg)
            else:
                self._drop(msg, reason="partition")
        return delivered

    def _drop(self, msg: Message, *, reason: str):
        # dropped particles stay ownerless: lost, never duplicated
        if self.log:
            self.log.emit(
                "net.drop",
                msg.receiver,
                sender=msg.sender,
                msg_kind=msg.kind.value,
                msg_id=msg.msg_id,
                reason=reason,
            )

    def add_drop_filter(self, f: DropFilter):
        self.drop_filters.append(f)

    def expire_drop_filters(self, cycle: int):
        self.drop_filters = [f for f in self.drop_filters if f.until_cycle > cycle]


class SessionChannel:
    """Voting-session transport backed by the simulated network."""

    def __init__(self, net: SimNetwork):
        self.net = net

    def transfer(self, sender: str, receiver: str, handles):
        self.net.send(sender, receiver, MessageKind.PARTICLE_TRANSFER, list(handles))
        self.net.flush()

    def publish(self, sender: str, kind: str, payload: dict):
        self.net.broadcast(sender, MessageKind.PUBLICATION, {"topic": kind, **payload})
        self.net.flush()

"""Self-tallying anonymous voting sessions.

One session validates one decision among n voters. The bookkeeper
distributes column shares of zero-sum entangled copies (the ballot boxes)
and of antisymmetric copies (the ballot indexes); voters sacrifice rows to
security tests, measure the survivors, add their vote to the row their
index points at, and publish the updated columns. Row sums then reveal the
vote multiset without revealing who voted what, and anyone can recompute
the tally from the published matrix. A failed security check aborts the
session before any ballot is produced.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .entropy import SeedStream
from .qusim import (
    Basis,
    ParticleHandle,
    QuditRegister,
    prepare_antisymmetric_state,
    prepare_zero_sum_state,
)


class Phase(enum.Enum):
    SETUP = "setup"
    BOXES_DISTRIBUTED = "boxes_distributed"
    BOXES_TESTED = "boxes_tested"
    INDEXES_DISTRIBUTED = "indexes_distributed"
    INDEXES_TESTED = "indexes_tested"
    CAST = "cast"
    TALLIED = "tallied"
    ABORTED = "aborted"


# phases from which a failed test may abort
_ORDER = [
    Phase.SETUP,
    Phase.BOXES_DISTRIBUTED,
    Phase.BOXES_TESTED,
    Phase.INDEXES_DISTRIBUTED,
    Phase.INDEXES_TESTED,
    Phase.CAST,
    Phase.TALLIED,
]


class ProtocolError(RuntimeError):
    """Session used out of phase or against its casting rules."""


@dataclass
class SecurityTestRecord:
    tester: int
    rows: list[int]
    bases: list[Basis]
    outcomes: list[list[int]]  # published results, one list per tested row
    verdict: bool


@dataclass
class TallyResult:
    row_sums: list[int]  # per-row sums mod m of the published matrix
    counts: list[int]  # counts[l] = number of rows summing to l
    accepted: bool  # strict majority of option 0
    n_total: int

    @classmethod
    def from_matrix(cls, matrix, m: int, n_total: int) -> "TallyResult":
        rows = [int(sum(int(v) for v in row) % m) for row in matrix]
        counts = [rows.count(l) for l in range(m)]
        return cls(rows, counts, counts[0] > n_total / 2, n_total)

    def same_as(self, other: "TallyResult") -> bool:
        return (
            self.row_sums == other.row_sums
            and self.counts == other.counts
            and self.accepted == other.accepted
        )


@dataclass
class ForcedScript:
    """Scripted outcomes and test selections for golden-transcript replays.

    Rows are installed as scripted register outcomes; the engine still
    checks each against the Born rule, so a forced run is a genuine
    protocol trajectory. Test selections are per tester, in ascending
    voter-id order. Verification-only hook.
    """

    box_rows: list[list[int]] | None = None
    index_rows: list[list[int]] | None = None
    box_test_rows: list[list[int]] | None = None
    box_test_bases: list[list[Basis]] | None = None
    index_test_rows: list[list[int]] | None = None
    index_test_bases: list[list[Basis]] | None = None


class NullChannel:
    """Direct in-process delivery; keeps handle ownership honest."""

    def transfer(self, sender, receiver, handles):
        for h in handles:
            h.owner = receiver

    def publish(self, sender, kind, payload):
        pass


class VotingSession:
    """State machine for one block-validation or election vote."""

    def __init__(
        self,
        n: int,
        m: int = 2,
        *,
        delta0: int = 1,
        delta1: int = 1,
        stream: SeedStream,
        n_total: int | None = None,
        voter_ids: list[str] | None = None,
        bookkeeper: str = "bookkeeper",
        log=None,
        channel=None,
        context: str = "standalone",
        forced: ForcedScript | None = None,
        box_factory=None,
        index_factory=None,
    ):
        if n < 2:
            raise ValueError("a session needs at least 2 voters")
        if m < 2:
            raise ValueError("need at least 2 vote options")
        if delta0 < 0 or delta1 < 0:
            raise ValueError("security strengths must be non-negative")
        self.n = int(n)
        self.m = int(m)
        self.delta0 = int(delta0)
        self.delta1 = int(delta1)
        self.n_total = int(n_total) if n_total is not None else self.n
        self.voter_ids = list(voter_ids) if voter_ids else [f"V{k}" for k in range(n)]
        if len(self.voter_ids) != self.n:
            raise ValueError("voter_ids length must equal n")
        self.bookkeeper = bookkeeper
        self.log = log
        self.channel = channel or NullChannel()
        self.context = context
        self.forced = forced
        self._stream = stream
        self._choice_rng = stream.child("choices").generator()
        self._box_factory = box_factory or self._honest_box
        self._index_factory = index_factory or self._honest_index

        self.phase = Phase.SETUP
        self.box_regs: list[QuditRegister] = []
        self.box_handles: list[list[ParticleHandle]] = []
        self.index_regs: list[QuditRegister] = []
        self.index_handles: list[list[ParticleHandle]] = []
        self._surviving_box_rows: list[int] = []
        self._surviving_index_rows: list[int] = []
        self.test_records: list[SecurityTestRecord] = []
        self.abort_info: dict | None = None
        self.ballot_matrix: np.ndarray | None = None
        self.updated_matrix: np.ndarray | None = None
        self.ballot_index: list[int] | None = None
        self._cast = [False] * self.n
        self.tally: TallyResult | None = None

    # -- helpers -----------------------------------------------------------

    def _honest_box(self, x: int) -> QuditRegister:
        rng = self._stream.child("box", x).generator()
        return prepare_zero_sum_state(self.n, self.m, rng, label=f"{self._stream.name}/box{x}")

    def _honest_index(self, x: int) -> QuditRegister:
        rng = self._stream.child("index", x).generator()
        return prepare_antisymmetric_state(self.n, rng, label=f"{self._stream.name}/index{x}")

    def _require(self, phase: Phase):
        if self.phase is not phase:
            raise ProtocolError(f"operation requires phase {phase.value}, session is {self.phase.value}")

    def _emit(self, kind, *, level="full", **payload):
        if self.log is not None:
            self.log.emit(kind, self.bookkeeper, level=level, context=self.context, **payload)

    def _coin_basis(self) -> Basis:
        return Basis.COMPUTATIONAL if self._choice_rng.integers(2) == 0 else Basis.FOURIER

    def _pick_rows(self, untested: list[int], count: int) -> list[int]:
        chosen = self._choice_rng.choice(len(untested), size=count, replace=False)
        return sorted(untested[int(i)] for i in chosen)

    # -- step 1: ballot boxes ----------------------------------------------

    def distribute_ballot_boxes(self, bookkeeper: str | None = None):
        """Create n + n*delta0 ballot-box copies and hand column k to voter k."""
        self._require(Phase.SETUP)
        if bookkeeper is not None:
            self.bookkeeper = bookkeeper
        copies = self.n + self.n * self.delta0
        if self.forced and self.forced.box_rows is not None and len(self.forced.box_rows) != copies:
            raise ValueError("forced box transcript must cover every copy")
        for x in range(copies):
            reg = self._box_factory(x)
            if tuple(reg.dims) != tuple([self.m] * self.n):
                raise ValueError("box copy has wrong shape")
            if self.forced and self.forced.box_rows is not None:
                reg.script_outcomes(self.forced.box_rows[x])
            self.box_regs.append(reg)
            self.box_handles.append([ParticleHandle(reg, k) for k in range(self.n)])
        for k, voter in enumerate(self.voter_ids):
            column = [self.box_handles[x][k] for x in range(copies)]
            self.channel.transfer(self.bookkeeper, voter, column)
        self._emit("session.boxes_distributed", level="summary", copies=copies, voters=self.voter_ids)
        self.phase = Phase.BOXES_DISTRIBUTED

    def run_box_security_tests(self) -> list[SecurityTestRecord]:
        """Each voter in id order sacrifices delta0 rows with coin-flipped bases.

        Computational rows must sum to 0 mod m; Fourier rows must be all
        identical. The first failure aborts the session.
        """
        self._require(Phase.BOXES_DISTRIBUTED)
        records = self._test_round(
            regs=self.box_regs,
            per_tester=self.delta0,
            forced_rows=self.forced.box_test_rows if self.forced else None,
            forced_bases=self.forced.box_test_bases if self.forced else None,
            check=self._box_check,
            stage="box",
        )
        if self.phase is not Phase.ABORTED:
            if len(self._last_untested) != self.n:
                raise ProtocolError("test discard left the wrong number of rows")
            self._surviving_box_rows = self._last_untested
            self.phase = Phase.BOXES_TESTED
        self.test_records.extend(records)
        return records

    def _box_check(self, outcomes: list[int], basis: Basis) -> bool:
        if basis is Basis.COMPUTATIONAL:
            return sum(outcomes) % self.m == 0
        return len(set(outcomes)) == 1

    def _index_check(self, outcomes: list[int], basis: Basis) -> bool:
        return sorted(outcomes) == list(range(self.n))

    def _test_round(self, *, regs, per_tester, forced_rows, forced_bases, check, stage) -> list[SecurityTestRecord]:
        untested = list(range(len(regs)))
        records = []
        for t in range(self.n):
            if forced_rows is not None:
                rows = list(forced_rows[t])
                if any(r not in untested for r in rows):
                    raise ValueError("forced test row already consumed")
            else:
                rows = self._pick_rows(untested, per_tester)
            if forced_bases is not None:
                bases = list(forced_bases[t])
            else:
                bases = [self._coin_basis() for _ in rows]
            self.channel.publish(
                self.voter_ids[t], "test_announcement", {"stage": stage, "rows": rows, "bases": [b.value for b in bases]}
            )
            outcomes_published = []
            verdict = True
            for row, basis in zip(rows, bases):
                outcomes = [regs[row].measure([k], basis)[0] for k in range(self.n)]
                outcomes_published.append(outcomes)
                self.channel.publish(
                    self.voter_ids[t], "test_outcomes", {"stage": stage, "row": row, "outcomes": outcomes}
                )
                if not check(outcomes, basis):
                    verdict = False
                    self.abort_info = {
                        "stage": stage,
                        "tester": t,
                        "row": row,
                        "basis": basis.value,
                        "outcomes": outcomes,
                    }
                    break
            records.append(SecurityTestRecord(t, rows, bases, outcomes_published, verdict))
            self._emit(
                "session.test",
                tester=self.voter_ids[t],
                stage=stage,
                rows=rows,
                bases=[b.value for b in bases],
                outcomes=outcomes_published,
                verdict=verdict,
            )
            if not verdict:
                self.phase = Phase.ABORTED
                self._emit("session.abort", level="summary", **self.abort_info)
                break
            untested = [r for r in untested if r not in rows]
        self._last_untested = untested
        return records

    def measure_ballots(self) -> np.ndarray:
        """Measure the surviving rows computationally; column k is voter k's ballot."""
        self._require(Phase.BOXES_TESTED)
        rows = [
            [self.box_regs[row].measure([k])[0] for k in range(self.n)]
            for row in self._surviving_box_rows
        ]
        matrix = np.array(rows, dtype=int)
        if self.ballot_matrix is None:
            self.ballot_matrix = matrix
            self.updated_matrix = matrix.copy()
            self._emit("session.ballot_matrix", level="summary", matrix=matrix)
        elif not np.array_equal(matrix, self.ballot_matrix):
            raise ProtocolError("re-measured ballots disagree with the collapsed state")
        return self.ballot_matrix

    # -- step 2: ballot indexes ----------------------------------------------

    def distribute_ballot_indexes(self, bookkeeper: str | None = None):
        """Create 1 + n*delta1 index copies and hand column k to voter k."""
        self._require(Phase.BOXES_TESTED)
        if self.ballot_matrix is None:
            self.measure_ballots()
        copies = 1 + self.n * self.delta1
        if self.forced and self.forced.index_rows is not None and len(self.forced.index_rows) != copies:
            raise ValueError("forced index transcript must cover every copy")
        for x in range(copies):
            reg = self._index_factory(x)
            if tuple(reg.dims) != tuple([self.n] * self.n):
                raise ValueError("index copy has wrong shape")
            if self.forced and self.forced.index_rows is not None:
                reg.script_outcomes(self.forced.index_rows[x])
            self.index_regs.append(reg)
            self.index_handles.append([ParticleHandle(reg, k) for k in range(self.n)])
        for k, voter in enumerate(self.voter_ids):
            column = [self.index_handles[x][k] for x in range(copies)]
            self.channel.transfer(self.bookkeeper, voter, column)
        self._emit("session.indexes_distributed", level="summary", copies=copies)
        self.phase = Phase.INDEXES_DISTRIBUTED

    def run_index_security_tests(self) -> list[SecurityTestRecord]:
        """Sacrificial index tests: published outcomes must form a permutation."""
        self._require(Phase.INDEXES_DISTRIBUTED)
        records = self._test_round(
            regs=self.index_regs,
            per_tester=self.delta1,
            forced_rows=self.forced.index_test_rows if self.forced else None,
            forced_bases=self.forced.index_test_bases if self.forced else None,
            check=self._index_check,
            stage="index",
        )
        if self.phase is not Phase.ABORTED:
            if len(self._last_untested) != 1:
                raise ProtocolError("index tests must leave exactly one row")
            self._surviving_index_rows = self._last_untested
            self.phase = Phase.INDEXES_TESTED
        self.test_records.extend(records)
        return records

    def measure_indexes(self) -> list[int]:
        """Measure the last index row; d[k] is voter k's anonymous ballot row."""
        self._require(Phase.INDEXES_TESTED)
        if self.ballot_index is None:
            row = self._surviving_index_rows[0]
            self.ballot_index = [self.index_regs[row].measure([k])[0] for k in range(self.n)]
            self._emit("session.index_vector", d=self.ballot_index)
        return self.ballot_index

    # -- step 3: vote casting ------------------------------------------------

    def cast_vote(self, k: int, vote: int):
        """Voter k adds its vote (mod m) to its own ballot row, exactly once."""
        self._require(Phase.INDEXES_TESTED)
        if self.ballot_index is None:
            raise ProtocolError("indexes not yet measured")
        if not 0 <= k < self.n:
            raise ValueError(f"no voter {k}")
        if not 0 <= int(vote) < self.m:
            raise ValueError(f"vote {vote} outside options 0..{self.m - 1}")
        if self._cast[k]:
            raise ProtocolError(f"voter {k} already cast")
        row = self.ballot_index[k]
        self.updated_matrix[row][k] = (int(self.updated_matrix[row][k]) + int(vote)) % self.m
        self._cast[k] = True
        if all(self._cast):
            self.phase = Phase.CAST
            for k2, voter in enumerate(self.voter_ids):
                self.channel.publish(voter, "ballot_column", {"column": self.updated_matrix[:, k2]})
            self._emit("session.published_matrix", level="summary", matrix=self.updated_matrix)

    def publish_and_tally(self) -> TallyResult:
        """Row sums mod m of the published matrix; accepted iff N_0 > n_total/2."""
        self._require(Phase.CAST)
        self.tally = TallyResult.from_matrix(self.updated_matrix, self.m, self.n_total)
        self.phase = Phase.TALLIED
        self._emit(
            "session.tally",
            level="summary",
            row_sums=self.tally.row_sums,
            counts=self.tally.counts,
            accepted=self.tally.accepted,
            n_total=self.n_total,
        )
        return self.tally

    def self_tally_verify(self, voter_k: int, announced: TallyResult) -> tuple[TallyResult, bool]:
        """Any voter recomputes the tally from the published matrix and compares."""
        if self.updated_matrix is None or self.phase not in (Phase.CAST, Phase.TALLIED):
            raise ProtocolError("no published matrix to verify against")
        own = TallyResult.from_matrix(self.updated_matrix, self.m, self.n_total)
        match = own.same_as(announced)
        if not match:
            self._emit("session.selftally_mismatch", level="summary", voter=self.voter_ids[voter_k])
        return own, match

    # -- drivers ---------------------------------------------------------------

    def run_to_ballots(self) -> bool:
        """Distribution and tests through the ballot matrix; False when aborted."""
        self.distribute_ballot_boxes()
        self.run_box_security_tests()
        if self.phase is Phase.ABORTED:
            return False
        self.measure_ballots()
        self.distribute_ballot_indexes()
        self.run_index_security_tests()
        if self.phase is Phase.ABORTED:
            return False
        self.measure_indexes()
        return True

    def run_all(self, votes: list[int]) -> TallyResult | None:
        """Whole session with the given vote vector; None when aborted."""
        if len(votes) != self.n:
            raise ValueError("need one vote per voter")
        if not self.run_to_ballots():
            return None
        for k, v in enumerate(votes):
            self.cast_vote(k, v)
        return self.publish_and_tally()

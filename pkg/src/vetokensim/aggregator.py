"""Pooling aggregator: one perpetually max-locked escrow position steered by
meta-governance rounds among holders of the aggregator's own short-lock token.

User deposits of the base token are irreversible; depositors receive a
transferable wrapper token 1:1 and the pooled position is re-extended to the
maximum duration every epoch.  Meta-round ballots are weighed with the
governance escrow's decaying weight evaluated at the round's close epoch, so
casting early or late within a round makes no difference.  At the base tier
all of this activity appears as the single protocol account.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import AggregatorError
from .escrow import Escrow, EscrowConfig
from .gauges import BPS, GaugeController, shares_to_bps
from .ledger import Ledger, check_amount


@dataclass
class MetaRound:
    round_id: int
    open_epoch: int
    close_epoch: int
    ballots: dict[str, dict[int, int]] = field(default_factory=dict)
    result: dict[int, Fraction] | None = None
    tally: dict[int, Fraction] | None = None
    tally_total: Fraction | None = None
    counted_weight: dict[str, Fraction] | None = None
    voter_gauge_weight: dict[str, dict[int, Fraction]] | None = None
    total_gov_weight: Fraction | None = None
    base_allocation: dict[int, int] | None = None

    @property
    def finalized(self) -> bool:
        return self.result is not None


class Aggregator:
    def __init__(
        self,
        ledger: Ledger,
        base_escrow: Escrow,
        controller: GaugeController,
        protocol_account: str,
        wrapper_token: str,
        gov_token: str,
        gov_escrow_config: EscrowConfig,
        contract_accounts=frozenset(),
        round_length: int = 2,
    ):
        if round_length < 1:
            raise AggregatorError("round_length must be at least one week")
        self.ledger = ledger
        self.base_escrow = base_escrow
        self.controller = controller
        self.protocol_account = protocol_account
        self.base_token = base_escrow.config.token
        self.wrapper_token = wrapper_token
        self.gov_token = gov_token
        self.gov_escrow = Escrow(gov_escrow_config, ledger, contract_accounts)
        self.round_length = round_length
        self.rounds: dict[int, MetaRound] = {}
        self.delegations: dict[str, str] = {}

    # -- rounds ------------------------------------------------------------

    def round_for_epoch(self, epoch: int) -> int:
        return epoch // self.round_length

    def ensure_round(self, epoch: int) -> MetaRound:
        round_id = self.round_for_epoch(epoch)
        rnd = self.rounds.get(round_id)
        if rnd is None:
            open_epoch = round_id * self.round_length
            rnd = MetaRound(round_id, open_epoch, open_epoch + self.round_length)
            self.rounds[round_id] = rnd
        return rnd

    def _require_round(self, round_id: int) -> MetaRound:
        rnd = self.rounds.get(round_id)
        if rnd is None:
            raise AggregatorError(f"unknown round {round_id}")
        return rnd

    # -- deposits and locks --------------------------------------------------

    def refresh_max_lock(self, now: int) -> None:
        """Re-extend the pooled base lock to the maximum remaining duration."""
        if self.protocol_account in self.base_escrow.locks:
            self.base_escrow.modify_lock(
                self.protocol_account, 0, now + self.base_escrow.config.max_lock_weeks, now
            )

    def deposit_and_lock(self, user: str, amount: int, now: int) -> None:
        check_amount(amount)
        if amount == 0:
            raise AggregatorError("cannot deposit a zero amount")
        self.ledger.transfer(self.base_token, user, self.protocol_account, amount)
        unlock = now + self.base_escrow.config.max_lock_weeks
        if self.protocol_account in self.base_escrow.locks:
            self.base_escrow.modify_lock(self.protocol_account, amount, unlock, now)
        else:
            self.base_escrow.create_lock(self.protocol_account, amount, unlock, now)
        self.ledger.mint(self.wrapper_token, user, amount)

    def lock_governance(self, user: str, amount: int, unlock_epoch: int, now: int) -> None:
        if user in self.gov_escrow.locks:
            self.gov_escrow.modify_lock(user, amount, unlock_epoch, now)
        else:
            self.gov_escrow.create_lock(user, amount, unlock_epoch, now)

    # -- delegation ----------------------------------------------------------

    def delegate(self, from_account: str, to_account: str) -> None:
        if from_account == to_account:
            raise AggregatorError("cannot delegate to self")
        if to_account in self.delegations:
            raise AggregatorError(
                f"{to_account} has already delegated away; chains are not allowed"
            )
        if from_account in self.delegations.values():
            raise AggregatorError(
                f"{from_account} is a delegatee and cannot also delegate; chains are not allowed"
            )
        self.delegations[from_account] = to_account

    def _incoming_weight(self, account: str, epoch: int) -> Fraction:
        return sum(
            (
                self.gov_escrow.voting_weight(delegator, epoch)
                for delegator, target in self.delegations.items()
                if target == account
            ),
            Fraction(0),
        )

    def counted_gov_weight(self, account: str, epoch: int) -> Fraction:
        """Weight a ballot by this account would carry: own plus delegated-in."""
        if account in self.delegations:
            return Fraction(0)
        return self.gov_escrow.voting_weight(account, epoch) + self._incoming_weight(account, epoch)

    # -- voting ----------------------------------------------------------------

    def cast_meta_vote(self, voter: str, round_id: int, allocation, now: int) -> None:
        rnd = self._require_round(round_id)
        if rnd.finalized or now >= rnd.close_epoch:
            raise AggregatorError(f"round {round_id} is closed")
        if now < rnd.open_epoch:
            raise AggregatorError(f"round {round_id} has not opened yet")
        cleaned = self.controller.check_allocation(allocation)
        own = self.gov_escrow.voting_weight(voter, rnd.close_epoch)
        if own == 0 and self._incoming_weight(voter, rnd.close_epoch) == 0:
            raise AggregatorError(f"{voter} has no governance weight at epoch {rnd.close_epoch}")
        rnd.ballots[voter] = cleaned

    def finalize_round(self, round_id: int, now: int):
        """Tally ballots at close weight, then recast the pooled base-tier vote.

        Returns (result shares by gauge, base-tier bps allocation or None).
        An empty round leaves the previous base allocation standing.
        """
        rnd = self._require_round(round_id)
        if rnd.finalized:
            raise AggregatorError(f"round {round_id} already finalized")
        if now < rnd.close_epoch:
            raise AggregatorError(f"round {round_id} is still open until epoch {rnd.close_epoch}")
        close = rnd.close_epoch
        counted: dict[str, Fraction] = {}
        voter_gauge_weight: dict[str, dict[int, Fraction]] = {}
        tally: dict[int, Fraction] = {}
        for voter in sorted(rnd.ballots):
            if voter in self.delegations:
                continue  # delegated away: own ballot is ignored
            weight = self.counted_gov_weight(voter, close)
            ballot = rnd.ballots[voter]
            if weight == 0 or not ballot:
                continue
            counted[voter] = weight
            per_gauge = {g: weight * Fraction(bps, BPS) for g, bps in ballot.items()}
            voter_gauge_weight[voter] = per_gauge
            for g, cut in per_gauge.items():
                tally[g] = tally.get(g, Fraction(0)) + cut
        total = sum(tally.values(), Fraction(0))
        rnd.counted_weight = counted
        rnd.voter_gauge_weight = voter_gauge_weight
        rnd.tally = tally
        rnd.tally_total = total
        rnd.total_gov_weight = self.gov_escrow.total_voting_weight(close)
        if total == 0:
            rnd.result = {}
            return {}, None
        rnd.result = {g: cut / total for g, cut in tally.items()}
        allocation = shares_to_bps(rnd.result)
        rnd.base_allocation = allocation
        if self.base_escrow.voting_weight(self.protocol_account, now) > 0:
            self.controller.vote_for_gauge_weights(
                self.protocol_account, sorted(allocation.items()), now
            )
        return rnd.result, allocation

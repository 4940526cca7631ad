"""Analysis of simulation traces: participation, bribe/vote shares,
correlation, outlier classes, share-difference matrices, and cost per vote
by acquisition avenue.

Every function here is a pure read of an immutable trace.  Weight-typed trace
fields arrive as exact rational strings and are converted to floats only at
the analytic boundary.  Exports use a fixed column order and fixed decimal
formatting (10 significant digits) so repeated exports are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import MetricsError
from .sim import SimTrace

AVENUES = ("direct-lock", "aggregator-lock", "bribe")


def _frac(value) -> Fraction:
    return Fraction(value)


@dataclass(frozen=True)
class ShareRow:
    round_id: int
    gauge_id: int
    bribe_share: float
    vote_share: float


@dataclass
class ShareTable:
    rows: list[ShareRow]

    def pairs(self) -> list[tuple[float, float]]:
        return [(row.bribe_share, row.vote_share) for row in self.rows]


@dataclass
class ParticipationStats:
    unique_lockers: int
    unique_voters: int
    voter_fraction: float
    weight_voting_fraction: float
    mean_voters_by_proposal_type: dict[str, float]


@dataclass
class DiffMatrix:
    gauge_order: list[int]
    round_ids: list[int]
    cells: list[list[float | None]]  # rows follow round_ids, columns gauge_order


@dataclass
class CostPerVoteSeries:
    avenue: str
    actor: str
    rows: list[tuple[int, float, float, float | None]]

    def final_usd_per_vote(self) -> float | None:
        for _, _, _, usd_per_vote in reversed(self.rows):
            if usd_per_vote is not None:
                return usd_per_vote
        return None


@dataclass
class OutlierTable:
    rows: list[tuple[int, int, float, float, str]]


@dataclass
class SnapshotTable:
    """Weekly gauge snapshot extract: (epoch, gauge_id, relative_weight, emission)."""

    rows: list[tuple[int, int, float, int]]


@dataclass
class RoundResultTable:
    """Meta-round result extract: (round_id, gauge_id, meta_share, base_bps)."""

    rows: list[tuple[int, int, float, int]]


@dataclass
class SettlementTable:
    """Bribe settlement extract: (round_id, gauge_id, bribe_usd, vote_weight, usd_per_vote)."""

    rows: list[tuple[int, int, float, float, float | None]]


def participation_stats(trace: SimTrace) -> ParticipationStats:
    """Whole-trace participation counts and fractions."""
    if len(trace) == 0:
        raise MetricsError("cannot compute participation over an empty trace")
    lockers: set[str] = set()
    voters: set[str] = set()
    cast_weight = Fraction(0)
    total_weight = Fraction(0)
    voters_per_round: list[int] = []
    for row in trace:
        locks = row.get("locks", {})
        lockers.update(locks.get("base", {}))
        lockers.update(locks.get("governance", {}))
        voters.update(row.get("base_votes", {}))
        finalized = row.get("round_finalized")
        if finalized:
            voters.update(finalized.get("ballots", {}))
            voters_per_round.append(len(finalized.get("ballots", {})))
            cast_weight += _frac(finalized["tally_total"])
            total_weight += _frac(finalized["total_gov_weight"])
    voter_fraction = len(voters) / len(lockers) if lockers else 0.0
    weight_fraction = float(cast_weight / total_weight) if total_weight else 0.0
    mean_by_type = {
        "gauge": (sum(voters_per_round) / len(voters_per_round)) if voters_per_round else 0.0
    }
    return ParticipationStats(
        unique_lockers=len(lockers),
        unique_voters=len(voters),
        voter_fraction=voter_fraction,
        weight_voting_fraction=weight_fraction,
        mean_voters_by_proposal_type=mean_by_type,
    )


def share_table(trace: SimTrace) -> ShareTable:
    """One row per (settled round, gauge) with any bribes or votes."""
    rows: list[ShareRow] = []
    settled = 0
    for row in trace:
        settlement = row.get("settlement")
        finalized = row.get("round_finalized")
        if not settlement or not finalized:
            continue
        settled += 1
        round_id = settlement["round"]
        bribe_usd = {int(g): gs["bribe_usd"] for g, gs in settlement["gauges"].items()}
        votes = {int(g): _frac(w) for g, w in finalized["tally"].items()}
        bribe_total = sum(bribe_usd.values())
        vote_total = sum(votes.values(), Fraction(0))
        for gauge_id in sorted(set(bribe_usd) | set(votes)):
            bribe_share = bribe_usd.get(gauge_id, 0.0) / bribe_total if bribe_total else 0.0
            vote_share = float(votes.get(gauge_id, Fraction(0)) / vote_total) if vote_total else 0.0
            if bribe_share > 0 or vote_share > 0:
                rows.append(ShareRow(round_id, gauge_id, bribe_share, vote_share))
    if settled == 0:
        raise MetricsError("trace has no settled rounds")
    rows.sort(key=lambda r: (r.round_id, r.gauge_id))
    return ShareTable(rows)


def pearson(pairs) -> float:
    """Product-moment correlation of (x, y) pairs."""
    points = list(pairs)
    if len(points) < 2:
        raise MetricsError("pearson needs at least two pairs")
    n = len(points)
    mean_x = sum(x for x, _ in points) / n
    mean_y = sum(y for _, y in points) / n
    var_x = sum((x - mean_x) ** 2 for x, _ in points)
    var_y = sum((y - mean_y) ** 2 for _, y in points)
    if var_x == 0 or var_y == 0:
        raise MetricsError("pearson undefined for degenerate variance")
    cov = sum((x - mean_x) * (y - mean_y) for x, y in points)
    return cov / math.sqrt(var_x * var_y)


def classify_outliers(table: ShareTable, low: float = 0.8, high: float = 1.2, small: float = 0.01) -> list[str]:
    """Per-row class: negligible takes precedence, then the vote/bribe ratio.

    Rows with no bribes but a non-negligible vote share count as "over".
    """
    if not table.rows:
        raise MetricsError("cannot classify an empty share table")
    classes = []
    for row in table.rows:
        if row.vote_share < small:
            classes.append("negligible")
        elif row.bribe_share == 0:
            classes.append("over")
        else:
            ratio = row.vote_share / row.bribe_share
            if ratio < low:
                classes.append("under")
            elif ratio > high:
                classes.append("over")
            else:
                classes.append("follows")
    return classes


def outlier_table(table: ShareTable, low: float = 0.8, high: float = 1.2, small: float = 0.01) -> OutlierTable:
    classes = classify_outliers(table, low, high, small)
    return OutlierTable(
        [
            (row.round_id, row.gauge_id, row.bribe_share, row.vote_share, cls)
            for row, cls in zip(table.rows, classes)
        ]
    )


def diff_matrix(table: ShareTable) -> DiffMatrix:
    """(vote share - bribe share) in percentage points per (round, gauge).

    Columns are gauges ordered by descending total relative bribes across the
    table (ties by ascending gauge id); cells absent from the table stay empty.
    """
    if not table.rows:
        raise MetricsError("cannot build a matrix from an empty share table")
    totals: dict[int, float] = {}
    for row in table.rows:
        totals[row.gauge_id] = totals.get(row.gauge_id, 0.0) + row.bribe_share
    gauge_order = sorted(totals, key=lambda g: (-totals[g], g))
    round_ids = sorted({row.round_id for row in table.rows})
    index = {(row.round_id, row.gauge_id): row for row in table.rows}
    cells: list[list[float | None]] = []
    for round_id in round_ids:
        line: list[float | None] = []
        for gauge_id in gauge_order:
            row = index.get((round_id, gauge_id))
            line.append(None if row is None else (row.vote_share - row.bribe_share) * 100.0)
        cells.append(line)
    return DiffMatrix(gauge_order, round_ids, cells)


def gauge_snapshots(trace: SimTrace) -> SnapshotTable:
    rows = []
    for row in trace:
        snapshot = row.get("snapshot")
        if not snapshot:
            continue
        emissions = snapshot.get("emissions", {})
        for gauge, weight in sorted(snapshot["relative_weights"].items(), key=lambda kv: int(kv[0])):
            rows.append((row["epoch"], int(gauge), float(_frac(weight)), emissions.get(gauge, 0)))
    return SnapshotTable(rows)


def round_results(trace: SimTrace) -> RoundResultTable:
    rows = []
    for row in trace:
        finalized = row.get("round_finalized")
        if not finalized:
            continue
        base = finalized.get("base_allocation") or {}
        for gauge, share in sorted(finalized["result"].items(), key=lambda kv: int(kv[0])):
            rows.append(
                (finalized["round"], int(gauge), float(_frac(share)), base.get(gauge, 0))
            )
    return RoundResultTable(rows)


def settlements(trace: SimTrace) -> SettlementTable:
    rows = []
    for row in trace:
        settlement = row.get("settlement")
        if not settlement:
            continue
        for gauge, gs in sorted(settlement["gauges"].items(), key=lambda kv: int(kv[0])):
            rows.append(
                (
                    settlement["round"],
                    int(gauge),
                    gs["bribe_usd"],
                    float(_frac(gs["vote_weight"])),
                    gs["usd_per_vote"],
                )
            )
    return SettlementTable(rows)


def cost_per_vote_series(trace: SimTrace, actor: str, avenue: str) -> CostPerVoteSeries:
    """Cumulative acquisition cost against cumulative votes, one row per epoch.

    direct-lock: base-escrow lock cost at lock-time prices; votes are the
    actor's base weight exercised at each snapshot (scaled by allocated bps).
    aggregator-lock: governance-escrow lock cost; votes are the actor's share
    of each round's ballot mass times the pooled base weight at close.
    bribe: the actor's bribe spend at settlement valuation; votes are all
    voter weight landing on the gauges the actor bribed.
    """
    if avenue not in AVENUES:
        raise MetricsError(f"unknown avenue {avenue!r}; expected one of {AVENUES}")
    protocol_account = trace.header.get("protocol_account")
    cost = 0.0
    votes = Fraction(0)
    active = False
    rows: list[tuple[int, float, float, float | None]] = []
    for row in trace:
        epoch = row["epoch"]
        if avenue == "direct-lock":
            for event in row.get("lock_events", ()):
                if event["account"] == actor and event["escrow"] == "base" and event["amount"] > 0:
                    cost += event["usd_cost"]
                    active = True
            if row.get("snapshot") is not None:
                allocation = row.get("base_votes", {}).get(actor)
                if allocation:
                    weight = _frac(row["escrow_weights"]["base"].get(actor, "0"))
                    votes += weight * Fraction(sum(allocation.values()), 10_000)
        elif avenue == "aggregator-lock":
            for event in row.get("lock_events", ()):
                if event["account"] == actor and event["escrow"] == "governance" and event["amount"] > 0:
                    cost += event["usd_cost"]
                    active = True
            finalized = row.get("round_finalized")
            if finalized and actor in finalized.get("voter_mass", {}):
                mass = _frac(finalized["voter_mass"][actor])
                total = _frac(finalized["tally_total"])
                pooled = _frac(row["escrow_weights"]["base"].get(protocol_account, "0"))
                if total:
                    votes += mass / total * pooled
        else:  # bribe
            settlement = row.get("settlement")
            if settlement:
                for gs in settlement["gauges"].values():
                    spend = gs["briber_usd"].get(actor)
                    if spend is None:
                        continue
                    cost += spend
                    votes += _frac(gs["vote_weight"])
                    active = True
        usd_per_vote = cost / float(votes) if votes > 0 else None
        rows.append((epoch, cost, float(votes), usd_per_vote))
    if not active:
        raise MetricsError(f"account {actor} was never active in avenue {avenue}")
    return CostPerVoteSeries(avenue, actor, rows)


# -- exports -------------------------------------------------------------------


def _fmt(value) -> str:
    """Fixed 10-significant-digit decimal formatting for floats."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _fnum(value):
    """Float squashed through the 10-significant-digit export format."""
    return None if value is None else float(f"{value:.10g}")


def _csv_rows(obj) -> tuple[list[str], list[list]]:
    if isinstance(obj, ShareTable):
        header = ["round_id", "gauge_id", "bribe_share", "vote_share"]
        return header, [
            [r.round_id, r.gauge_id, _fmt(r.bribe_share), _fmt(r.vote_share)] for r in obj.rows
        ]
    if isinstance(obj, OutlierTable):
        header = ["round_id", "gauge_id", "bribe_share", "vote_share", "class"]
        return header, [[rid, gid, _fmt(b), _fmt(v), cls] for rid, gid, b, v, cls in obj.rows]
    if isinstance(obj, CostPerVoteSeries):
        header = ["epoch", "cumulative_usd_cost", "cumulative_votes", "usd_per_vote"]
        return header, [
            [epoch, _fmt(cost), _fmt(votes), _fmt(upv)] for epoch, cost, votes, upv in obj.rows
        ]
    if isinstance(obj, DiffMatrix):
        header = ["round_id"] + [str(g) for g in obj.gauge_order]
        return header, [
            [rid] + [_fmt(cell) for cell in line] for rid, line in zip(obj.round_ids, obj.cells)
        ]
    if isinstance(obj, SnapshotTable):
        header = ["epoch", "gauge_id", "relative_weight", "emission"]
        return header, [[e, g, _fmt(w), amount] for e, g, w, amount in obj.rows]
    if isinstance(obj, RoundResultTable):
        header = ["round_id", "gauge_id", "meta_share", "base_bps"]
        return header, [[r, g, _fmt(s), bps] for r, g, s, bps in obj.rows]
    if isinstance(obj, SettlementTable):
        header = ["round_id", "gauge_id", "bribe_usd", "vote_weight", "usd_per_vote"]
        return header, [[r, g, _fmt(b), _fmt(w), _fmt(u)] for r, g, b, w, u in obj.rows]
    if isinstance(obj, ParticipationStats):
        header = [
            "unique_lockers",
            "unique_voters",
            "voter_fraction",
            "weight_voting_fraction",
            "mean_gauge_voters",
        ]
        return header, [
            [
                obj.unique_lockers,
                obj.unique_voters,
                _fmt(obj.voter_fraction),
                _fmt(obj.weight_voting_fraction),
                _fmt(obj.mean_voters_by_proposal_type.get("gauge", 0.0)),
            ]
        ]
    raise MetricsError(f"no CSV export for {type(obj).__name__}")


def _json_payload(obj):
    if isinstance(obj, ShareTable):
        return {
            "rows": [
                {
                    "round_id": r.round_id,
                    "gauge_id": r.gauge_id,
                    "bribe_share": _fnum(r.bribe_share),
                    "vote_share": _fnum(r.vote_share),
                }
                for r in obj.rows
            ]
        }
    if isinstance(obj, OutlierTable):
        return {
            "rows": [
                {
                    "round_id": rid,
                    "gauge_id": gid,
                    "bribe_share": _fnum(b),
                    "vote_share": _fnum(v),
                    "class": cls,
                }
                for rid, gid, b, v, cls in obj.rows
            ]
        }
    if isinstance(obj, CostPerVoteSeries):
        return {
            "avenue": obj.avenue,
            "actor": obj.actor,
            "rows": [
                {
                    "epoch": epoch,
                    "cumulative_usd_cost": _fnum(cost),
                    "cumulative_votes": _fnum(votes),
                    "usd_per_vote": _fnum(upv),
                }
                for epoch, cost, votes, upv in obj.rows
            ],
        }
    if isinstance(obj, DiffMatrix):
        return {
            "gauge_order": obj.gauge_order,
            "rows": [
                {"round_id": rid, "cells": [_fnum(cell) for cell in line]}
                for rid, line in zip(obj.round_ids, obj.cells)
            ],
        }
    if isinstance(obj, ParticipationStats):
        return {
            "unique_lockers": obj.unique_lockers,
            "unique_voters": obj.unique_voters,
            "voter_fraction": _fnum(obj.voter_fraction),
            "weight_voting_fraction": _fnum(obj.weight_voting_fraction),
            "mean_voters_by_proposal_type": {
                k: _fnum(v) for k, v in sorted(obj.mean_voters_by_proposal_type.items())
            },
        }
    if isinstance(obj, SnapshotTable):
        return {
            "rows": [
                {"epoch": e, "gauge_id": g, "relative_weight": _fnum(w), "emission": amount}
                for e, g, w, amount in obj.rows
            ]
        }
    if isinstance(obj, RoundResultTable):
        return {
            "rows": [
                {"round_id": r, "gauge_id": g, "meta_share": _fnum(s), "base_bps": bps}
                for r, g, s, bps in obj.rows
            ]
        }
    if isinstance(obj, SettlementTable):
        return {
            "rows": [
                {
                    "round_id": r,
                    "gauge_id": g,
                    "bribe_usd": _fnum(b),
                    "vote_weight": _fnum(w),
                    "usd_per_vote": _fnum(u),
                }
                for r, g, b, w, u in obj.rows
            ]
        }
    raise MetricsError(f"no JSON export for {type(obj).__name__}")


def export(obj, fmt: str, path: str) -> None:
    """Write a metric object (or a trace) to disk, byte-stably."""
    if isinstance(obj, SimTrace):
        obj.write_ndjson(path)
        return
    if fmt == "csv":
        header, rows = _csv_rows(obj)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    elif fmt == "json":
        payload = _json_payload(obj)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, sort_keys=True, indent=2)
            handle.write("\n")
    else:
        raise MetricsError(f"unknown export format {fmt!r}")

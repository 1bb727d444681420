"""Verification trial plans and per-trial scoring.

Each (subject, eye) pair is its own user.  Genuine trials are every
unordered same-user image pair; impostor trials pair the first image of
each user with the second image of every other user, so U eligible users
yield exactly U*(U-1) impostor trials.  Scored trials persist as CSV with
header ``enrol,probe,label,score``; plans as JSON-lines of trial triples.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path

from .errors import ComparatorError, MissingFeatureError, TrialPlanError

log = logging.getLogger(__name__)

GENUINE = "genuine"
IMPOSTOR = "impostor"

_CSV_HEADER = "enrol,probe,label,score"


@dataclass(frozen=True)
class Trial:
    enrol: str
    probe: str
    label: str

    def __post_init__(self):
        if self.label not in (GENUINE, IMPOSTOR):
            raise TrialPlanError(f"unknown trial label {self.label!r}")
        if self.enrol == self.probe:
            raise TrialPlanError(f"trial pairs image {self.enrol!r} with itself")


@dataclass(frozen=True)
class TrialPlan:
    trials: tuple

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        seen = set()
        for t in self.trials:
            key = frozenset((t.enrol, t.probe))
            if key in seen:
                raise TrialPlanError(f"symmetric duplicate trial {t.enrol!r}/{t.probe!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def n_genuine(self) -> int:
        return sum(1 for t in self.trials if t.label == GENUINE)

    @property
    def n_impostor(self) -> int:
        return len(self.trials) - self.n_genuine


def build_trials(records) -> TrialPlan:
    """Build the genuine/impostor plan from manifest records.

    Users keep their manifest ordering, and so do images within a user;
    users with fewer than two images cannot appear in any trial and are
    skipped with a warning.
    """
    by_user: dict = {}
    for rec in records:
        by_user.setdefault(rec.user_key, []).append(rec.image_id)
    eligible = {}
    for user, ids in by_user.items():
        if len(ids) < 2:
            log.warning("user %s has %d image(s); excluded from the trial plan", user, len(ids))
        else:
            eligible[user] = ids
    trials = []
    for ids in eligible.values():
        for a, b in combinations(ids, 2):
            trials.append(Trial(a, b, GENUINE))
    for enrol_user, enrol_ids in eligible.items():
        for probe_user, probe_ids in eligible.items():
            if probe_user != enrol_user:
                trials.append(Trial(enrol_ids[0], probe_ids[1], IMPOSTOR))
    return TrialPlan(trials)


def save_plan(plan: TrialPlan, path) -> None:
    lines = [
        json.dumps({"enrol": t.enrol, "probe": t.probe, "label": t.label}, sort_keys=True)
        for t in plan.trials
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_plan(path) -> TrialPlan:
    trials = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            trials.append(Trial(raw["enrol"], raw["probe"], raw["label"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise TrialPlanError(f"{path}:{lineno}: malformed trial: {exc}") from exc
    return TrialPlan(trials)


@dataclass(frozen=True)
class ScoredTrial:
    enrol: str
    probe: str
    label: str
    score: float | None  # None marks a trial whose features were missing


@dataclass(frozen=True)
class ScoreTable:
    """Per-trial scores of one comparator, aligned with a trial plan."""

    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def trial_keys(self) -> tuple:
        return tuple((r.enrol, r.probe, r.label) for r in self.rows)

    def genuine_scores(self) -> list:
        return [r.score for r in self.rows if r.label == GENUINE and r.score is not None]

    def impostor_scores(self) -> list:
        return [r.score for r in self.rows if r.label == IMPOSTOR and r.score is not None]

    @property
    def n_missing(self) -> int:
        return sum(1 for r in self.rows if r.score is None)


def score_trials(plan: TrialPlan, score_pair) -> ScoreTable:
    """Score every trial with ``score_pair(enrol_id, probe_id) -> float``.

    The callable must already return similarity polarity (higher = more
    genuine); distance-based comparators negate before reaching here.  A
    MissingFeatureError marks that trial missing instead of dropping it.
    """
    rows = []
    for t in plan.trials:
        try:
            value = float(score_pair(t.enrol, t.probe))
        except MissingFeatureError as exc:
            log.warning("trial %s/%s: %s", t.enrol, t.probe, exc)
            value = None
        except ComparatorError as exc:
            raise ComparatorError(f"trial {t.enrol}/{t.probe}: {exc}") from exc
        rows.append(ScoredTrial(t.enrol, t.probe, t.label, value))
    return ScoreTable(rows)


def _format_score(score: float | None) -> str:
    return "" if score is None else repr(float(score))


def save_scores(table: ScoreTable, path) -> None:
    lines = [_CSV_HEADER]
    lines += [f"{r.enrol},{r.probe},{r.label},{_format_score(r.score)}" for r in table.rows]
    Path(path).write_text("\n".join(lines) + "\n")


def load_scores(path) -> ScoreTable:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != _CSV_HEADER:
        raise TrialPlanError(f"{path}: expected header {_CSV_HEADER!r}")
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TrialPlanError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        enrol, probe, label, score = parts
        rows.append(ScoredTrial(enrol, probe, label, float(score) if score else None))
    return ScoreTable(rows)


def check_aligned(tables) -> None:
    """Raise unless every table covers the identical trial sequence."""
    if not tables:
        raise TrialPlanError("no score tables given")
    reference = tables[0].trial_keys()
    for i, table in enumerate(tables[1:], start=1):
        if table.trial_keys() != reference:
            raise TrialPlanError(f"score table {i} does not cover the same trials as table 0")


def table_from_plan(plan: TrialPlan, scores) -> ScoreTable:
    """Pair a plan with an aligned sequence of scores (None allowed)."""
    scores = list(scores)
    if len(scores) != len(plan.trials):
        raise TrialPlanError(f"{len(scores)} scores for {len(plan.trials)} trials")
    rows = [
        ScoredTrial(t.enrol, t.probe, t.label, None if s is None else float(s))
        for t, s in zip(plan.trials, scores)
    ]
    return ScoreTable(rows)


def with_scores(table: ScoreTable, scores) -> ScoreTable:
    """Replace the score column, keeping trial identity columns."""
    scores = list(scores)
    if len(scores) != len(table.rows):
        raise TrialPlanError(f"{len(scores)} scores for {len(table.rows)} rows")
    rows = [
        replace(row, score=None if s is None else float(s))
        for row, s in zip(table.rows, scores)
    ]
    return ScoreTable(rows)

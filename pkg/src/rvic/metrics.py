"""Plug-in information diagnostics and skill-geometry scores.

All quantities are computed from a ``RolloutSet`` of ``(skill, s_0, s_T)``
records, usually one greedy rollout per (skill, start state). Entropies are
maximum-likelihood plug-in estimates in bits, without bias correction: the
evaluation enumerates every start state, so the support is complete.
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, InapplicableMetric

CSV_COLUMNS = ("episode", "arm", "seed", "mi_end_given_start", "mi_start_given_end",
               "h_skill_given_end", "h_skill_given_both", "partition_score", "relativity_score")
# Provenance columns appended after the schema columns.
PROVENANCE_COLUMNS = ("config_hash", "artifact_version")


@dataclass(frozen=True)
class RolloutSet:
    skills: np.ndarray
    starts: np.ndarray
    ends: np.ndarray

    def __post_init__(self):
        for name in ("skills", "starts", "ends"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64).ravel())
        n = len(self.skills)
        if n == 0:
            raise ContractViolation("rollout set must be nonempty")
        if len(self.starts) != n or len(self.ends) != n:
            raise ContractViolation("rollout set columns differ in length")
        if min(self.skills.min(), self.starts.min(), self.ends.min()) < 0:
            raise ContractViolation("negative id in rollout set")

    def __len__(self):
        return len(self.skills)

    @classmethod
    def from_records(cls, records) -> "RolloutSet":
        records = list(records)
        if not records:
            raise ContractViolation("rollout set must be nonempty")
        skills, starts, ends = zip(*records)
        return cls(np.array(skills), np.array(starts), np.array(ends))

    @classmethod
    def from_skill_maps(cls, ends: np.ndarray) -> "RolloutSet":
        """From a ``[K, S]`` greedy end-state table (one record per skill and start)."""
        K, S = ends.shape
        return cls(np.repeat(np.arange(K), S), np.tile(np.arange(S), K), ends.ravel())

    @classmethod
    def from_episodes(cls, episodes) -> "RolloutSet":
        return cls.from_records((ep.skill, ep.start, ep.end) for ep in episodes)

    @classmethod
    def from_jsonl(cls, path) -> "RolloutSet":
        recs = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    recs.append((d["skill"], d["states"][0], d["states"][-1]))
        return cls.from_records(recs)


class Entropies(NamedTuple):
    skill_given_end: float
    skill_given_both: float
    skill_given_start: float
    skill: float


def _conditional_entropy(target: np.ndarray, *given: np.ndarray) -> float:
    """H(target | given) in bits as ``sum c(x,y) * log2(c(y) / c(x,y)) / n``.

    Terms are pooled by ratio ``c(y) / c(x,y)`` with exact integer weights, so
    the log of each distinct ratio is taken once. Rollout sets whose count
    structure is the same therefore get bit-identical entropies (a constant
    map has H(skill|s_T) == H(skill|s_T,s_0) exactly), and a deterministic
    target contributes exactly zero.
    """
    n = len(target)
    if given:
        _, group = np.unique(np.stack(given, axis=1), axis=0, return_inverse=True)
        group = group.ravel()
    else:
        group = np.zeros(n, dtype=np.int64)
    group_count = np.bincount(group)
    _, first, joint_count = np.unique(group * (int(target.max()) + 1) + target,
                                      return_index=True, return_counts=True)
    ratio = group_count[group[first]] / joint_count
    values, which = np.unique(ratio, return_inverse=True)
    weight = np.bincount(which.ravel(), weights=joint_count)  # integer-valued, exact below 2**53
    return math.fsum((weight * np.log2(values)).tolist()) / n


def plug_in_entropies(rollouts: RolloutSet) -> Entropies:
    sk, s0, sT = rollouts.skills, rollouts.starts, rollouts.ends
    return Entropies(
        skill_given_end=_conditional_entropy(sk, sT),
        skill_given_both=_conditional_entropy(sk, sT, s0),
        skill_given_start=_conditional_entropy(sk, s0),
        skill=_conditional_entropy(sk),
    )


def mutual_informations(rollouts: RolloutSet, entropies: Entropies | None = None) -> tuple[float, float]:
    """``(I(s_T; skill | s_0), I(s_0; skill | s_T))`` in bits."""
    h = entropies or plug_in_entropies(rollouts)
    return h.skill_given_start - h.skill_given_both, h.skill_given_end - h.skill_given_both


def partition_score(rollouts: RolloutSet) -> float:
    """Mean over skills of the largest single terminal-state frequency."""
    return _mean_modal_frequency(rollouts.skills, rollouts.ends)


def relativity_score(rollouts: RolloutSet, env) -> float:
    """Mean over skills of the modal-displacement frequency (torus envs only)."""
    if not env.is_torus:
        raise InapplicableMetric(f"relativity_score is undefined on {env.config.kind}")
    coords = np.array(env.coords)
    sizes = np.array(env.sizes)
    disp = (coords[rollouts.ends] - coords[rollouts.starts]) % sizes
    flat = disp[:, 0] * sizes[1] + disp[:, 1]
    return _mean_modal_frequency(rollouts.skills, flat)


def _mean_modal_frequency(skills: np.ndarray, values: np.ndarray) -> float:
    # Averaged as exact fractions so closed-form cases (1, 1/N) come out exact.
    per_skill = [Fraction(int(np.bincount(values[skills == k]).max()), int(np.sum(skills == k)))
                 for k in np.unique(skills)]
    return float(sum(per_skill) / len(per_skill))


@dataclass(frozen=True)
class MetricsReport:
    episode: int
    arm: str
    seed: int
    mi_end_given_start: float
    mi_start_given_end: float
    h_skill_given_end: float
    h_skill_given_both: float
    partition_score: float
    relativity_score: float | None

    def row(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def compute_report(rollouts: RolloutSet, env=None, *, episode: int = 0, arm: str = "",
                   seed: int = 0) -> MetricsReport:
    h = plug_in_entropies(rollouts)
    mi_end, mi_start = mutual_informations(rollouts, h)
    rel = relativity_score(rollouts, env) if env is not None and env.is_torus else None
    return MetricsReport(episode, arm, seed, mi_end, mi_start, h.skill_given_end,
                         h.skill_given_both, partition_score(rollouts), rel)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def emit_csv(reports, path, *, config_hash: str = "", version: str = "") -> None:
    """Append reports to ``path``, writing the header first if the file is new or empty."""
    from . import __version__

    version = version or __version__
    try:
        new = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow(CSV_COLUMNS + PROVENANCE_COLUMNS)
            for rep in reports:
                row = rep.row()
                w.writerow([_fmt(row[c]) for c in CSV_COLUMNS] + [config_hash, version])
    except OSError as exc:
        raise ContractViolation(f"cannot write metrics CSV {path}: {exc}") from exc


def read_csv(path) -> list[MetricsReport]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rel = row["relativity_score"]
            out.append(MetricsReport(
                int(row["episode"]), row["arm"], int(row["seed"]),
                float(row["mi_end_given_start"]), float(row["mi_start_given_end"]),
                float(row["h_skill_given_end"]), float(row["h_skill_given_both"]),
                float(row["partition_score"]), float(rel) if rel else None))
    return out


def brute_force_entropies(records) -> Entropies:
    """Independent reference: conditional entropies by explicit grouping.

    H(X | Y) = sum_y p(y) * H(X | Y = y), with each conditional distribution
    tallied separately. Shares no code with :func:`plug_in_entropies`.
    """
    records = list(records)
    n = len(records)
    skills = [r[0] for r in records]

    def cond(keys):
        groups = Counter(keys)
        total = 0.0
        for (y, _), c in Counter(zip(keys, skills)).items():
            p = c / groups[y]
            total -= groups[y] / n * p * math.log(p, 2)
        return total

    return Entropies(
        skill_given_end=cond([r[2] for r in records]),
        skill_given_both=cond([(r[1], r[2]) for r in records]),
        skill_given_start=cond([r[1] for r in records]),
        skill=cond([None] * n),
    )

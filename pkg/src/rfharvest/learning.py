"""Online learning of unknown chain parameters by posterior sampling.

Each hypothesis pairs a current arrival state with four transition
counts (good-to-bad, good-to-good, bad-to-good, bad-to-bad) that
parameterize independent Beta posteriors over p and q. The weight of a
hypothesis is its appearance count: the number of hidden state
histories, consistent with everything observed so far, that produce
exactly those counts. Counts start at [1, 1, 1, 1] (uniform priors)
with both states weighted 1.

The filter conditions on landing states: the particle set always
describes the most recent slot. The first observed harvest pins the
initial state without counting a transition; every later step first
advances each hypothesis one transition (branching it in two) and, if
the slot was harvested, keeps only the branches that land on the
observed state. Sleeping branches everything and keeps it all, so the
hypothesis count at most doubles per sleeping slot; to stay tractable
only the 2K heaviest hypotheses survive each step.

When a harvest fails, one hypothesis is drawn with probability
proportional to its weight, its Beta-mean parameter estimates are
mapped to the precomputed optimal sleep count, and the node sleeps
that long before probing again.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .beliefs import Observation, RewardConfig
from .gilbert_elliott import ArrivalState, GEParams, simulate
from .threshold import LookupTable, ThresholdPolicy, optimal_sleep_time

__all__ = [
    "PosteriorCount",
    "Particle",
    "ParticleSet",
    "ExactPosterior",
    "EmptyPosterior",
    "HistoryTooLong",
    "initial_particles",
    "good_state_update",
    "bad_state_update",
    "observe",
    "exact_posterior",
    "SleepTimePlanner",
    "sample_and_plan",
    "PosteriorSamplingLearner",
    "SlotRecord",
    "EpisodeTrace",
    "run_learner",
]

MAX_EXACT_HISTORY = 25


class EmptyPosterior(RuntimeError):
    """No hypothesis survived an update."""


class HistoryTooLong(ValueError):
    """Brute-force enumeration is exponential; refuse long histories."""


class PosteriorCount(NamedTuple):
    """Transition counts (g2b, g2g, b2g, b2b), each at least 1."""

    g2b: int
    g2g: int
    b2g: int
    b2b: int

    @property
    def mean_p(self) -> float:
        return self.g2b / (self.g2b + self.g2g)

    @property
    def mean_q(self) -> float:
        return self.b2g / (self.b2g + self.b2b)


UNIFORM_PRIOR = PosteriorCount(1, 1, 1, 1)


class Particle(NamedTuple):
    count: PosteriorCount
    weight: int


@dataclass(frozen=True)
class ParticleSet:
    """Weighted hypotheses split by current state, truncated to 2K total."""

    good: tuple[Particle, ...]
    bad: tuple[Particle, ...]
    k: int
    fresh: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def n_hypotheses(self) -> int:
        return len(self.good) + len(self.bad)

    def total_weight(self) -> int:
        return sum(p.weight for p in self.good) + sum(p.weight for p in self.bad)


def initial_particles(k: int, prior: PosteriorCount = UNIFORM_PRIOR) -> ParticleSet:
    """Fresh prior set: both states weighted 1 under the given counts.

    The default [1, 1, 1, 1] makes both transition probabilities
    uniform on (0, 1); informative priors plug in larger counts.
    """
    hypothesis = (Particle(prior, 1),)
    return ParticleSet(good=hypothesis, bad=hypothesis, k=k, fresh=True)


def _merged(particles: Iterable[Particle]) -> tuple[Particle, ...]:
    """Sum weights of identical counts; deterministic output order."""
    acc: dict[PosteriorCount, int] = {}
    for count, weight in particles:
        acc[count] = acc.get(count, 0) + weight
    return tuple(Particle(c, acc[c]) for c in sorted(acc))


def _branch_good(particles: Iterable[Particle]) -> tuple[list[Particle], list[Particle]]:
    """Advance good-state hypotheses one transition: (to good, to bad)."""
    to_good, to_bad = [], []
    for count, weight in particles:
        to_good.append(Particle(count._replace(g2g=count.g2g + 1), weight))
        to_bad.append(Particle(count._replace(g2b=count.g2b + 1), weight))
    return to_good, to_bad


def _branch_bad(particles: Iterable[Particle]) -> tuple[list[Particle], list[Particle]]:
    """Advance bad-state hypotheses one transition: (to good, to bad)."""
    to_good, to_bad = [], []
    for count, weight in particles:
        to_good.append(Particle(count._replace(b2g=count.b2g + 1), weight))
        to_bad.append(Particle(count._replace(b2b=count.b2b + 1), weight))
    return to_good, to_bad


def good_state_update(pset: ParticleSet) -> ParticleSet:
    """Branch every good-state hypothesis; bad-state ones pass through."""
    to_good, to_bad = _branch_good(pset.good)
    return ParticleSet(
        good=_merged(to_good),
        bad=_merged(list(pset.bad) + to_bad),
        k=pset.k,
        fresh=False,
    )


def bad_state_update(pset: ParticleSet) -> ParticleSet:
    """Branch every bad-state hypothesis; good-state ones pass through."""
    to_good, to_bad = _branch_bad(pset.bad)
    return ParticleSet(
        good=_merged(list(pset.good) + to_good),
        bad=_merged(to_bad),
        k=pset.k,
        fresh=False,
    )


def _truncate(good: tuple[Particle, ...], bad: tuple[Particle, ...], k: int):
    """Keep the 2k heaviest hypotheses across both lists jointly.

    Ties break lexicographically on (state, counts), good before bad,
    so truncation is deterministic.
    """
    tagged = [(0, p) for p in good] + [(1, p) for p in bad]
    tagged.sort(key=lambda t: (-t[1].weight, t[0], t[1].count))
    kept = tagged[: 2 * k]
    new_good = tuple(sorted((p for s, p in kept if s == 0), key=lambda p: p.count))
    new_bad = tuple(sorted((p for s, p in kept if s == 1), key=lambda p: p.count))
    return new_good, new_bad


def observe(pset: ParticleSet, z: Observation) -> ParticleSet:
    """Incorporate one slot: advance hypotheses, condition on the landing
    state if it was observed, merge duplicates, truncate to 2K.

    On a fresh prior an observed state only selects the matching
    hypotheses (no transition has elapsed yet), and a fresh sleep
    leaves the set unchanged; the skipped transition is counted by the
    next update.
    """
    if pset.fresh:
        if z is Observation.NONE:
            return ParticleSet(good=pset.good, bad=pset.bad, k=pset.k, fresh=False)
        good = pset.good if z is Observation.GOOD else ()
        bad = pset.bad if z is Observation.BAD else ()
        if not good and not bad:
            raise EmptyPosterior(f"no hypothesis matches initial observation {z}")
        return ParticleSet(good=good, bad=bad, k=pset.k, fresh=False)

    gg, gb = _branch_good(pset.good)
    bg, bb = _branch_bad(pset.bad)
    if z is Observation.NONE:
        good, bad = _merged(gg + bg), _merged(gb + bb)
    elif z is Observation.GOOD:
        good, bad = _merged(gg + bg), ()
    elif z is Observation.BAD:
        good, bad = (), _merged(gb + bb)
    else:
        raise ValueError(f"unknown observation {z!r}")
    if not good and not bad:
        raise EmptyPosterior("update left no hypotheses")
    good, bad = _truncate(good, bad, pset.k)
    return ParticleSet(good=good, bad=bad, k=pset.k, fresh=False)


def _log_beta_norm(count: PosteriorCount) -> float:
    """log of B(g2b, g2g) * B(b2g, b2b), the Beta integral over (p, q)."""
    return (
        math.lgamma(count.g2b)
        + math.lgamma(count.g2g)
        - math.lgamma(count.g2b + count.g2g)
        + math.lgamma(count.b2g)
        + math.lgamma(count.b2b)
        - math.lgamma(count.b2g + count.b2b)
    )


@dataclass(frozen=True)
class ExactPosterior:
    """Brute-force posterior over (state, counts) after a history.

    ``entries`` maps (state, counts) to the integer appearance count;
    ``log_weights`` carries the unnormalized log posterior mass
    log(C) + log Beta-normalizer, and ``log_evidence`` its total.
    """

    entries: dict[tuple[ArrivalState, PosteriorCount], int]
    log_weights: dict[tuple[ArrivalState, PosteriorCount], float]
    log_evidence: float

    def state_marginal(self, state: ArrivalState) -> float:
        logs = [lw for (s, _), lw in self.log_weights.items() if s is state]
        if not logs:
            return 0.0
        m = max(logs)
        return math.exp(m + math.log(sum(math.exp(x - m) for x in logs)) - self.log_evidence)

    def posterior_mean_params(self) -> tuple[float, float]:
        """Posterior means of (p, q), averaging Beta means over hypotheses."""
        p_acc = q_acc = 0.0
        for key, lw in self.log_weights.items():
            w = math.exp(lw - self.log_evidence)
            _, count = key
            p_acc += w * count.mean_p
            q_acc += w * count.mean_q
        return p_acc, q_acc


def exact_posterior(
    z_history: list[Observation], prior: PosteriorCount = UNIFORM_PRIOR
) -> ExactPosterior:
    """Enumerate every state history consistent with the observations.

    Each history pins one state per slot (observed slots are fixed,
    slept slots branch) and contributes weight 1 to the appearance
    count of its final (state, counts) pair on top of the prior counts.
    The enumeration is exponential in the number of slept slots, so
    those are capped; fully observed histories of any length enumerate
    a single path.
    """
    unobserved = sum(1 for z in z_history if z is Observation.NONE)
    if unobserved > MAX_EXACT_HISTORY:
        raise HistoryTooLong(
            f"{unobserved} unobserved slots exceed the enumeration bound {MAX_EXACT_HISTORY}"
        )
    if not z_history:
        raise ValueError("history must contain at least one observation")

    entries: dict[tuple[ArrivalState, PosteriorCount], int] = {}

    def allowed(z: Observation) -> tuple[ArrivalState, ...]:
        if z is Observation.GOOD:
            return (ArrivalState.GOOD,)
        if z is Observation.BAD:
            return (ArrivalState.BAD,)
        return (ArrivalState.GOOD, ArrivalState.BAD)

    def recurse(t: int, state: ArrivalState, count: PosteriorCount) -> None:
        if t == len(z_history):
            key = (state, count)
            entries[key] = entries.get(key, 0) + 1
            return
        for nxt in allowed(z_history[t]):
            if state is ArrivalState.GOOD:
                new = (
                    count._replace(g2g=count.g2g + 1)
                    if nxt is ArrivalState.GOOD
                    else count._replace(g2b=count.g2b + 1)
                )
            else:
                new = (
                    count._replace(b2g=count.b2g + 1)
                    if nxt is ArrivalState.GOOD
                    else count._replace(b2b=count.b2b + 1)
                )
            recurse(t + 1, nxt, new)

    for first in allowed(z_history[0]):
        recurse(1, first, prior)

    log_weights = {
        key: math.log(c) + _log_beta_norm(key[1]) for key, c in entries.items()
    }
    m = max(log_weights.values())
    log_evidence = m + math.log(sum(math.exp(x - m) for x in log_weights.values()))
    return ExactPosterior(entries=entries, log_weights=log_weights, log_evidence=log_evidence)


class SleepTimePlanner:
    """Maps sampled parameter estimates to an optimal sleep count.

    Consults a lookup table when one is supplied (nearest cell); on a
    miss, or without a table, computes the exact optimum and caches it
    per distinct estimate pair.
    """

    def __init__(self, cfg: RewardConfig, table: LookupTable | None = None):
        self.cfg = cfg
        self.table = table
        self._cache: dict[tuple[float, float], ThresholdPolicy] = {}

    def plan(self, p: float, q: float) -> ThresholdPolicy | None:
        """Policy for the estimates, or None when they violate the model."""
        if not (0.0 < p < 1.0 and 0.0 < q < 1.0 and 1.0 - p > q):
            return None
        if self.table is not None:
            policy = self.table.lookup(p, q)
            if policy is not None:
                return policy
        key = (p, q)
        if key not in self._cache:
            self._cache[key], _ = optimal_sleep_time(GEParams(p=p, q=q), self.cfg)
        return self._cache[key]


def sample_and_plan(
    pset: ParticleSet, rng: np.random.Generator, planner: SleepTimePlanner
) -> tuple[int, tuple[float, float]]:
    """Draw one hypothesis by weight and plan a sleep for its estimates.

    Estimates that violate the model constraint, or whose optimum is to
    never harvest, fall back to a single sleeping slot: a learner must
    not stop observing forever on the strength of a possibly wrong
    estimate.
    """
    particles = [(0, p) for p in pset.good] + [(1, p) for p in pset.bad]
    if not particles:
        raise EmptyPosterior("cannot sample from an empty hypothesis set")
    weights = np.array([float(p.weight) for _, p in particles])
    idx = int(rng.choice(len(particles), p=weights / weights.sum()))
    count = particles[idx][1].count
    p_hat, q_hat = count.mean_p, count.mean_q
    policy = planner.plan(p_hat, q_hat)
    if policy is None or policy.never_harvest:
        return 1, (p_hat, q_hat)
    return policy.sleep_slots, (p_hat, q_hat)


class PosteriorSamplingLearner:
    """Stateful stepper: harvest when the timer is zero, learn, replan."""

    def __init__(
        self,
        k: int,
        planner: SleepTimePlanner,
        rng: np.random.Generator,
    ):
        self.k = k
        self.planner = planner
        self.rng = rng
        self.pset = initial_particles(k)
        self.timer = 0
        self.last_plan: tuple[float, float] | None = None

    def wants_harvest(self) -> bool:
        return self.timer == 0

    def record_harvest(self, state_good: bool) -> None:
        if state_good:
            self.pset = observe(self.pset, Observation.GOOD)
            self.timer = 0
        else:
            self.pset = observe(self.pset, Observation.BAD)
            self.timer, self.last_plan = sample_and_plan(self.pset, self.rng, self.planner)

    def record_sleep(self) -> None:
        self.pset = observe(self.pset, Observation.NONE)
        self.timer = max(0, self.timer - 1)


@dataclass(frozen=True)
class SlotRecord:
    t: int
    action: str
    observation: str | None
    timer: int
    reward: float
    hypothesis_count: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": self.t,
                "action": self.action,
                "observation": self.observation,
                "timer": self.timer,
                "reward": self.reward,
                "hypothesis_count": self.hypothesis_count,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class EpisodeTrace:
    records: tuple[SlotRecord, ...]
    total_discounted_reward: float
    seed: int

    def write_jsonl(self, stream) -> None:
        for record in self.records:
            stream.write(record.to_json())
            stream.write("\n")

    def planned_sleeps(self) -> list[int]:
        """Timer values set at each failed harvest, in order."""
        return [r.timer for r in self.records if r.action == "harvest" and r.observation == "B"]


def run_learner(
    params: GEParams,
    cfg: RewardConfig,
    k: int,
    horizon: int,
    seed: int,
    table: LookupTable | None = None,
) -> EpisodeTrace:
    """Run one learning episode against a hidden simulated chain.

    The hidden path and the learner's sampling draws both derive from
    ``seed``, so traces are fully reproducible. Returns the per-slot
    trace and the discounted reward total.
    """
    path = simulate(params, horizon, seed=seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1])))
    learner = PosteriorSamplingLearner(k=k, planner=SleepTimePlanner(cfg, table), rng=rng)
    records = []
    total = 0.0
    discount = 1.0
    for t in range(horizon):
        good = bool(path.states[t])
        if learner.wants_harvest():
            reward = cfg.r1 if good else -cfg.r0
            learner.record_harvest(good)
            action, obs = "harvest", ("G" if good else "B")
        else:
            reward = 0.0
            learner.record_sleep()
            action, obs = "sleep", None
        total += discount * reward
        discount *= cfg.gamma
        records.append(
            SlotRecord(
                t=t,
                action=action,
                observation=obs,
                timer=learner.timer,
                reward=reward,
                hypothesis_count=learner.pset.n_hypotheses,
            )
        )
    return EpisodeTrace(records=tuple(records), total_discounted_reward=total, seed=seed)

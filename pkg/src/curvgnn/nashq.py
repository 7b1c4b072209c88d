"""Two-agent tabular Nash Q-learning over discretized curvature states.

One agent trains the network and decides whether to adopt newly proposed
curvatures; the other decides whether to spend effort exploring new ones.
Each epoch both act, both collect a task-metric reward, and both tables
bootstrap on the stage game's Nash equilibrium value instead of a max.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

log = logging.getLogger(__name__)

BEST_RESPONSE_TOL = 1e-9


class HgnnAction(IntEnum):
    ADOPT = 0  # take the proposed curvatures for the next epoch
    KEEP = 1   # stay with the current ones


class AceAction(IntEnum):
    EXPLORE = 0  # re-estimate curvature and refresh the proposal
    HOLD = 1     # keep the standing proposal


JOINT_ACTIONS = tuple((h, a) for h in (HgnnAction.ADOPT, HgnnAction.KEEP)
                      for a in (AceAction.EXPLORE, AceAction.HOLD))

HGNN = 0
ACE = 1


def discretize_state(zetas, zeta_min: float = 0.1, zeta_max: float = 10.0,
                     bin_width: float = 0.1) -> tuple:
    """Clamp each per-layer curvature into bounds and bin it for table keys."""
    bins = []
    for z in zetas:
        z = min(max(float(z), zeta_min), zeta_max)
        bins.append(int((z - zeta_min) / bin_width + 1e-9))
    return tuple(bins)


@dataclass(frozen=True)
class NashSolution:
    pi_hgnn: np.ndarray
    pi_ace: np.ndarray
    value_hgnn: float
    value_ace: float
    pure: tuple | None  # selected joint action when a pure equilibrium exists


def _pure_equilibria(q1: np.ndarray, q2: np.ndarray) -> list:
    out = []
    for i in range(2):
        for j in range(2):
            if q1[i, j] >= q1[1 - i, j] and q2[i, j] >= q2[i, 1 - j]:
                out.append((i, j))
    return out


def nash_equilibrium_2x2(q1, q2) -> NashSolution:
    """Equilibrium of the 2x2 bimatrix game (rows: agent 1, cols: agent 2).

    Pure equilibria win when they exist; among several, the one with the
    highest joint payoff, then the smallest action indices. Otherwise the
    mixed equilibrium from the indifference conditions; a degenerate
    denominator falls back to uniform mixing (logged).
    """
    q1 = np.asarray(q1, dtype=np.float64).reshape(2, 2)
    q2 = np.asarray(q2, dtype=np.float64).reshape(2, 2)
    if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(q2))):
        raise ValueError("stage game has non-finite payoffs")
    pure = _pure_equilibria(q1, q2)
    if pure:
        best = max(pure, key=lambda ij: (q1[ij] + q2[ij], -ij[0], -ij[1]))
        pi1 = np.eye(2)[best[0]]
        pi2 = np.eye(2)[best[1]]
        return NashSolution(pi1, pi2, float(q1[best]), float(q2[best]), best)

    den1 = q2[0, 0] - q2[0, 1] - q2[1, 0] + q2[1, 1]
    den2 = q1[0, 0] - q1[1, 0] - q1[0, 1] + q1[1, 1]
    if abs(den1) < 1e-300 or abs(den2) < 1e-300:
        log.info("degenerate stage game; falling back to uniform mixing")
        p = q = 0.5
    else:
        p = (q2[1, 1] - q2[1, 0]) / den1  # P(agent1 plays row 0)
        q = (q1[1, 1] - q1[0, 1]) / den2  # P(agent2 plays col 0)
        p = min(max(p, 0.0), 1.0)
        q = min(max(q, 0.0), 1.0)
    pi1 = np.array([p, 1.0 - p])
    pi2 = np.array([q, 1.0 - q])
    return NashSolution(pi1, pi2, float(pi1 @ q1 @ pi2), float(pi1 @ q2 @ pi2), None)


class QTables:
    """Per-agent action-value tables keyed by discretized joint state."""

    def __init__(self):
        self._tables = ({}, {})  # HGNN, ACE

    def table(self, agent: int, state: tuple) -> np.ndarray:
        tbl = self._tables[agent]
        if state not in tbl:
            tbl[state] = np.zeros((2, 2))
        return tbl[state]

    def stage_game(self, state: tuple):
        return self.table(HGNN, state), self.table(ACE, state)

    def solve(self, state: tuple) -> NashSolution:
        return nash_equilibrium_2x2(*self.stage_game(state))

    def states(self):
        return set(self._tables[HGNN]) | set(self._tables[ACE])

    def to_jsonable(self) -> dict:
        return {
            "hgnn": {",".join(map(str, s)): t.tolist() for s, t in self._tables[HGNN].items()},
            "ace": {",".join(map(str, s)): t.tolist() for s, t in self._tables[ACE].items()},
        }

    @classmethod
    def from_jsonable(cls, blob: dict) -> "QTables":
        out = cls()
        for agent, key in ((HGNN, "hgnn"), (ACE, "ace")):
            for s, t in blob[key].items():
                state = tuple(int(x) for x in s.split(","))
                out._tables[agent][state] = np.asarray(t, dtype=np.float64)
        return out


def nash_value(tables: QTables, state: tuple, agent: int) -> float:
    """pi1' Q_agent pi2 at the state's equilibrium strategies."""
    sol = tables.solve(state)
    q = tables.table(agent, state)
    return float(sol.pi_hgnn @ q @ sol.pi_ace)


def epsilon_greedy_joint(tables: QTables, state: tuple, eps: float,
                         rng: np.random.Generator):
    """Uniform joint action with probability eps, else the equilibrium play.

    A pure equilibrium is returned as-is; a mixed one is sampled from the
    product of the two strategies.
    """
    if not (0.0 <= eps <= 1.0):
        raise ValueError("eps must lie in [0, 1]")
    if rng.random() < eps:
        h, a = JOINT_ACTIONS[int(rng.integers(0, 4))]
        return HgnnAction(h), AceAction(a)
    sol = tables.solve(state)
    if sol.pure is not None:
        return HgnnAction(sol.pure[0]), AceAction(sol.pure[1])
    i = 0 if rng.random() < sol.pi_hgnn[0] else 1
    j = 0 if rng.random() < sol.pi_ace[0] else 1
    return HgnnAction(i), AceAction(j)


def q_update(tables: QTables, state: tuple, action, rewards, next_state: tuple,
             alpha: float, beta: float) -> None:
    """Nash-Q Bellman step for both agents at the taken joint action."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if not (0.0 <= beta < 1.0):
        raise ValueError("beta must lie in [0, 1)")
    i, j = int(action[0]), int(action[1])
    for agent, reward in ((HGNN, rewards[0]), (ACE, rewards[1])):
        target = reward + beta * nash_value(tables, next_state, agent)
        tbl = tables.table(agent, state)
        tbl[i, j] += alpha * (target - tbl[i, j])


def compute_rewards(metric_curr: float, metric_prev_hgnn: float,
                    metric_remapped_curr: float, metric_remapped_prev: float):
    """Per-agent improvements of the validation metric.

    The training agent is scored on the newly trained embeddings, the
    exploration agent on the freshly remapped ones, both against their
    previous value.
    """
    for m in (metric_curr, metric_prev_hgnn, metric_remapped_curr, metric_remapped_prev):
        if not (0.0 <= m <= 1.0):
            raise ValueError(f"metrics must lie in [0, 1], got {m}")
    return metric_curr - metric_prev_hgnn, metric_remapped_curr - metric_remapped_prev


def equilibrium_reached(history, patience: int = 20) -> bool:
    """Both agents settled: same state and a greedy (KEEP, HOLD) equilibrium
    for `patience` consecutive epochs."""
    if len(history) < patience:
        return False
    window = list(history)[-patience:]
    state0 = window[0][0]
    for state, action in window:
        if state != state0 or action != (HgnnAction.KEEP, AceAction.HOLD):
            return False
    return True


@dataclass
class EpsilonSchedule:
    """Multiplicative decay from start toward floor, evaluated per epoch."""

    start: float = 0.9
    floor: float = 0.1
    decay: float = 0.99

    def value(self, epoch: int) -> float:
        return max(self.floor, self.start * self.decay ** epoch)

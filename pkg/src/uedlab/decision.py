"""Exact finite-matrix-game solvers for decisions under ignorance.

A GameMatrix holds payoffs U[i, j] for policy i under environment
parameterization j.  The three decision rules (maximin, insufficient reason,
minimax regret) return full tie sets.  construct_lambda_mr builds, for each
policy, a distribution over parameterizations whose policy-conditioned
expected value is maximized exactly by the minimax-regret policies.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

_TIE_TOL = 1e-12


@dataclass
class GameMatrix:
    payoffs: np.ndarray  # (n_policies, n_params)
    policy_labels: list[str] = field(default_factory=list)
    param_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.payoffs = np.asarray(self.payoffs, dtype=np.float64)
        if self.payoffs.ndim != 2 or self.payoffs.size == 0:
            raise ValueError("payoffs must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(self.payoffs)):
            raise ValueError("payoffs must be finite")
        n, m = self.payoffs.shape
        if not self.policy_labels:
            self.policy_labels = [f"pi_{i}" for i in range(n)]
        if not self.param_labels:
            self.param_labels = [f"theta_{j}" for j in range(m)]

    @property
    def n_policies(self) -> int:
        return self.payoffs.shape[0]

    @property
    def n_params(self) -> int:
        return self.payoffs.shape[1]


@dataclass(frozen=True)
class SuccessBands:
    """Reward bands for a crisp success/failure split.

    Requires F_min <= F_max < S_min <= S_max, and both band widths smaller
    than the gap S_min - F_max.
    """

    s_min: float
    s_max: float
    f_min: float
    f_max: float

    def __post_init__(self):
        if not (self.f_min <= self.f_max < self.s_min <= self.s_max):
            raise ValueError("bands must satisfy F_min <= F_max < S_min <= S_max")
        gap = self.s_min - self.f_max
        if not (self.s_max - self.s_min < gap and self.f_max - self.f_min < gap):
            raise ValueError("band widths must be smaller than the class gap")


@dataclass(frozen=True)
class MRPolicyComponents:
    """Per-policy pieces of the minimax-regret environment distribution."""

    theta_bar: int  # parameter maximizing this policy's regret
    v_pi: float
    c_pi: float
    baseline: dict[int, float]  # mixture over parameter indices
    totally_dominated: bool


def _tie_set(scores: np.ndarray, maximize: bool) -> list[int]:
    best = scores.max() if maximize else scores.min()
    return [i for i, s in enumerate(scores) if abs(s - best) <= _TIE_TOL]


def regret_matrix(game: GameMatrix) -> np.ndarray:
    """Entry (i, j) = max_i' U[i', j] - U[i, j]; column maxima get regret 0."""
    return game.payoffs.max(axis=0, keepdims=True) - game.payoffs


def maximin(game: GameMatrix) -> list[int]:
    """Policies maximizing the worst-case payoff (full tie set)."""
    return _tie_set(game.payoffs.min(axis=1), maximize=True)


def insufficient_reason(game: GameMatrix) -> list[int]:
    """Policies maximizing the mean payoff under a uniform parameter prior."""
    return _tie_set(game.payoffs.mean(axis=1), maximize=True)


def minimax_regret(game: GameMatrix) -> list[int]:
    """Policies minimizing the worst-case regret (full tie set)."""
    return _tie_set(regret_matrix(game).max(axis=1), maximize=False)


def totally_dominates(game: GameMatrix, b: int, a: int) -> bool:
    """True iff policy b's worst payoff strictly beats policy a's best."""
    return float(game.payoffs[b].min()) > float(game.payoffs[a].max())


def _two_point_mixture(row: np.ndarray, target: float) -> dict[int, float]:
    """Mixture over the row's argmin/argmax columns with expected value
    ``target``; requires rowmin <= target <= rowmax."""
    j_lo = int(row.argmin())
    j_hi = int(row.argmax())
    lo, hi = row[j_lo], row[j_hi]
    if hi - lo <= _TIE_TOL:
        return {j_lo: 1.0}
    w = float((target - lo) / (hi - lo))
    w = min(1.0, max(0.0, w))
    if w == 0.0:
        return {j_lo: 1.0}
    if w == 1.0:
        return {j_hi: 1.0}
    return {j_hi: w, j_lo: 1.0 - w}


def construct_lambda_mr(game: GameMatrix) -> dict[int, MRPolicyComponents]:
    """Per-policy parameter distributions realizing the minimax-regret rule.

    Minimax-regret policies receive a two-point mixture over their best/worst
    parameters achieving the common value C = min over the tie set of the row
    maximum; all other policies (including totally dominated ones) get a point
    mass on their worst parameter.  Since no policy outside the tie set can
    totally dominate a tie-set member, its row minimum lies strictly below C,
    which makes the argmax of the policy-conditioned expected value exactly
    the minimax-regret set.
    """
    payoffs = game.payoffs
    n = game.n_policies
    reg = regret_matrix(game)
    mr_set = set(minimax_regret(game))
    dominated = [
        any(totally_dominates(game, b, a) for b in range(n) if b != a)
        for a in range(n)
    ]
    common_value = min(float(payoffs[i].max()) for i in mr_set)
    out: dict[int, MRPolicyComponents] = {}
    for i in range(n):
        row = payoffs[i]
        theta_bar = int(reg[i].argmax())
        if i in mr_set:
            baseline = _two_point_mixture(row, common_value)
            v = float(row.max() - row.min())
            c = float(common_value - row.min())
        else:
            baseline = {int(row.argmin()): 1.0}
            v = float(row.max() - row.min())
            c = 0.0
        out[i] = MRPolicyComponents(
            theta_bar=theta_bar,
            v_pi=v,
            c_pi=c,
            baseline=baseline,
            totally_dominated=dominated[i],
        )
    return out


def lambda_mr_expected_values(game: GameMatrix) -> np.ndarray:
    """Policy-conditioned expected payoff E_{theta ~ Lambda(pi)}[U^theta(pi)]."""
    components = construct_lambda_mr(game)
    values = np.empty(game.n_policies)
    for i, comp in components.items():
        values[i] = sum(w * game.payoffs[i, j] for j, w in comp.baseline.items())
    return values


@dataclass(frozen=True)
class Theorem1Report:
    applicable: bool
    passed: bool
    reason: str
    chosen: tuple[int, ...] = ()
    violations: tuple[tuple[int, int], ...] = ()  # (policy, column) witnesses


def theorem1_check(game: GameMatrix, bands: SuccessBands) -> Theorem1Report:
    """Checks that every minimax-regret policy succeeds in every column where
    success is possible, under a crisp success/failure banding.

    Premises (payoffs inside the bands; some row succeeding wherever any row
    succeeds) are verified first; premise failures are reported as
    not-applicable rather than as check failures.
    """
    payoffs = game.payoffs
    in_success = (payoffs >= bands.s_min) & (payoffs <= bands.s_max)
    in_failure = (payoffs >= bands.f_min) & (payoffs <= bands.f_max)
    if not np.all(in_success | in_failure):
        return Theorem1Report(False, False, "payoff outside both bands")
    col_solvable = in_success.any(axis=0)
    universal = in_success[:, col_solvable].all(axis=1)
    if not universal.any():
        return Theorem1Report(False, False, "no universally succeeding policy")
    chosen = minimax_regret(game)
    violations = [
        (i, j)
        for i in chosen
        for j in np.nonzero(col_solvable)[0]
        if not in_success[i, j]
    ]
    return Theorem1Report(
        applicable=True,
        passed=not violations,
        reason="ok" if not violations else "minimax-regret policy fails a solvable column",
        chosen=tuple(chosen),
        violations=tuple(violations),
    )


@dataclass(frozen=True)
class NashDominanceReport:
    n_equilibria: int
    violations: tuple[tuple[int, int, int], ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def pure_nash_equilibria(payoffs: np.ndarray) -> list[tuple[int, int, int]]:
    """All pure-strategy equilibria of the three-player design game induced by
    a payoff matrix U[(policy, param)].

    Profiles are (protagonist, antagonist, parameterization).  The protagonist
    earns U[p, j]; the antagonist and the environment-choosing adversary both
    earn the regret U[a, j] - U[p, j].
    """
    payoffs = np.asarray(payoffs, dtype=np.float64)
    n, m = payoffs.shape
    equilibria = []
    for p in range(n):
        for a in range(n):
            for j in range(m):
                if payoffs[p, j] < payoffs[:, j].max() - _TIE_TOL:
                    continue  # protagonist deviates
                if payoffs[a, j] < payoffs[:, j].max() - _TIE_TOL:
                    continue  # antagonist deviates
                regrets = payoffs[a, :] - payoffs[p, :]
                if regrets[j] < regrets.max() - _TIE_TOL:
                    continue  # adversary deviates
                equilibria.append((p, a, j))
    return equilibria


def nash_dominance_check(payoffs: np.ndarray) -> NashDominanceReport:
    """Verifies that in every pure equilibrium the protagonist weakly beats
    the antagonist under every parameterization (absence of equilibria is a
    vacuous pass)."""
    payoffs = np.asarray(payoffs, dtype=np.float64)
    equilibria = pure_nash_equilibria(payoffs)
    violations = []
    for p, a, j in equilibria:
        for j2 in range(payoffs.shape[1]):
            if payoffs[p, j2] < payoffs[a, j2] - _TIE_TOL:
                violations.append((p, a, j2))
    return NashDominanceReport(
        n_equilibria=len(equilibria), violations=tuple(violations)
    )


def load_game_csv(text: str) -> GameMatrix:
    """Parses a payoff CSV: header row of parameter labels, first column of
    policy labels."""
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise ValueError("game CSV needs a header row and at least one policy row")
    param_labels = [cell.strip() for cell in rows[0][1:]]
    if not param_labels:
        raise ValueError("game CSV header has no parameter columns")
    policy_labels = []
    payoffs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(param_labels) + 1:
            raise ValueError(f"line {lineno}: expected {len(param_labels) + 1} cells")
        policy_labels.append(row[0].strip())
        try:
            payoffs.append([float(cell) for cell in row[1:]])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: non-numeric payoff ({exc})") from None
    return GameMatrix(np.array(payoffs), policy_labels, param_labels)


def dump_game_csv(game: GameMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([""] + game.param_labels)
    for label, row in zip(game.policy_labels, game.payoffs):
        writer.writerow([label] + [format(v, "g") for v in row])
    return buf.getvalue()

"""Live conduct of a single trial: recommendations, outcomes, event log.

A :class:`LiveSession` walks one real trial through the same allocation rule
as the simulator: burn-in round-robin, then the policy's decision applied to
the accumulated arm states.  Tie-breaks come from the replica-0 streams of the
session seed, so a session fed the response stream of ``simulate_trial`` with
the same seed reproduces its allocation sequence exactly.

Sessions persist through an append-only event log (one JSON record per line:
created / outcome / finalized).  Reloading the log replays every session
deterministically, which is also the crash-recovery path.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .policies import PolicySpec, next_arm, pick_with_ties, policy_scores
from .stats import ArmState, folded_superiority_batch, posterior, update_arm

SIGMA_FLOOR = 1e-12


class SessionError(ValueError):
    """Invalid operation on a live session."""


class DuplicateOutcomeError(SessionError):
    """An outcome for this patient index was already recorded."""


class UnknownArmError(SessionError):
    """Outcome posted for an arm index outside the trial."""


class NotReadyError(SessionError):
    """Finalisation requested before the trial is complete."""


@dataclass(frozen=True)
class SessionConfig:
    """Static description of a live trial."""

    n_arms: int
    n_patients: int
    policy: PolicySpec
    targets: tuple
    sigmas: tuple | None          # known response sds, or None to estimate
    seed: int
    free_entry: bool = False      # allow outcomes on non-recommended arms

    def __post_init__(self):
        if self.n_arms < 2:
            raise ValueError("a trial needs at least 2 arms")
        if len(self.targets) != self.n_arms:
            raise ValueError("one target per arm required")
        if self.sigmas is not None and len(self.sigmas) != self.n_arms:
            raise ValueError("one sigma per arm required")
        if self.n_patients < self.n_arms * self.policy.burn_in:
            raise ValueError("n_patients cannot cover the burn-in")
        if self.sigmas is None and self.policy.burn_in < 2:
            raise ValueError("unknown variances require burn-in >= 2 per arm")

    def to_json(self) -> dict:
        d = {
            "n_arms": self.n_arms, "n_patients": self.n_patients,
            "targets": list(self.targets),
            "sigmas": None if self.sigmas is None else list(self.sigmas),
            "seed": self.seed, "free_entry": self.free_entry,
            "policy": {
                "kind": self.policy.kind, "burn_in": self.policy.burn_in,
                "p": self.policy.p, "kappa": self.policy.kappa,
                "a": self.policy.a, "b": self.policy.b,
                "draws": self.policy.draws, "mode": self.policy.mode,
            },
        }
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SessionConfig":
        pol = d["policy"]
        policy = PolicySpec(kind=pol["kind"], burn_in=pol["burn_in"], p=pol["p"],
                            kappa=pol["kappa"], a=pol["a"], b=pol["b"],
                            draws=pol["draws"], mode=pol["mode"])
        return cls(n_arms=d["n_arms"], n_patients=d["n_patients"], policy=policy,
                   targets=tuple(d["targets"]),
                   sigmas=None if d["sigmas"] is None else tuple(d["sigmas"]),
                   seed=d["seed"], free_entry=d.get("free_entry", False))


@dataclass(frozen=True)
class FinalResult:
    best: int
    second: int
    pi: float
    reject: bool
    eta: float


@dataclass
class LiveSession:
    """Mutable state of one trial under conduct (single writer)."""

    session_id: str
    config: SessionConfig
    outcomes: list = field(default_factory=list)   # [(arm, value), ...]
    final: FinalResult | None = None
    created_ts: float = 0.0

    def __post_init__(self):
        cfg = self.config
        self._arms = [
            ArmState(sigma_known=None if cfg.sigmas is None else float(cfg.sigmas[j]),
                     target=float(cfg.targets[j]))
            for j in range(cfg.n_arms)
        ]
        # Same stream layout as simulate_trial replica 0: tie-breaks match.
        _, self._u_alloc = rngmod.trial_streams(cfg.seed, 0, cfg.n_patients, 1)
        for arm, value in self.outcomes:
            self._arms[arm] = update_arm(self._arms[arm], value)

    # -- state -------------------------------------------------------------
    @property
    def next_patient(self) -> int:
        """1-based index of the next patient to be treated."""
        return len(self.outcomes) + 1

    @property
    def phase(self) -> str:
        if self.final is not None:
            return "complete"
        if len(self.outcomes) >= self.config.n_patients:
            return "full"
        if self.next_patient <= self.config.n_arms * self.config.policy.burn_in:
            return "burn_in"
        return "adaptive"

    def arm_states(self) -> list[ArmState]:
        return list(self._arms)

    # -- operations ----------------------------------------------------------
    def recommendation(self) -> tuple[int, list | None]:
        """Arm for the next patient plus per-arm policy scores (when defined).

        Deterministic given the session state: repeated calls return the same
        answer until the next outcome is recorded.
        """
        cfg = self.config
        t = self.next_patient
        if t > cfg.n_patients:
            raise NotReadyError("trial is full; no further recommendations")
        k = cfg.n_arms
        arm = next_arm(cfg.policy, self._arms, t, cfg.n_patients,
                       tiebreak_u=float(self._u_alloc[t - 1]),
                       ts_stream=(rngmod.policy_stream(cfg.seed, 0, t)
                                  if cfg.policy.kind == "ts" else None))
        if t <= k * cfg.policy.burn_in or cfg.policy.kind in ("fr", "ts"):
            return arm, None
        counts = np.array([float(a.count) for a in self._arms])
        means = np.array([a.mean for a in self._arms])
        targets = np.array(cfg.targets, dtype=float)
        if cfg.sigmas is not None:
            sig = np.array(cfg.sigmas, dtype=float)
        else:
            sig = np.sqrt(np.maximum(
                [a.m2 / max(a.count - 1, 1) for a in self._arms], SIGMA_FLOOR**2))
        scores = policy_scores(cfg.policy, counts[None, :], means[None, :], sig, targets)
        return arm, [float(s) for s in scores[0]]

    def validate_outcome(self, arm: int, value: float):
        """Raise unless recording (arm, value) now would be legal. No mutation."""
        if self.final is not None:
            raise SessionError("session already finalised")
        if len(self.outcomes) >= self.config.n_patients:
            raise SessionError("trial already has all its outcomes")
        if not 0 <= arm < self.config.n_arms:
            raise UnknownArmError(f"arm {arm} outside 0..{self.config.n_arms - 1}")
        if not np.isfinite(value):
            raise SessionError("outcome value must be finite")
        if not self.config.free_entry:
            expected, _ = self.recommendation()
            if arm != expected:
                raise SessionError(
                    f"protocol allocates patient {self.next_patient} to arm "
                    f"{expected}, not {arm} (enable free_entry to override)"
                )

    def apply_outcome(self, arm: int, value: float):
        """Fold a validated outcome into the state (used by log replay)."""
        self.outcomes.append((int(arm), float(value)))
        self._arms[arm] = update_arm(self._arms[arm], float(value))

    def record(self, arm: int, value: float):
        """Record one patient outcome on ``arm``."""
        self.validate_outcome(arm, value)
        self.apply_outcome(arm, value)

    def finalize(self, eta: float, force: bool = False) -> FinalResult:
        """Select best and second-best, compute pi, apply the threshold test."""
        if self.final is not None:
            return self.final
        if not 0.0 < eta < 1.0:
            raise SessionError("eta must be in (0, 1)")
        if len(self.outcomes) < self.config.n_patients and not force:
            raise NotReadyError(
                f"only {len(self.outcomes)} of {self.config.n_patients} outcomes "
                "recorded (pass force=True to finalise anyway)"
            )
        min_count = 1 if self.config.sigmas is not None else 2
        if sum(1 for a in self._arms if a.count >= min_count) < 2:
            raise NotReadyError("need at least two arms with defined posteriors")
        gen = rngmod.selection_stream(self.config.seed, 0)
        u = gen.random(2)
        dist = np.array([
            abs(a.mean - a.target) if a.count >= min_count else np.inf
            for a in self._arms
        ])
        best = int(pick_with_ties(dist[None, :], u[:1], largest=False)[0])
        masked = dist.copy()
        masked[best] = np.inf
        second = int(pick_with_ties(masked[None, :], u[1:], largest=False)[0])
        pb, ps = posterior(self._arms[best]), posterior(self._arms[second])
        pi = float(folded_superiority_batch(
            pb.mean, pb.variance, ps.mean, ps.variance,
            self._arms[best].target, self._arms[second].target))
        self.final = FinalResult(best=best, second=second, pi=pi,
                                 reject=bool(pi > eta), eta=float(eta))
        return self.final


class SessionStore:
    """Event-logged registry of live sessions.

    Every mutation appends one JSON line to the log before it is applied, so
    reopening the store replays all sessions to their exact previous state.
    """

    def __init__(self, log_path):
        self.log_path = Path(log_path)
        self.sessions: dict[str, LiveSession] = {}
        if self.log_path.exists():
            self._replay()

    def _append(self, record: dict):
        record = {"ts": time.time(), **record}
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with self.log_path.open("a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _replay(self):
        with self.log_path.open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec["event"]
                if kind == "created":
                    cfg = SessionConfig.from_json(rec["config"])
                    self.sessions[rec["session"]] = LiveSession(
                        rec["session"], cfg, created_ts=rec["ts"])
                elif kind == "outcome":
                    self.sessions[rec["session"]].apply_outcome(rec["arm"], rec["value"])
                elif kind == "finalized":
                    s = self.sessions[rec["session"]]
                    s.final = FinalResult(best=rec["best"], second=rec["second"],
                                          pi=rec["pi"], reject=rec["reject"],
                                          eta=rec["eta"])

    def create(self, config: SessionConfig, session_id: str | None = None) -> LiveSession:
        sid = session_id or uuid.uuid4().hex
        if sid in self.sessions:
            raise SessionError(f"session {sid} already exists")
        now = time.time()
        self._append({"event": "created", "session": sid, "config": config.to_json()})
        session = LiveSession(sid, config, created_ts=now)
        self.sessions[sid] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        if session_id not in self.sessions:
            raise KeyError(session_id)
        return self.sessions[session_id]

    def record(self, session_id: str, arm: int, value: float) -> LiveSession:
        """Append-then-apply: the log only ever holds validated events."""
        session = self.get(session_id)
        session.validate_outcome(arm, value)
        self._append({"event": "outcome", "session": session_id,
                      "patient": session.next_patient,
                      "arm": int(arm), "value": float(value)})
        session.apply_outcome(arm, value)
        return session

    def finalize(self, session_id: str, eta: float, force: bool = False) -> FinalResult:
        session = self.get(session_id)
        result = session.finalize(eta, force=force)
        self._append({"event": "finalized", "session": session_id,
                      "eta": result.eta, "best": result.best, "second": result.second,
                      "pi": result.pi, "reject": result.reject})
        return result

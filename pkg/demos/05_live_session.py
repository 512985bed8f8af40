"""Conduct a live trial against the session engine (no HTTP).

Plays the coordinator role: ask for the recommended arm, enter the observed
response, watch the per-arm gains move, finalise with the superiority test.
Responses here are synthetic; in practice they come from the clinic.
"""

import numpy as np

from targetrial import PolicySpec, SessionConfig, SessionStore

store = SessionStore("demo-sessions.jsonl")
config = SessionConfig(n_arms=3, n_patients=30,
                       policy=PolicySpec.we_sym(2, 0.7, burn_in=2),
                       targets=(0.0, 0.0, 0.0), sigmas=(1.5, 1.5, 1.5),
                       seed=99, free_entry=False)
session = store.create(config)
print(f"session {session.session_id}")

truth = np.array([0.2, -1.4, 2.2])
gen = np.random.default_rng(3)
for patient in range(1, 31):
    arm, gains = session.recommendation()
    response = float(truth[arm] + 1.5 * gen.standard_normal())
    store.record(session.session_id, arm, response)
    shown = "burn-in" if gains is None else np.round(gains, 3).tolist()
    print(f"patient {patient:>2}: arm {arm + 1}, response {response:+.2f}, gains {shown}")

result = store.finalize(session.session_id, eta=0.9)
print(f"\nbest arm {result.best + 1}, second {result.second + 1}, "
      f"pi={result.pi:.4f}, reject={result.reject}")
print("event log: demo-sessions.jsonl (replayable)")

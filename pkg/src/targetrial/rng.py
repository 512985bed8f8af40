"""Reproducible random-number streams for parallel Monte Carlo.

Every source of randomness in the engine is a counter-based Philox stream
keyed by a path of integers rooted at a 64-bit master seed.  A replica's
streams are pure functions of ``(seed, replica_index, stream_tag)``, so
results never depend on execution order, chunking or the number of worker
processes.
"""

from __future__ import annotations

import numpy as np

# Stream tags appended to (seed, replica). Values are arbitrary but frozen:
# changing them changes every simulated trajectory.
STREAM_TRIAL = 0        # responses + allocation tie-breaks, fixed draw order
STREAM_SELECTION = 1    # final selection tie-breaks, then posterior MC draws
STREAM_POLICY = 2       # per-patient policy-internal draws (Thompson sampling)


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the Philox stream keyed by ``(seed, *path)``."""
    key = np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key))


def trial_streams(seed: int, replica: int, n_patients: int, dim: int):
    """Pre-draw the in-trial randomness consumed by one replica.

    Returns ``(z, u_alloc)``: ``z`` has shape ``(n_patients, dim)`` and holds
    the standard-normal response innovations (patient ``t`` uses row ``t-1``),
    ``u_alloc`` has one uniform per patient for allocation tie-breaks and
    randomised policies.  The draw order within the stream is fixed, so
    trajectories are bit-reproducible however trials are batched.
    """
    gen = substream(seed, replica, STREAM_TRIAL)
    z = gen.standard_normal((n_patients, dim))
    u_alloc = gen.random(n_patients)
    return z, u_alloc


def selection_stream(seed: int, replica: int) -> np.random.Generator:
    """Stream for finalisation: two tie-break uniforms, then posterior MC.

    Kept separate from the allocation stream so the final selection does not
    perturb (and is not perturbed by) the in-trial trajectory.
    """
    return substream(seed, replica, STREAM_SELECTION)


def policy_stream(seed: int, replica: int, patient: int) -> np.random.Generator:
    """Stream for policy-internal draws at a given patient index."""
    return substream(seed, replica, STREAM_POLICY, patient)

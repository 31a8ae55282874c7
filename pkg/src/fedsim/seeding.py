"""Deterministic seed derivation for every random stream in a run.

Every piece of randomness is keyed by an explicit tuple of integers
(master seed, round, client id, phase), hashed through numpy's
``SeedSequence``. Two runs with the same master seed therefore produce
bit-identical results regardless of client scheduling order, and each
phase of a client's local update draws from its own independent stream.
"""

from __future__ import annotations

import numpy as np

# Phase codes appended to (master_seed, round, client_id) so that each
# training phase gets an independent stream. FedRep and FedAH share the
# HEAD/EXTRACTOR codes, which makes their phases see identical batch
# orders under identical seeds.
PHASE_SAMPLE = 0
PHASE_JOINT = 1
PHASE_WEIGHTS = 2
PHASE_HEAD = 3
PHASE_EXTRACTOR = 4
PHASE_SPLIT = 5


def rng_for(*fields: int) -> np.random.Generator:
    """Generator seeded from an integer key tuple."""
    return np.random.default_rng(np.random.SeedSequence(list(fields)))


def seed_for(*fields: int) -> int:
    """Single 32-bit seed derived from an integer key tuple."""
    return int(np.random.SeedSequence(list(fields)).generate_state(1)[0])

"""Shared fixtures and brute-force oracles.

The oracles here are deliberately naive (explicit sums over the cube) so
that they share no code path with the fast routines they check.
"""
import time

import numpy as np
import pytest

from fwxeb import pipeline as pl

MASTER_SEED = 2024
N_QUBITS = 12
SHOTS = 500_000
CIRCUITS = 10


def walsh_matrix(n):
    """``H[S, x] = (-1)**popcount(S & x)`` built bit by bit."""
    M = 1 << n
    idx = np.arange(M)
    H = np.ones((M, M))
    for i in range(n):
        bit = (idx >> i) & 1
        H *= np.where(np.outer(bit, bit) == 1, -1.0, 1.0)
    return H


def brute_forward(f):
    f = np.asarray(f, dtype=float)
    n = f.size.bit_length() - 1
    return walsh_matrix(n) @ f / f.size


def brute_convolve(f, g):
    """``2**-n sum_z f(z) g(x ^ z)`` by direct double sum."""
    M = len(f)
    idx = np.arange(M)
    xor = idx[:, None] ^ idx[None, :]
    return (g[xor] @ f) / M


def brute_bitflip(P, n, flip_if_zero, flip_if_one):
    """Outcome distribution from flipping each true bit independently."""
    M = 1 << n
    out = np.zeros(M)
    for y in range(M):
        for x in range(M):
            w = 1.0
            for i in range(n):
                yi, xi = (y >> i) & 1, (x >> i) & 1
                q = flip_if_one if yi else flip_if_zero
                w *= q if xi != yi else 1.0 - q
            out[x] += P[y] * w
    return out


def run_timed(cfg):
    t0 = time.perf_counter()
    report = pl.run_pipeline(cfg)
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def google_config():
    return pl.ExperimentConfig(
        n=N_QUBITS, seed=MASTER_SEED, circuits=CIRCUITS, shots=SHOTS,
        noise="google:phi=0.4", estimators=("fidelity", "readout", "lambda"),
    )


@pytest.fixture(scope="session")
def symro_config():
    return pl.ExperimentConfig(
        n=N_QUBITS, seed=MASTER_SEED, circuits=CIRCUITS, shots=SHOTS,
        noise="symro:s=0.5,q=0.038",
    )


@pytest.fixture(scope="session")
def google_run(google_config):
    return run_timed(google_config)


@pytest.fixture(scope="session")
def symro_run(symro_config):
    return run_timed(symro_config)


@pytest.fixture(scope="session")
def symro_circuit0(symro_config):
    _, P, S = pl.circuit_inputs(symro_config, 0)
    return P, S

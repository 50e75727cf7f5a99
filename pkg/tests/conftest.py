import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aoisched.model import SystemSpec

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def unit_system(N, weights=None, drops=None):
    w = np.ones(N) if weights is None else weights
    return SystemSpec.from_arrays(w, np.ones(N), drops)


def random_system(rng, N, max_drop=0.9, kinds=("deterministic", "exponential", "gamma")):
    kind = [str(k) for k in rng.choice(kinds, N)]
    scovs = [float(rng.uniform(0.2, 3.0)) if k == "gamma" else None for k in kind]
    return SystemSpec.from_arrays(rng.uniform(0.1, 5.0, N), rng.uniform(0.2, 5.0, N),
                                  rng.uniform(0.0, max_drop, N), kinds=kind, scovs=scovs)


def random_pattern(rng, N, K):
    """Feasible pattern of size K over N sources (K >= N), randomly ordered."""
    entries = list(range(1, N + 1)) + list(rng.integers(1, N + 1, K - N))
    rng.shuffle(entries)
    return [int(e) for e in entries]


def first_step_gap_moments(pattern, system, n):
    """Gap mean / second moment by first-step analysis over appearances.

    Y_k is the gap after a success at appearance k: the services strictly
    between appearance k and k+1, then with probability p one failed
    source-n service followed by Y_{k+1}.  Successes are equally frequent
    at every appearance, so the stationary gap averages Y_k uniformly.
    """
    P = [int(e) for e in pattern]
    K = len(P)
    i = n - 1
    pos = [j for j, e in enumerate(P) if e == n]
    a = len(pos)
    h, hv = np.zeros(a), np.zeros(a)
    for k, start in enumerate(pos):
        stop = pos[(k + 1) % a] + (K if k + 1 == a else 0)
        for j in range(start + 1, stop):
            m = P[j % K] - 1
            h[k] += system.s[m]
            hv[k] += system.v[m]
    hq = hv + h * h
    p, s, q = system.p[i], system.s[i], system.q[i]
    # m_k = h_k + p (s + m_{k+1})
    A = np.eye(a)
    for k in range(a):
        A[k, (k + 1) % a] -= p
    m = np.linalg.solve(A, h + p * s)
    # M_k = hq_k + 2 h_k p (s + m_{k+1}) + p (q + 2 s m_{k+1} + M_{k+1})
    mn = np.roll(m, -1)
    rhs = hq + 2 * h * p * (s + mn) + p * (q + 2 * s * mn)
    M = np.linalg.solve(A, rhs)
    return float(m.mean()), float(M.mean())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

"""Counter-based Gaussian draws keyed by ``(seed, stream, counter)``.

Every value is a pure function of its key, so any subset of paths can be
regenerated in any order.  The mixer is the SplitMix64 finalizer; normals
come from Box-Muller on two independent 53-bit uniforms.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _uniform(seeds, stream: int, counter: int) -> np.ndarray:
    s = np.asarray(seeds).astype(np.uint64)
    h = _mix(_mix(_mix(s) ^ np.uint64(stream)) ^ np.uint64(counter))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def standard_normals(seeds, stream: int) -> np.ndarray:
    """One N(0, 1) draw per seed for the given stream id."""
    u1 = _uniform(seeds, stream, 0)
    u2 = _uniform(seeds, stream, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# stream ids: 0 for the initial state, k + 1 for the stage-k disturbance
def initial_state_stream() -> int:
    return 0


def noise_stream(k: int) -> int:
    return k + 1

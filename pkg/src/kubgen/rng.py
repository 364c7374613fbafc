"""Deterministic random numbers (splitmix64).

Every stochastic choice in the package flows through Rng so that a scene
is a pure function of its seed: same seed, same platform-independent
stream, regardless of numpy version or process count.  The generator is
splitmix64: 64-bit state advanced by the golden-gamma constant, output
mixed by two xor-multiply rounds.

Goals: reproducibility across runs and machines, cheap seed derivation
for per-scene streams.  Non-goals: cryptography, long-period statistics.
"""

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TO_DOUBLE = 2.0 ** -53


def _mix(z):
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_scene_seed(master_seed, index):
    """Per-scene seed: one splitmix64 output from state master_seed XOR index*gamma.

    Decorrelates scene streams so scene i is identical no matter which job
    rendered it or how many scenes precede it.
    """
    state = ((master_seed & MASK64) ^ ((index * GOLDEN_GAMMA) & MASK64)) & MASK64
    state = (state + GOLDEN_GAMMA) & MASK64
    return _mix(state)


class Rng:
    """splitmix64 stream with a 64-bit state.

    Only next_u64 and uniform are primitive; integer draws are
    floor(uniform * n) so each draw consumes exactly one output.
    """

    def __init__(self, seed):
        self.state = seed & MASK64

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix(self.state)

    def uniform(self, lo=0.0, hi=1.0):
        """Uniform double in [lo, hi): (out >> 11) * 2**-53 scaled."""
        u = (self.next_u64() >> 11) * _TO_DOUBLE
        return lo + (hi - lo) * u

    def randint(self, n):
        """Integer in [0, n), one draw."""
        return int(self.uniform() * n)

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def spawn(self, tag):
        """Independent child stream keyed by an integer tag."""
        return Rng(derive_scene_seed(self.state, tag))

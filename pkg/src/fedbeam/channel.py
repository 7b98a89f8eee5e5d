"""Beam codebooks and beam-pair metrics for an analog-beamforming OFDM link.

A transmit/receive beam pair (i, j) scores the received power summed over
subcarriers,

    y[i, j] = sum_n |w_j^H H_n f_i|^2,

and the optimal pair is the argmax of that matrix. Beam-pair labels are
flattened transmit-major: label = i * C_r + j, matching row-major storage
of the power matrix. All tie-breaks go to the lowest flat index.
"""

from dataclasses import dataclass

import numpy as np

from .errors import MetricUnavailableError

__all__ = [
    "BeamCodebook",
    "ChannelSet",
    "REFERENCE_LINK",
    "dft_codebook",
    "beam_powers",
    "beam_powers_naive",
    "optimal_beam",
    "topk",
    "topk_accuracy",
    "throughput_ratio",
]

# Full-size link dimensions assumed by the 256-pair reference design. The
# desk-scale synthetic benchmark uses the smaller SynthConfig defaults
# (16 x 4 pairs); both are plain configuration, nothing depends on these
# numbers structurally.
REFERENCE_LINK = {"c_t": 32, "c_r": 8, "n_t": 32, "n_r": 8, "n_c": 64}


def dft_codebook(antennas, beams):
    """DFT beams for a uniform linear array.

    Beam i has element m equal to (1/sqrt(antennas)) * exp(-2j*pi*m*i/beams),
    so every beam has unit norm. Returns an array of shape (beams, antennas).
    """
    if antennas < 1 or beams < 1:
        raise ValueError(f"antennas and beams must be >= 1, got {antennas}, {beams}")
    m = np.arange(antennas)
    i = np.arange(beams)
    phase = -2j * np.pi * np.outer(i, m) / beams
    return np.exp(phase) / np.sqrt(antennas)


@dataclass(frozen=True)
class BeamCodebook:
    """Fixed transmit/receive beam sets: tx is (C_t, N_t), rx is (C_r, N_r)."""

    tx: np.ndarray
    rx: np.ndarray

    def __post_init__(self):
        for name, vecs in (("tx", self.tx), ("rx", self.rx)):
            if vecs.ndim != 2 or vecs.shape[0] < 1:
                raise ValueError(f"{name} codebook must be a nonempty 2-D array")
            norms = np.linalg.norm(vecs, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                worst = int(np.argmax(np.abs(norms - 1.0)))
                raise ValueError(
                    f"{name} beam {worst} has norm {norms[worst]:.8f}, expected 1"
                )

    @classmethod
    def dft(cls, n_t, n_r, c_t, c_r):
        return cls(tx=dft_codebook(n_t, c_t), rx=dft_codebook(n_r, c_r))

    @property
    def n_pairs(self):
        return self.tx.shape[0] * self.rx.shape[0]


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier channel matrices, shape (N_c, N_r, N_t)."""

    h: np.ndarray

    def __post_init__(self):
        if self.h.ndim != 3 or min(self.h.shape) < 1:
            raise ValueError(f"channel array must be (N_c, N_r, N_t), got {self.h.shape}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel entries must be finite")


def beam_powers(ch, cb):
    """Per-pair received power summed over subcarriers, shape (C_t, C_r)."""
    n_c, n_r, n_t = ch.h.shape
    if cb.rx.shape[1] != n_r or cb.tx.shape[1] != n_t:
        raise ValueError(
            f"codebook antennas ({cb.rx.shape[1]} rx, {cb.tx.shape[1]} tx) do not "
            f"match channel shape ({n_r} rx, {n_t} tx)"
        )
    # gains[n, i, j] = w_j^H H_n f_i
    gains = np.einsum("ja,nab,ib->nij", cb.rx.conj(), ch.h, cb.tx, optimize=True)
    return np.sum(np.abs(gains) ** 2, axis=0)


def beam_powers_naive(ch, cb):
    """Triple-loop reference for beam_powers; kept independent on purpose."""
    n_c = ch.h.shape[0]
    c_t, c_r = cb.tx.shape[0], cb.rx.shape[0]
    y = np.zeros((c_t, c_r))
    for i in range(c_t):
        for j in range(c_r):
            total = 0.0
            for n in range(n_c):
                g = np.vdot(cb.rx[j], ch.h[n] @ cb.tx[i])
                total += abs(g) ** 2
            y[i, j] = total
    return y


def optimal_beam(y):
    """Flat transmit-major label of the strongest pair; ties to lowest index."""
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("power matrix is empty")
    return int(np.argmax(y))


def topk(scores, k):
    """Indices of the K highest scores, descending, ties to lower index."""
    scores = np.asarray(scores)
    if not 1 <= k <= scores.shape[-1]:
        raise ValueError(f"K must be in [1, {scores.shape[-1]}], got {k}")
    order = np.argsort(-scores, kind="stable")
    return order[:k]


def topk_accuracy(predictions, labels):
    """Fraction of samples whose true label appears in its predicted set."""
    if len(predictions) != len(labels):
        raise ValueError(
            f"got {len(predictions)} prediction sets for {len(labels)} labels"
        )
    if len(labels) == 0:
        raise ValueError("need at least one sample")
    hits = sum(1 for s, b in zip(predictions, labels) if b in np.asarray(s))
    return hits / len(labels)


def throughput_ratio(power_rows, predictions):
    """Achievable-rate fraction of the predicted sets against the optimum.

    Sums log2(1 + y) of the best pair inside each sample's predicted set and
    divides by the same sum for each sample's true optimum. Requires every
    sample to carry its power matrix; raises MetricUnavailableError otherwise.
    """
    if len(power_rows) != len(predictions):
        raise ValueError(
            f"got {len(power_rows)} power rows for {len(predictions)} prediction sets"
        )
    if len(predictions) == 0:
        raise ValueError("need at least one sample")
    num = 0.0
    den = 0.0
    for y, s in zip(power_rows, predictions):
        if y is None:
            raise MetricUnavailableError(
                "throughput ratio needs per-sample beam powers; a sample has none"
            )
        flat = np.asarray(y).reshape(-1)
        s = np.asarray(s)
        if s.size == 0:
            raise ValueError("empty prediction set")
        num += np.log2(1.0 + np.max(flat[s]))
        den += np.log2(1.0 + np.max(flat))
    if den == 0.0:
        # All-zero powers: any predicted set achieves the (zero) optimum.
        return 1.0
    return num / den

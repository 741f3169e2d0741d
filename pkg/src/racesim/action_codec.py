"""Bidirectional mapping between continuous 4D actions and 256-bin tokens.

Uniform binning with midpoint decoding: the round-trip error is at most half
a bin, and decode-then-encode is the identity on every token value.  Bounds
are fitted from dataset statistics with nearest-rank quantiles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Iterable, Sequence

import numpy as np

from .domain import ActionCommand, ValidationError

N_BINS = 256


class InsufficientData(ValueError):
    """Too few samples to fit action bounds."""


@dataclass(frozen=True)
class ActionBounds:
    """Per-dimension [lo, hi) normalization range for (vx, vy, vz, omega)."""

    lo: tuple[float, float, float, float]
    hi: tuple[float, float, float, float]

    DEFAULT: ClassVar["ActionBounds"]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(x) for x in self.lo))
        object.__setattr__(self, "hi", tuple(float(x) for x in self.hi))
        if len(self.lo) != 4 or len(self.hi) != 4:
            raise ValidationError("bounds: lo and hi must have 4 entries each")
        for k in range(4):
            if not (math.isfinite(self.lo[k]) and math.isfinite(self.hi[k])):
                raise ValidationError(f"bounds[{k}]: must be finite")
            if self.hi[k] <= self.lo[k]:
                raise ValidationError(f"bounds[{k}]: hi must be > lo")

    def span(self, k: int) -> float:
        return self.hi[k] - self.lo[k]


# Envelopes the observed per-axis command magnitudes of the harness tasks.
ActionBounds.DEFAULT = ActionBounds(lo=(-2.0, -2.0, -1.0, -1.5), hi=(2.0, 2.0, 1.0, 1.5))


@dataclass(frozen=True)
class ActionTokens:
    """Four discrete tokens, one per action dimension, each in [0, 255]."""

    tokens: tuple[int, int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if len(self.tokens) != 4:
            raise ValidationError("tokens: expected 4 entries")
        for k, t in enumerate(self.tokens):
            if not 0 <= t <= N_BINS - 1:
                raise ValidationError(f"tokens[{k}]: must be in [0, {N_BINS - 1}]")


def encode(a: ActionCommand, b: ActionBounds = ActionBounds.DEFAULT) -> ActionTokens:
    """Quantize an action to per-dimension bin indices.

    token[k] = clamp(floor((a[k] - lo[k]) / (hi[k] - lo[k]) * 256), 0, 255);
    out-of-bounds values clamp to the edge bins.
    """
    vals = a.as_tuple()
    toks = []
    for k in range(4):
        t = math.floor((vals[k] - b.lo[k]) / b.span(k) * N_BINS)
        toks.append(min(N_BINS - 1, max(0, t)))
    return ActionTokens(tuple(toks))


def decode(t: ActionTokens, b: ActionBounds = ActionBounds.DEFAULT) -> ActionCommand:
    """Map tokens back to the midpoint of their bins."""
    vals = [b.lo[k] + (t.tokens[k] + 0.5) * b.span(k) / N_BINS for k in range(4)]
    return ActionCommand(*vals)


def _nearest_rank(sorted_vals: np.ndarray, q: float) -> float:
    n = len(sorted_vals)
    rank = min(n, max(1, math.ceil(q * n)))
    return float(sorted_vals[rank - 1])


def fit_bounds(
    actions: Sequence[ActionCommand] | Iterable[ActionCommand],
    q_lo: float = 0.01,
    q_hi: float = 0.99,
) -> ActionBounds:
    """Fit per-dimension bounds at nearest-rank quantiles ``q_lo``/``q_hi``.

    Degenerate dimensions (all samples equal) are padded symmetrically by
    1e-3 so the bounds stay usable.
    """
    arr = np.asarray([a.as_tuple() for a in actions], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise InsufficientData("need at least 2 actions to fit bounds")
    if not (0.0 <= q_lo < q_hi <= 1.0):
        raise ValueError("quantiles must satisfy 0 <= q_lo < q_hi <= 1")
    lo, hi = [], []
    for k in range(4):
        col = np.sort(arr[:, k])
        a = _nearest_rank(col, q_lo)
        b = _nearest_rank(col, q_hi)
        if b <= a:
            a, b = a - 1e-3, a + 1e-3
        lo.append(a)
        hi.append(b)
    return ActionBounds(tuple(lo), tuple(hi))


def write_stats(path: str | Path, bounds: ActionBounds, q: tuple[float, float] = (0.01, 0.99)) -> None:
    """Persist bounds as the dataset's stats.json."""
    doc = {"lo": list(bounds.lo), "hi": list(bounds.hi), "q": list(q)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_stats(path: str | Path) -> ActionBounds:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return ActionBounds(tuple(doc["lo"]), tuple(doc["hi"]))


def roundtrip_report(bounds: ActionBounds, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Max round-trip error per dimension over random in-bounds actions.

    Also checks that decode-then-encode is the identity on all 256 token
    values per dimension.  Returns a report dict; used by ``codec check``.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(bounds.lo)
    hi = np.asarray(bounds.hi)
    samples = rng.uniform(lo, hi, size=(n_samples, 4))
    max_err = np.zeros(4)
    for row in samples:
        a = ActionCommand(*row)
        back = decode(encode(a, bounds), bounds)
        err = np.abs(np.asarray(back.as_tuple()) - row)
        max_err = np.maximum(max_err, err)
    identity_ok = True
    for tok in range(N_BINS):
        t = ActionTokens((tok, tok, tok, tok))
        if encode(decode(t, bounds), bounds) != t:
            identity_ok = False
            break
    half_bin = (hi - lo) / (2.0 * N_BINS)
    return {
        "max_error": max_err.tolist(),
        "half_bin": half_bin.tolist(),
        "within_half_bin": bool(np.all(max_err <= half_bin)),
        "identity_on_tokens": identity_ok,
        "n_samples": n_samples,
    }

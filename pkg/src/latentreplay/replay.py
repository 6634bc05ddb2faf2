"""Bounded rehearsal memory and its supporting machinery.

The memory holds either raw input patterns ("native") or tap-layer
activation volumes ("latent"). Each training batch contributes
``h = min(capacity // i, |B_i|)`` randomly chosen items; once the memory
is full an equal number of randomly chosen old items makes room, so the
long-run contribution of every batch stays nearly balanced. No class
balancing is enforced.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .rng import SeededRng
from .tensorio import load_tensor, save_tensor


@dataclass
class ReplayItem:
    payload: np.ndarray
    label: int
    origin_batch: int
    pattern: np.ndarray | None = None  # debug back-reference for drift


@dataclass
class SparsifierConfig:
    """L1 attraction of the tap activations toward zero."""

    alpha: float = 0.0
    first_batch_only: bool = True

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")

    def active(self, batch_index: int) -> bool:
        if self.alpha == 0.0:
            return False
        return batch_index == 1 if self.first_batch_only else True


class ReplayMemory:
    """External memory of (payload, label, origin batch) items."""

    def __init__(self, capacity: int, rng: SeededRng, kind: str = "native",
                 tap: str | None = None, store_patterns: bool = False):
        if kind not in ("native", "latent"):
            raise ConfigError(f"kind must be 'native' or 'latent', got {kind!r}")
        if kind == "latent" and tap is None:
            raise ConfigError("latent memory needs the tap layer name")
        if capacity < 0:
            raise ConfigError("capacity must be >= 0")
        self.kind = kind
        self.tap = tap
        self.capacity = int(capacity)
        self.rng = rng
        self.store_patterns = store_patterns
        self.items: list[ReplayItem] = []
        self._last_i = 0

    def __len__(self) -> int:
        return len(self.items)

    def update(self, patterns: np.ndarray, labels, i: int, payload_fn=None):
        """Fold training batch ``i`` into the memory.

        ``payload_fn(indices) -> array`` supplies stored payloads for the
        chosen patterns (latent memories pass the tap-activation extractor);
        by default the patterns themselves are stored. Returns the number
        of items (added, replaced).
        """
        if i < 1 or i <= self._last_i:
            raise StateError(f"batch index must increase strictly, got {i} after {self._last_i}")
        self._last_i = i
        labels = np.asarray(labels)
        if len(labels) == 0:
            warnings.warn("update_memory called with an empty batch; ignored")
            return 0, 0
        h = min(self.capacity // i, len(labels))
        replace_n = 0
        if i > 1 and h > 0:
            replace_n = min(len(self.items), max(0, len(self.items) + h - self.capacity))
        if replace_n:
            drop = set(self.rng.choice(len(self.items), replace_n).tolist())
            self.items = [it for j, it in enumerate(self.items) if j not in drop]
        if h > 0:
            add_idx = np.sort(self.rng.choice(len(labels), h))
            payloads = payload_fn(add_idx) if payload_fn is not None else patterns[add_idx]
            if self.items and payloads.shape[1:] != self.items[0].payload.shape:
                raise ShapeError("payload shape differs from items already stored")
            for j, idx in enumerate(add_idx):
                self.items.append(ReplayItem(
                    payload=np.array(payloads[j], dtype=np.float32),
                    label=int(labels[idx]),
                    origin_batch=i,
                    pattern=np.array(patterns[idx], dtype=np.float32)
                    if self.store_patterns else None,
                ))
        if len(self.items) > self.capacity:
            raise StateError("replay memory exceeded capacity")  # pragma: no cover
        return h, replace_n

    def sample(self, k: int, rng: SeededRng | None = None):
        """k item indices, uniform without replacement (with-replacement
        fallback, signalled by a warning, when k exceeds the memory)."""
        rng = rng or self.rng
        if k > len(self.items):
            warnings.warn("minibatch larger than memory; sampling with replacement")
            return rng.choice(len(self.items), k, replace=True)
        return rng.choice(len(self.items), k)

    def stacked(self, indices) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([self.items[j].payload for j in indices])
        y = np.array([self.items[j].label for j in indices], dtype=np.int64)
        return x, y

    def occupancy_by_origin(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for it in self.items:
            out[it.origin_batch] = out.get(it.origin_batch, 0) + 1
        return out

    def footprint_elements(self) -> int:
        """Stored payload elements (debug pattern refs excluded)."""
        if not self.items:
            return 0
        return len(self.items) * int(np.prod(self.items[0].payload.shape))

    # -- checkpoint ----------------------------------------------------------

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        manifest = {
            "kind": self.kind,
            "tap": self.tap,
            "capacity": self.capacity,
            "count": len(self.items),
            "labels": [it.label for it in self.items],
            "origin_batches": [it.origin_batch for it in self.items],
            "last_batch": self._last_i,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        if self.items:
            save_tensor(os.path.join(directory, "payloads.lrt"),
                        np.stack([it.payload for it in self.items]))

    @staticmethod
    def load(directory, rng: SeededRng) -> "ReplayMemory":
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        rm = ReplayMemory(manifest["capacity"], rng, manifest["kind"], manifest["tap"])
        rm._last_i = manifest["last_batch"]
        if manifest["count"]:
            payloads = load_tensor(os.path.join(directory, "payloads.lrt"))
            if len(payloads) != manifest["count"]:
                raise ShapeError("payload count differs from manifest")
            for arr, label, origin in zip(payloads, manifest["labels"],
                                          manifest["origin_batches"]):
                rm.items.append(ReplayItem(arr, int(label), int(origin)))
        return rm


def compose_minibatch(rm: ReplayMemory, batch_size: int, mb: int,
                      rng: SeededRng | None = None):
    """Split a mini-batch of size ``mb`` between native and replay rows.

    n_native = round(mb * B / (B + |rm|)); the replay rows are drawn
    uniformly without replacement. Returns (n_native, n_replay, indices).
    """
    if mb < 1:
        raise ConfigError("mini-batch size must be >= 1")
    if len(rm) == 0:
        return mb, 0, np.array([], dtype=np.int64)
    n_native = round(mb * batch_size / (batch_size + len(rm)))
    n_replay = mb - n_native
    idx = rm.sample(n_replay, rng) if n_replay else np.array([], dtype=np.int64)
    return n_native, n_replay, idx


def precompute_latents(net, frames, tap: str | None = None) -> list[np.ndarray]:
    """Tap activations for a stream of frames, in arrival order.

    The lower sub-network must be frozen: cached activations would
    otherwise age while the stream is still being acquired.
    """
    if tap is not None and tap != net.tap:
        raise ConfigError(f"requested tap {tap!r}, network taps at {net.tap!r}")
    if not net.frozen_below_tap:
        raise StateError("lower layers must be frozen before pre-caching latents")
    out = []
    for frame in frames:
        batch = frame[None] if frame.ndim == len(net.input_shape) else frame
        out.append(net.tap_activations(batch)[0])
    return out


def l1_activation_penalty(acts: np.ndarray, alpha: float):
    """alpha * sum |a| and its (sub)gradient alpha * sign(a)."""
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    if alpha == 0.0:
        return 0.0, np.zeros_like(acts, dtype=np.float32)
    penalty = float(alpha * np.abs(acts.astype(np.float64)).sum())
    return penalty, (alpha * np.sign(acts)).astype(np.float32)


def sparsity_stats(acts: np.ndarray) -> float:
    """Fraction of strictly non-zero entries."""
    if acts.size == 0:
        return 0.0
    return float(np.count_nonzero(acts) / acts.size)


def aging_drift(rm: ReplayMemory, net, eps: float = 1e-8) -> float:
    """Mean relative L2 distance between stored latents and the
    activations their source patterns produce through the current net."""
    if rm.kind != "latent":
        raise StateError("aging drift is defined for latent memories")
    if not rm.items:
        return 0.0
    if any(it.pattern is None for it in rm.items):
        raise StateError("drift needs debug pattern back-references "
                         "(store_patterns=True)")
    patterns = np.stack([it.pattern for it in rm.items])
    fresh = net.tap_activations(patterns)
    total = 0.0
    for it, now in zip(rm.items, fresh):
        num = float(np.linalg.norm((it.payload - now).astype(np.float64).ravel()))
        den = float(np.linalg.norm(now.astype(np.float64).ravel()))
        total += num / (den + eps)
    return total / len(rm.items)

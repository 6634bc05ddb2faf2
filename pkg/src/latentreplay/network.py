"""Sequential network with a latent tap point.

The tap layer splits the net into a lower part (input .. tap, inclusive)
and an upper part (everything strictly after the tap). Latent replay
concatenates stored tap activations with the native sub-batch at that
boundary; backward stops at the boundary for replay rows, and skips the
lower part entirely when it is frozen.
"""

from __future__ import annotations

import copy
import json
import os

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .layers import Brn, Conv, Dense, DwConv, Flatten, GlobalAvgPool, Layer, Relu, EVAL, TRAIN
from .rng import SeededRng

Gradients = dict  # layer name -> {param name -> gradient array}


class Network:
    def __init__(self, layers: list[Layer], input_shape: tuple, tap: str,
                 head_name: str | None = None):
        names = [l.name for l in layers]
        if len(set(names)) != len(names):
            raise ConfigError("layer names must be unique")
        self.layers = layers
        self.input_shape = tuple(input_shape)
        if tap not in names:
            raise ConfigError(f"tap layer {tap!r} not in network")
        self.tap = tap
        self.head_name = head_name or names[-1]
        if self.head_name not in names:
            raise ConfigError(f"head layer {self.head_name!r} not in network")
        self.lr_mult = {n: 1.0 for n in names}
        self.frozen_below_tap = False
        self._shapes = self._propagate_shapes()
        self._ctx = None

    # -- shape bookkeeping -------------------------------------------------

    def _propagate_shapes(self):
        shapes = {}
        cur = self.input_shape
        for layer in self.layers:
            cur = layer.out_shape(cur)
            shapes[layer.name] = cur
        return shapes

    @property
    def tap_index(self) -> int:
        return next(i for i, l in enumerate(self.layers) if l.name == self.tap)

    @property
    def tap_shape(self) -> tuple:
        return self._shapes[self.tap]

    @property
    def class_count(self) -> int:
        return self._shapes[self.layers[-1].name][-1]

    def layer(self, name: str) -> Layer:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    def out_shape_of(self, name: str) -> tuple:
        return self._shapes[name]

    # -- freezing ----------------------------------------------------------

    def set_frozen_below_tap(self, flag: bool, freeze_moments: bool = False) -> None:
        """Freeze (or release) every layer at or below the tap.

        Freezing zeroes their learning-rate multipliers; ``freeze_moments``
        additionally pins the BRN moving moments in the lower part.
        """
        self.frozen_below_tap = flag
        ti = self.tap_index
        for i, layer in enumerate(self.layers[:ti + 1]):
            if flag:
                self.lr_mult[layer.name] = 0.0
            if isinstance(layer, Brn):
                layer.moments_frozen = flag and freeze_moments

    # -- forward variants ----------------------------------------------------

    def _run(self, layers, x, mode, caches=None):
        for layer in layers:
            x, cache = layer.forward(x, mode)
            if caches is not None:
                caches.append((layer, cache))
        return x

    def forward(self, x: np.ndarray, mode: str = TRAIN):
        """Full forward pass; returns (logits, copy of tap activations)."""
        self._check_input(x)
        ti = self.tap_index
        record = mode == TRAIN
        below = [] if record else None
        above = [] if record else None
        out = self._run(self.layers[:ti + 1], x, mode, below)
        tapped = out.copy()
        logits = self._run(self.layers[ti + 1:], out, mode, above)
        if record:
            self._ctx = {"below": below, "above": above, "n_native": len(x),
                         "n_rows": len(x)}
        return logits, tapped

    def forward_from(self, latent: np.ndarray, mode: str = TRAIN) -> np.ndarray:
        """Run only the layers strictly above the tap."""
        self._check_latent(latent)
        record = mode == TRAIN
        above = [] if record else None
        logits = self._run(self.layers[self.tap_index + 1:], latent, mode, above)
        if record:
            self._ctx = {"below": [], "above": above, "n_native": 0,
                         "n_rows": len(latent)}
        return logits

    def forward_concat(self, x_native: np.ndarray, latent_replay: np.ndarray,
                       mode: str = TRAIN):
        """Native rows through the whole net; replay rows injected at the tap.

        Returns (logits over the joint batch, copy of native tap
        activations). Native rows come first in the joint batch.
        """
        n1, n2 = len(x_native), len(latent_replay)
        if n1 == 0 and n2 == 0:
            raise ShapeError("empty batch: no native and no replay rows")
        if n2:
            self._check_latent(latent_replay)
        if n1 == 0:
            logits = self.forward_from(latent_replay, mode)
            tapped = np.zeros((0,) + self.tap_shape, dtype=np.float32)
            return logits, tapped
        self._check_input(x_native)
        ti = self.tap_index
        record = mode == TRAIN
        below = [] if record else None
        above = [] if record else None
        out = self._run(self.layers[:ti + 1], x_native, mode, below)
        tapped = out.copy()
        joint = np.concatenate([out, latent_replay], axis=0) if n2 else out
        logits = self._run(self.layers[ti + 1:], joint, mode, above)
        if record:
            self._ctx = {"below": below, "above": above, "n_native": n1,
                         "n_rows": n1 + n2}
        return logits, tapped

    def tap_activations(self, x: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Eval-mode activations at the tap (no caches, no moment updates)."""
        outs = []
        for lo in range(0, len(x), chunk):
            out = self._run(self.layers[:self.tap_index + 1], x[lo:lo + chunk], EVAL)
            outs.append(out)
        return np.concatenate(outs, axis=0)

    def predict(self, x: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Eval-mode logits, computed in chunks."""
        outs = []
        for lo in range(0, len(x), chunk):
            cur = x[lo:lo + chunk]
            for layer in self.layers:
                cur, _ = layer.forward(cur, EVAL)
            outs.append(cur)
        return np.concatenate(outs, axis=0)

    def _check_input(self, x):
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} != {self.input_shape}")

    def _check_latent(self, latent):
        if latent.shape[1:] != self.tap_shape:
            raise ShapeError(f"latent shape {latent.shape[1:]} != tap {self.tap_shape}")

    # -- backward / update ---------------------------------------------------

    def backward(self, dlogits: np.ndarray, n_native: int | None = None,
                 tap_grad_extra: np.ndarray | None = None) -> Gradients:
        """Backprop from dlogits through the last train-mode forward.

        Replay rows stop at the tap boundary: only the first ``n_native``
        rows of the tap gradient continue into the lower part, and the
        lower part is skipped entirely when frozen. ``tap_grad_extra`` is
        added to the native tap gradient (auxiliary losses on the tap
        activations, e.g. the L1 sparsifier).
        """
        if self._ctx is None:
            raise StateError("backward called without a preceding train-mode forward")
        ctx = self._ctx
        if n_native is None:
            n_native = ctx["n_native"]
        if len(dlogits) != ctx["n_rows"]:
            raise ShapeError(f"dlogits has {len(dlogits)} rows, forward had {ctx['n_rows']}")
        grads: Gradients = {}
        d = dlogits
        for layer, cache in reversed(ctx["above"]):
            d, g = layer.backward(d, cache)
            if g:
                grads[layer.name] = g
        d = d[:n_native]
        if tap_grad_extra is not None:
            d = d + tap_grad_extra[:n_native]
        if self.frozen_below_tap or n_native == 0 or not ctx["below"]:
            return grads
        for layer, cache in reversed(ctx["below"]):
            d, g = layer.backward(d, cache)
            if g:
                grads[layer.name] = g
        return grads

    def sgd_step(self, grads: Gradients, base_lr: float) -> None:
        """theta <- theta - base_lr * lr_mult(layer) * g; mult 0 skips."""
        for layer in self.layers:
            g = grads.get(layer.name)
            if not g:
                continue
            mult = self.lr_mult[layer.name]
            if mult == 0.0:
                continue
            lr = base_lr * mult
            for key, grad in g.items():
                layer.params[key] -= (lr * grad.astype(np.float64)).astype(np.float32)

    def trainable_params(self, below_head_only: bool = False):
        """(layer name, param name, array) triples with lr_mult > 0 potential."""
        out = []
        for layer in self.layers:
            if below_head_only and layer.name == self.head_name:
                continue
            for key, arr in layer.params.items():
                out.append((layer.name, key, arr))
        return out

    def clone(self) -> "Network":
        return copy.deepcopy(self)

    # -- serialization -------------------------------------------------------

    def to_spec(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "tap": self.tap,
            "head": self.head_name,
            "layers": [l.spec() for l in self.layers],
        }

    @staticmethod
    def from_spec(doc: dict, seed: int = 0) -> "Network":
        rng = SeededRng(seed).spawn(0xA11C)
        input_shape = tuple(doc["input_shape"])
        cur = input_shape
        layers: list[Layer] = []
        for item in doc["layers"]:
            kind, name = item["kind"], item["name"]
            if kind == "dense":
                layers.append(Dense(name, cur[0], item["units"], rng=rng))
            elif kind == "conv":
                layers.append(Conv(name, cur[0], item["out_channels"], item["kernel"],
                                   item.get("stride", 1), item.get("pad", 0),
                                   item.get("groups", 1), rng=rng))
            elif kind == "dwconv":
                layers.append(DwConv(name, cur[0], item["kernel"],
                                     item.get("stride", 1), item.get("pad", 0), rng=rng))
            elif kind == "relu":
                layers.append(Relu(name))
            elif kind == "brn":
                layers.append(Brn(name, cur[0], item.get("r_max", 1.25),
                                  item.get("d_max", 0.5),
                                  item.get("avg_rate", 0.99995)))
            elif kind == "avgpool":
                layers.append(GlobalAvgPool(name))
            elif kind == "flatten":
                layers.append(Flatten(name))
            else:
                raise ConfigError(f"unknown layer kind {kind!r}")
            cur = layers[-1].out_shape(cur)
        return Network(layers, input_shape, doc["tap"], doc.get("head"))

    def save_spec(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_spec(), fh, indent=2)

    def save_checkpoint(self, directory) -> None:
        from .tensorio import save_tensor
        os.makedirs(directory, exist_ok=True)
        for layer in self.layers:
            for key, arr in layer.state_tensors().items():
                fname = f"{layer.name.replace('/', '__')}.{key}.lrt"
                save_tensor(os.path.join(directory, fname), arr)

    def load_checkpoint(self, directory) -> None:
        from .tensorio import load_tensor
        for layer in self.layers:
            tensors = {}
            for key in layer.state_tensors():
                fname = f"{layer.name.replace('/', '__')}.{key}.lrt"
                tensors[key] = load_tensor(os.path.join(directory, fname))
            layer.load_state(tensors)

"""Continual-learning strategies and the per-batch training orchestrator.

Strategies: naive fine-tuning, CWR* (double-memory head), AR1* (CWR*
head plus Synaptic-Intelligence protection of the lower weights),
AR1*free (AR1* with the protection switched off), and the DSLDA
streaming baseline. Any SGD strategy can be combined with a native or
latent rehearsal memory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .kernels import softmax_xent
from .network import Network
from .replay import (ReplayMemory, SparsifierConfig, compose_minibatch,
                     l1_activation_penalty)
from .rng import SeededRng

SGD_STRATEGIES = ("naive", "cwr*", "ar1*", "ar1*free")
HEAD_MANAGED = ("cwr*", "ar1*", "ar1*free")
STRATEGIES = SGD_STRATEGIES + ("dslda",)


class CwrHead:
    """Consolidated ('cw') copy of the output head, fused with the live
    temporary head ('tw') after every batch. Rows of classes never seen
    stay exactly zero."""

    def __init__(self, in_features: int, classes: int):
        self.cw_w = np.zeros((in_features, classes), dtype=np.float32)
        self.cw_b = np.zeros(classes, dtype=np.float32)
        self.past = np.zeros(classes, dtype=np.float64)

    def preinit(self, head, classes_in_batch) -> None:
        """tw_j <- cw_j for batch classes, zero elsewhere."""
        classes = sorted(set(int(c) for c in classes_in_batch))
        if not classes:
            raise ConfigError("empty class set for CWR pre-init")
        w, b = head.params["w"], head.params["b"]
        w[...] = 0.0
        b[...] = 0.0
        for j in classes:
            w[:, j] = self.cw_w[:, j]
            b[j] = self.cw_b[j]

    def consolidate(self, head, classes_in_batch, cur_counts: dict) -> None:
        """Fuse tw into cw with sqrt(past/cur) weighting, mean-shifted
        over the batch classes; rows of absent classes are untouched."""
        classes = sorted(set(int(c) for c in classes_in_batch))
        for j in classes:
            if cur_counts.get(j, 0) <= 0:
                raise ConfigError(f"class {j} claimed in batch but has zero patterns")
        tw_w, tw_b = head.params["w"], head.params["b"]
        mean_w = tw_w[:, classes].astype(np.float64).mean(axis=1)
        mean_b = float(tw_b[classes].astype(np.float64).mean())
        for j in classes:
            wpast = np.sqrt(self.past[j] / cur_counts[j])
            self.cw_w[:, j] = ((self.cw_w[:, j] * wpast
                                + (tw_w[:, j] - mean_w)) / (wpast + 1.0)).astype(np.float32)
            self.cw_b[j] = np.float32((self.cw_b[j] * wpast + (tw_b[j] - mean_b))
                                      / (wpast + 1.0))
            self.past[j] += cur_counts[j]

    def install(self, head) -> None:
        """Copy the consolidated head into the live layer (for evaluation)."""
        head.params["w"][...] = self.cw_w
        head.params["b"][...] = self.cw_b


class SiState:
    """Synaptic-Intelligence importance bookkeeping for the below-head
    trainable parameters (BRN gamma/beta included)."""

    def __init__(self, net: Network, lam: float = 1.0, xi: float = 1e-7,
                 w1: float = 0.5, wi: float = 0.5, max_f: float = 0.001):
        if xi <= 0:
            raise ConfigError("SI damping xi must be > 0")
        self.lam, self.xi = float(lam), float(xi)
        self.w1, self.wi, self.max_f = float(w1), float(wi), float(max_f)
        self.keys = [(ln, pn) for ln, pn, _ in net.trainable_params(below_head_only=True)]
        self.theta_ref = self._snapshot(net)
        self.omega = {k: np.zeros_like(v) for k, v in self.theta_ref.items()}
        self.importance = {k: np.zeros_like(v) for k, v in self.theta_ref.items()}

    def _snapshot(self, net: Network) -> dict:
        return {(ln, pn): net.layer(ln).params[pn].astype(np.float64)
                for ln, pn in self.keys}

    def accumulate(self, grads: dict, delta: dict) -> None:
        """omega += -g * delta_theta (positive when the step reduced loss)."""
        for key in self.keys:
            ln, pn = key
            if ln in grads and pn in grads[ln] and key in delta:
                d = delta[key]
                if d.shape != self.omega[key].shape:
                    raise ShapeError(f"delta shape mismatch for {key}")
                self.omega[key] += -grads[ln][pn].astype(np.float64) * d

    def consolidate(self, net: Network, is_first_batch: bool) -> None:
        w = self.w1 if is_first_batch else self.wi
        now = self._snapshot(net)
        for key in self.keys:
            dsq = (now[key] - self.theta_ref[key]) ** 2
            contrib = w * np.maximum(self.omega[key], 0.0) / (dsq + self.xi)
            self.importance[key] = np.clip(self.importance[key] + contrib, 0.0, self.max_f)
            self.omega[key][...] = 0.0
        self.theta_ref = now

    def penalty(self, net: Network):
        """(loss, gradient dict) of lambda * sum F (theta - theta_ref)^2."""
        loss = 0.0
        grads: dict = {}
        if self.lam == 0.0:
            return 0.0, grads
        for ln, pn in self.keys:
            theta = net.layer(ln).params[pn].astype(np.float64)
            diff = theta - self.theta_ref[(ln, pn)]
            f = self.importance[(ln, pn)]
            loss += float(self.lam * (f * diff * diff).sum())
            grads.setdefault(ln, {})[pn] = (2.0 * self.lam * f * diff).astype(np.float32)
        return loss, grads


class DsldaState:
    """Streaming LDA: per-class running means and a shared plastic
    covariance accumulated with the per-class Welford recurrence."""

    def __init__(self, dim: int, classes: int, shrink: float = 1e-4):
        self.dim, self.classes = int(dim), int(classes)
        self.shrink = float(shrink)
        self.mu = np.zeros((classes, dim), dtype=np.float64)
        self.n_c = np.zeros(classes, dtype=np.float64)
        self.scatter = np.zeros((dim, dim), dtype=np.float64)
        self.count = 0

    def update(self, feature: np.ndarray, label: int) -> None:
        f = np.asarray(feature, dtype=np.float64).ravel()
        if f.shape != (self.dim,):
            raise ShapeError(f"feature dim {f.shape} != ({self.dim},)")
        j = int(label)
        mu_pre = self.mu[j].copy()
        self.n_c[j] += 1
        self.mu[j] += (f - mu_pre) / self.n_c[j]
        self.scatter += np.outer(f - mu_pre, f - self.mu[j])
        self.count += 1

    def sigma(self) -> np.ndarray:
        return self.scatter / max(self.count, 1)

    def _discriminants(self):
        if self.count == 0:
            raise StateError("no samples observed yet")
        s = self.shrink
        lam = np.linalg.inv((1.0 - s) * self.sigma() + s * np.eye(self.dim))
        w = self.mu @ lam.T                       # per-class Lambda mu
        bias = -0.5 * (w * self.mu).sum(axis=1)   # -1/2 mu . Lambda mu
        return w, bias

    def predict(self, feature: np.ndarray) -> int:
        return int(self.predict_batch(np.asarray(feature, dtype=np.float64)[None])[0])

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        w, bias = self._discriminants()
        feats = np.asarray(features, dtype=np.float64).reshape(len(features), -1)
        scores = feats @ w.T + bias
        scores[:, self.n_c == 0] = -np.inf  # argmax ties resolve to lowest id
        return scores.argmax(axis=1)


@dataclass
class StrategyConfig:
    strategy: str = "naive"
    replay_kind: str | None = None      # None | "native" | "latent"
    tap: str | None = None              # latent tap; must match the network's
    rm_capacity: int = 0
    epochs: int = 4
    mb: int = 32
    iterations: int | None = None       # per epoch; default covers the batch
    lr_first: float = 0.001
    lr_head: float = 0.003
    lr_other: float = 0.0003
    si_lambda: float = 1.0
    si_xi: float = 1e-7
    si_w1: float = 0.5
    si_wi: float = 0.5
    si_max_f: float = 0.001
    dslda_shrink: float = 1e-4
    sparsifier: SparsifierConfig = field(default_factory=SparsifierConfig)
    freeze_below_tap_moments: bool = False
    store_patterns: bool = False        # keep debug refs for drift reporting

    def validate(self, net: Network) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.replay_kind not in (None, "native", "latent"):
            raise ConfigError(f"unknown replay kind {self.replay_kind!r}")
        if self.strategy == "dslda" and self.replay_kind is not None:
            raise ConfigError("dslda streams features; it takes no replay memory")
        if self.replay_kind == "latent":
            tap = self.tap or net.tap
            if tap != net.tap:
                raise ConfigError(f"latent replay tap {tap!r} does not match "
                                  f"network tap {net.tap!r}")
        if self.strategy == "cwr*":
            above = net.layers[net.tap_index + 1:]
            parameterized = [l.name for l in above if l.params]
            if parameterized != [net.head_name]:
                raise ConfigError("cwr* trains the head only: the tap must sit "
                                  "directly below the output layer "
                                  f"(found {parameterized} above it)")
        if self.epochs < 1 or self.mb < 1:
            raise ConfigError("epochs and mb must be >= 1")
        if self.rm_capacity < 0:
            raise ConfigError("rm_capacity must be >= 0")


@dataclass
class BatchReport:
    batch_index: int
    steps: int
    mean_loss: float
    loss_trace: list
    train_ms: float
    rm_added: int = 0
    rm_replaced: int = 0


class ContinualTrainer:
    """Owns the network, the rehearsal memory and all strategy state for
    one continual run; ``train_batch`` consumes the stream batch by batch."""

    def __init__(self, net: Network, cfg: StrategyConfig, seed: int = 0):
        cfg.validate(net)
        self.net = net
        self.cfg = cfg
        self.rng = SeededRng(seed).spawn(0x5A)
        self.batch_count = 0
        self.seen: set[int] = set()
        self.rm: ReplayMemory | None = None
        if cfg.replay_kind is not None:
            self.rm = ReplayMemory(cfg.rm_capacity, SeededRng(seed).spawn(0x2E),
                                   kind=cfg.replay_kind, tap=cfg.tap or net.tap,
                                   store_patterns=cfg.store_patterns)
        head = net.layer(net.head_name)
        self.cwr = None
        if cfg.strategy in HEAD_MANAGED:
            self.cwr = CwrHead(head.in_features, head.units)
        self.si = None
        if cfg.strategy == "ar1*":
            self.si = SiState(net, cfg.si_lambda, cfg.si_xi, cfg.si_w1,
                              cfg.si_wi, cfg.si_max_f)
        self.dslda = None
        if cfg.strategy == "dslda":
            self.dslda = DsldaState(int(np.prod(net.tap_shape)), net.class_count,
                                    cfg.dslda_shrink)

    # -- phases ----------------------------------------------------------

    def _configure_batch(self, i: int) -> float:
        net, cfg = self.net, self.cfg
        if i == 1:
            for name in net.lr_mult:
                net.lr_mult[name] = 1.0
            return cfg.lr_first
        if cfg.replay_kind == "latent" or cfg.strategy == "cwr*":
            net.set_frozen_below_tap(True, freeze_moments=cfg.freeze_below_tap_moments)
        for layer in net.layers[net.tap_index + 1:] if net.frozen_below_tap else net.layers:
            net.lr_mult[layer.name] = 1.0
        net.lr_mult[net.head_name] = cfg.lr_head / cfg.lr_other
        return cfg.lr_other

    def _mask_head_grads(self, grads: dict, classes) -> None:
        g = grads.get(self.net.head_name)
        if not g:
            return
        absent = np.ones(self.net.class_count, dtype=bool)
        absent[list(classes)] = False
        g["w"][:, absent] = 0.0
        g["b"][absent] = 0.0

    def _train_batch_dslda(self, x, y, i):
        t0 = time.perf_counter()
        feats = self.net.tap_activations(x)
        for f, label in zip(feats, y):
            self.dslda.update(f, int(label))
        ms = (time.perf_counter() - t0) * 1000.0
        return BatchReport(i, steps=0, mean_loss=float("nan"), loss_trace=[],
                           train_ms=ms)

    def train_batch(self, x: np.ndarray, y: np.ndarray) -> BatchReport:
        i = self.batch_count + 1
        y = np.asarray(y, dtype=np.int64)
        if len(x) == 0:
            raise ConfigError("empty training batch")
        classes = sorted(set(int(c) for c in y))
        self.seen.update(classes)
        self.batch_count = i
        if self.dslda is not None:
            return self._train_batch_dslda(x, y, i)

        net, cfg = self.net, self.cfg
        t0 = time.perf_counter()
        base_lr = self._configure_batch(i)
        # the batch trained on is B_i u RM, so the double-memory head manages
        # the classes of the joint pool, not just the native session's
        head_classes = set(classes)
        cur_counts = {j: int((y == j).sum()) for j in classes}
        if self.rm is not None:
            for item in self.rm.items:
                head_classes.add(item.label)
                cur_counts[item.label] = cur_counts.get(item.label, 0) + 1
        head_classes = sorted(head_classes)
        if self.cwr is not None:
            self.cwr.preinit(net.layer(net.head_name), head_classes)

        B = len(x)
        if self.rm is not None and len(self.rm) > 0:
            n_nat, n_rep, _ = compose_minibatch(self.rm, B, cfg.mb, self.rng)
        else:
            n_nat, n_rep = min(cfg.mb, B), 0
        n_nat = max(n_nat, 1)
        iterations = cfg.iterations or -(-B // n_nat)
        sparsify = cfg.sparsifier.active(i)

        trace = []
        for _ in range(cfg.epochs):
            perm = self.rng.permutation(B)
            for it in range(iterations):
                nat_idx = perm[(it * n_nat + np.arange(n_nat)) % B]
                x_nat, y_nat = x[nat_idx], y[nat_idx]
                if n_rep:
                    rep_idx = self.rm.sample(n_rep, self.rng)
                    pay, y_rep = self.rm.stacked(rep_idx)
                    y_joint = np.concatenate([y_nat, y_rep])
                    if self.rm.kind == "latent":
                        logits, tapped = net.forward_concat(x_nat, pay)
                        n_native_rows = n_nat
                    else:
                        logits, tapped = net.forward(np.concatenate([x_nat, pay]))
                        n_native_rows = n_nat + n_rep
                else:
                    logits, tapped = net.forward(x_nat)
                    y_joint, n_native_rows = y_nat, n_nat
                loss, dlogits = softmax_xent(logits, y_joint)
                tap_extra = None
                if sparsify:
                    pen, dacts = l1_activation_penalty(tapped, cfg.sparsifier.alpha)
                    loss += pen
                    tap_extra = dacts
                grads = net.backward(dlogits, n_native_rows, tap_grad_extra=tap_extra)
                if self.cwr is not None:
                    self._mask_head_grads(grads, head_classes)
                if self.si is not None:
                    si_loss, si_grads = self.si.penalty(net)
                    loss += si_loss
                    for ln, pg in si_grads.items():
                        if ln in grads:
                            for pn, g in pg.items():
                                grads[ln][pn] = grads[ln][pn] + g
                    before = self.si._snapshot(net)
                net.sgd_step(grads, base_lr)
                if self.si is not None:
                    now = self.si._snapshot(net)
                    delta = {k: now[k] - before[k] for k in now}
                    self.si.accumulate(grads, delta)
                trace.append(loss)

        if self.si is not None:
            self.si.consolidate(net, is_first_batch=(i == 1))
        if self.cwr is not None:
            self.cwr.consolidate(net.layer(net.head_name), head_classes, cur_counts)
            self.cwr.install(net.layer(net.head_name))

        added = replaced = 0
        if self.rm is not None and self.rm.capacity > 0:
            payload_fn = None
            if self.rm.kind == "latent":
                payload_fn = lambda idxs: net.tap_activations(x[idxs])
            added, replaced = self.rm.update(x, y, i, payload_fn=payload_fn)

        ms = (time.perf_counter() - t0) * 1000.0
        mean_loss = float(np.mean(trace)) if trace else float("nan")
        return BatchReport(i, steps=len(trace), mean_loss=mean_loss,
                           loss_trace=trace, train_ms=ms,
                           rm_added=added, rm_replaced=replaced)

    # -- prediction --------------------------------------------------------

    def predict_labels(self, x: np.ndarray, seen_only: bool = False) -> np.ndarray:
        """Top-1 labels; ``seen_only`` drops classes never trained on from
        the scoring (default scores all classes)."""
        if self.dslda is not None:
            feats = self.net.tap_activations(x).reshape(len(x), -1)
            return self.dslda.predict_batch(feats)
        logits = self.net.predict(x)
        if seen_only and self.seen:
            mask = np.full(logits.shape[1], -np.inf, dtype=np.float32)
            mask[sorted(self.seen)] = 0.0
            logits = logits + mask
        return logits.argmax(axis=1)

    def accuracy(self, x: np.ndarray, y: np.ndarray, seen_only: bool = False) -> float:
        return float((self.predict_labels(x, seen_only) == np.asarray(y)).mean())

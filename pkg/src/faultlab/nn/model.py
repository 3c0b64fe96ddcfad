"""The fault classifier: two conv blocks, GAP, dropout, and a linear head.

Input is an 8-channel standardized frame (channels-first); output is one
logit per fault class. The forward/backward passes run on the rows layout
internally; public entry points accept (C, T) or (N, C, T) arrays.
"""

from __future__ import annotations

import numpy as np

from ..framing import ChannelStats
from .layers import BatchNorm1d, Conv1d, Dropout, GlobalAvgPool, Linear, softmax


class FaultCNN1D:
    """Block1(conv-BN-ReLU) -> Block2(conv-BN-ReLU) -> GAP -> dropout -> linear.

    The ReLU of each block is fused into its batch-norm kernel (same
    math, one fewer pass per block).
    """

    def __init__(self, seed=0, dtype=np.float32, in_channels=8,
                 conv1_channels=32, conv1_kernel=7,
                 conv2_channels=16, conv2_kernel=5,
                 n_classes=5, p_drop=0.25):
        rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.conv1 = Conv1d(in_channels, conv1_channels, conv1_kernel, rng, dtype)
        self.bn1 = BatchNorm1d(conv1_channels, dtype=dtype)
        self.conv2 = Conv1d(conv1_channels, conv2_channels, conv2_kernel, rng, dtype)
        self.bn2 = BatchNorm1d(conv2_channels, dtype=dtype)
        self.gap = GlobalAvgPool()
        self.dropout = Dropout(p_drop, rng)
        self.fc = Linear(conv2_channels, n_classes, rng, dtype)
        self.stats: ChannelStats | None = None
        self.training = False
        self._rows_shape = None

    # -- mode ---------------------------------------------------------------

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    # -- forward / backward ---------------------------------------------------

    def forward_rows(self, x_rows, batch, frame_len, train, prefilled=False):
        """Logits (batch, n_classes) from rows-layout input.

        With ``prefilled=True`` the caller has already written the input
        into ``conv1.input_interior(batch, frame_len)``.
        """
        self._rows_shape = (batch, frame_len)
        a1 = self.conv1.forward(x_rows, batch, frame_len, prefilled=prefilled)
        h1 = self.bn1.forward(a1, train, fuse_relu=True,
                              out=self.conv2.input_interior(batch, frame_len, a1.dtype))
        a2 = self.conv2.forward(None, batch, frame_len, prefilled=True)
        h2 = self.bn2.forward(a2, train, fuse_relu=True)
        z = self.gap.forward(h2, batch, frame_len)
        z = self.dropout.forward(z, train)
        return self.fc.forward(z)

    def forward(self, x, train=None):
        """Logits for one frame (C, T) or a batch (N, C, T)."""
        train = self.training if train is None else train
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        batch, channels, frame_len = x.shape
        if channels != self.in_channels:
            raise ValueError(f"expected {self.in_channels} channels, got {channels}")
        rows = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(-1, channels)
        logits = self.forward_rows(rows, batch, frame_len, train)
        return logits[0] if single else logits

    def backward(self, dlogits):
        """Backpropagate d(loss)/d(logits); leaves grads on every layer."""
        d = self.fc.backward(dlogits)
        d = self.dropout.backward(d)
        d = self.gap.backward(d)
        batch, frame_len = self._rows_shape
        self.bn2.backward(d, out=self.conv2.grad_interior(batch, frame_len, d.dtype))
        d = self.conv2.backward(None, need_input_grad=True, prefilled=True)
        d = self.bn1.backward(d)
        self.conv1.backward(d, need_input_grad=False)

    def predict_proba(self, x, train=False):
        return softmax(self.forward(x, train=train), axis=-1)

    # -- parameter access -----------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Live learnable arrays, keyed by layer.name."""
        return {
            "conv1.w": self.conv1.weight, "conv1.b": self.conv1.bias,
            "bn1.gamma": self.bn1.gamma, "bn1.beta": self.bn1.beta,
            "conv2.w": self.conv2.weight, "conv2.b": self.conv2.bias,
            "bn2.gamma": self.bn2.gamma, "bn2.beta": self.bn2.beta,
            "fc.w": self.fc.weight, "fc.b": self.fc.bias,
        }

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            "conv1.w": self.conv1.grads["w"], "conv1.b": self.conv1.grads["b"],
            "bn1.gamma": self.bn1.grads["gamma"], "bn1.beta": self.bn1.grads["beta"],
            "conv2.w": self.conv2.grads["w"], "conv2.b": self.conv2.grads["b"],
            "bn2.gamma": self.bn2.grads["gamma"], "bn2.beta": self.bn2.grads["beta"],
            "fc.w": self.fc.grads["w"], "fc.b": self.fc.grads["b"],
        }

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All persistent arrays (learnables plus BN running stats) in
        checkpoint blob order."""
        return {
            "conv1.w": self.conv1.weight, "conv1.b": self.conv1.bias,
            "bn1.gamma": self.bn1.gamma, "bn1.beta": self.bn1.beta,
            "bn1.running_mean": self.bn1.running_mean,
            "bn1.running_var": self.bn1.running_var,
            "conv2.w": self.conv2.weight, "conv2.b": self.conv2.bias,
            "bn2.gamma": self.bn2.gamma, "bn2.beta": self.bn2.beta,
            "bn2.running_mean": self.bn2.running_mean,
            "bn2.running_var": self.bn2.running_var,
            "fc.w": self.fc.weight, "fc.b": self.fc.bias,
        }

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_arrays().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, arr in self.state_arrays().items():
            arr[...] = snap[name]


def parameter_count(model: FaultCNN1D) -> tuple[int, int, int]:
    """Parameter accounting (learnable, learnable + BN scalars, FP32 bytes).

    Each conv block counts its weight tensor plus two per-channel vectors;
    batch norm contributes four scalars per normalized channel on top.
    """
    learnable = 0
    bn_channels = 0
    for conv in (model.conv1, model.conv2):
        learnable += conv.weight.size + 2 * conv.out_channels
        bn_channels += conv.out_channels
    learnable += model.fc.weight.size + model.fc.bias.size
    total = learnable + 4 * bn_channels
    return learnable, total, 4 * total


def predict_logits(model: FaultCNN1D, values: np.ndarray,
                   batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits for a frame stack (N, C, T), batched to bound memory."""
    outputs = []
    for start in range(0, values.shape[0], batch_size):
        outputs.append(model.forward(values[start:start + batch_size], train=False))
    if not outputs:
        return np.zeros((0, model.n_classes), dtype=model.dtype)
    return np.concatenate(outputs, axis=0)


def predict_classes(model: FaultCNN1D, values: np.ndarray,
                    batch_size: int = 256) -> np.ndarray:
    return np.argmax(predict_logits(model, values, batch_size), axis=1)

"""The two tiny SR backbones and their fixed layer graphs.

EspcnLite: conv 3->F1 5x5, ReLU, conv F1->F2 3x3, ReLU, conv F2->3r^2 3x3,
pixel shuffle. WdsrLite: a 3x3 head into B two-conv residual blocks (width
doubles before the ReLU), a 3x3 tail into pixel shuffle, plus a 5x5 skip
convolution on the raw input whose shuffled output is added to the tail path.

Weight wire order (consumed by the codec): layers in graph order, per layer
the weight tensor row-major then the bias, 32-bit little-endian floats. Graph
order is construction order: EspcnLite conv1, conv2, conv3; WdsrLite head,
block convs in block order, tail, skip.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..errors import ShapeError
from ..util import rng_from
from . import ops
from .optim import Parameter


class Arch(IntEnum):
    ESPCN_LITE = 0
    WDSR_LITE = 1


@dataclass(frozen=True)
class ModelSpec:
    """Architecture id, upscale factor and the per-arch width knobs.

    width_a/width_b mean (first-conv filters, second-conv filters) for
    EspcnLite and (feature width, residual block count) for WdsrLite; the
    codec header stores them verbatim.
    """

    arch: Arch
    scale: int
    width_a: int
    width_b: int

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.width_a < 1 or self.width_b < 1:
            raise ValueError(f"widths must be >= 1, got {self.width_a}, {self.width_b}")

    @classmethod
    def espcn_lite(cls, scale: int, f1: int = 32, f2: int = 16) -> "ModelSpec":
        return cls(Arch.ESPCN_LITE, scale, f1, f2)

    @classmethod
    def wdsr_lite(cls, scale: int, feats: int = 16, blocks: int = 4) -> "ModelSpec":
        return cls(Arch.WDSR_LITE, scale, feats, blocks)

    @property
    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """(cin, cout, k) per conv, in graph order."""
        r2 = 3 * self.scale * self.scale
        if self.arch == Arch.ESPCN_LITE:
            f1, f2 = self.width_a, self.width_b
            return [(3, f1, 5), (f1, f2, 3), (f2, r2, 3)]
        f, blocks = self.width_a, self.width_b
        shapes = [(3, f, 3)]
        for _ in range(blocks):
            shapes += [(f, 2 * f, 3), (2 * f, f, 3)]
        shapes += [(f, r2, 3), (3, r2, 5)]
        return shapes

    @property
    def param_count(self) -> int:
        return sum(cin * cout * k * k + cout for cin, cout, k in self.conv_shapes)

    @property
    def macs_per_lr_pixel(self) -> int:
        """Multiply-accumulates per low-res pixel for one forward pass."""
        return sum(cin * cout * k * k for cin, cout, k in self.conv_shapes)


class _Conv:
    def __init__(self, cin: int, cout: int, k: int):
        self.cin, self.cout, self.k = cin, cout, k
        self.pad = (k - 1) // 2
        self.weight = Parameter.of(np.zeros((cout, cin, k, k), dtype=np.float32))
        self.bias = Parameter.of(np.zeros((1, cout, 1, 1), dtype=np.float32))
        self._cols = None
        self._x_shape = None

    def init_weights(self, rng: np.random.Generator) -> None:
        # fan-in uniform: keeps early ReLU activations bounded
        bound = np.sqrt(6.0 / (self.cin * self.k * self.k))
        self.weight.value = rng.uniform(-bound, bound, self.weight.value.shape).astype(np.float32)

    def forward(self, x: np.ndarray) -> np.ndarray:
        # finiteness is checked once per step at the loss, not per layer
        if x.ndim != 4 or x.shape[1] != self.cin:
            raise ShapeError(f"conv expects (n, {self.cin}, h, w), got {x.shape}")
        n, _, h, w = x.shape
        self._cols = ops._im2col(x, self.k, self.pad)
        self._x_shape = x.shape
        return ops._conv_gemm(self._cols, self.weight.value, self.bias.value, n, h, w)

    def backward(self, grad_out: np.ndarray, need_input_grad: bool = True) -> np.ndarray | None:
        g2 = grad_out.transpose(1, 0, 2, 3).reshape(self.cout, -1)
        self.weight.grad += (g2 @ self._cols.T).reshape(self.weight.value.shape)
        self.bias.grad += g2.sum(axis=1).reshape(self.bias.value.shape)
        if not need_input_grad:
            return None
        grad_cols = self.weight.value.reshape(self.cout, -1).T @ g2
        return ops._col2im(grad_cols, self._x_shape, self.k, self.pad)


class _Relu:
    def __init__(self):
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return np.maximum(x, 0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return ops.relu_backward(grad_out, self._x)


class _Shuffle:
    def __init__(self, r: int):
        self.r = r

    def forward(self, x: np.ndarray) -> np.ndarray:
        return ops.pixel_shuffle(x, self.r)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return ops.pixel_unshuffle(grad_out, self.r)


class SrModel:
    """Base: parameter bookkeeping and the serialization contract."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self._convs: list[_Conv] = [_Conv(cin, cout, k) for cin, cout, k in spec.conv_shapes]

    def parameters(self) -> list[Parameter]:
        out = []
        for conv in self._convs:
            out.append(conv.weight)
            out.append(conv.bias)
        return out

    @property
    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def to_bytes(self) -> bytes:
        parts = []
        for conv in self._convs:
            parts.append(conv.weight.value.astype("<f4").tobytes())
            parts.append(conv.bias.value.astype("<f4").tobytes())
        return b"".join(parts)

    def load_bytes(self, data: bytes) -> None:
        flat = np.frombuffer(data, dtype="<f4")
        if flat.size != self.param_count:
            raise ShapeError(f"weight blob holds {flat.size} floats, model needs {self.param_count}")
        off = 0
        for conv in self._convs:
            for p in (conv.weight, conv.bias):
                n = p.value.size
                p.value = flat[off : off + n].astype(np.float32).reshape(p.value.shape)
                off += n

    def _check_input(self, x: np.ndarray) -> None:
        ops.check_tensor4(x, "model input")
        if x.shape[1] != 3:
            raise ShapeError(f"model expects 3 input channels, got {x.shape[1]}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class EspcnLite(SrModel):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        self.relu1 = _Relu()
        self.relu2 = _Relu()
        self.shuffle = _Shuffle(spec.scale)

    def forward(self, x):
        self._check_input(x)
        c1, c2, c3 = self._convs
        h = self.relu1.forward(c1.forward(x))
        h = self.relu2.forward(c2.forward(h))
        return self.shuffle.forward(c3.forward(h))

    def backward(self, grad_out):
        c1, c2, c3 = self._convs
        g = c3.backward(self.shuffle.backward(grad_out))
        g = c2.backward(self.relu2.backward(g))
        return c1.backward(self.relu1.backward(g), need_input_grad=False)


class WdsrLite(SrModel):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        blocks = spec.width_b
        self.head = self._convs[0]
        self.blocks = [
            (self._convs[1 + 2 * b], _Relu(), self._convs[2 + 2 * b]) for b in range(blocks)
        ]
        self.tail = self._convs[1 + 2 * blocks]
        self.skip = self._convs[2 + 2 * blocks]
        self.shuffle_main = _Shuffle(spec.scale)
        self.shuffle_skip = _Shuffle(spec.scale)

    def forward(self, x):
        self._check_input(x)
        h = self.head.forward(x)
        for c1, act, c2 in self.blocks:
            h = h + c2.forward(act.forward(c1.forward(h)))
        main = self.shuffle_main.forward(self.tail.forward(h))
        side = self.shuffle_skip.forward(self.skip.forward(x))
        return main + side

    def backward(self, grad_out):
        self.skip.backward(self.shuffle_skip.backward(grad_out), need_input_grad=False)
        g = self.tail.backward(self.shuffle_main.backward(grad_out))
        for c1, act, c2 in reversed(self.blocks):
            g = g + c1.backward(act.backward(c2.backward(g)))
        return self.head.backward(g, need_input_grad=False)


def build_model(spec: ModelSpec, seed: int) -> SrModel:
    """Fresh model with fan-in uniform conv weights and zero biases; a pure
    function of (spec, seed). Layers draw in graph order from one stream."""
    cls = EspcnLite if spec.arch == Arch.ESPCN_LITE else WdsrLite
    model = cls(spec)
    rng = rng_from(seed)
    for conv in model._convs:
        conv.init_weights(rng)
    return model


def model_from_bytes(spec: ModelSpec, data: bytes) -> SrModel:
    cls = EspcnLite if spec.arch == Arch.ESPCN_LITE else WdsrLite
    model = cls(spec)
    model.load_bytes(data)
    return model

"""Small numpy engine: valid-padding conv2d, dense, LSTM, ReLU, with exact
backpropagation through time.

Arrays are laid out row-major with channels last, so a single feature map is
``(height, width, channels)`` and a batch is ``(N, H, W, C)``. Conv kernels are
stored as ``(kH, kW, inC, outC)``. LSTM weights are one ``(in + hidden, 4 *
hidden)`` matrix whose column blocks are the gates in the order
``(input, forget, cell-candidate, output)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACTIVATIONS = ("relu", "linear")


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# layer specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Conv2D:
    kernel: tuple[int, int]
    stride: tuple[int, int]
    filters: int
    activation: str = "relu"
    kind: str = field(default="conv2d", init=False)


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "linear"
    kind: str = field(default="fully-connected", init=False)


@dataclass(frozen=True)
class LSTM:
    units: int
    concat_aux: bool = False
    kind: str = field(default="lstm", init=False)


@dataclass
class LayerParams:
    """Weights and biases of one layer. Both are views into the owning
    network's flat parameter vector."""

    kind: str
    weights: np.ndarray
    biases: np.ndarray


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def sigmoid(x):
    # tanh form is overflow-free for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _im2col(x, kh, kw, sh, sw):
    # x: (N, H, W, C) -> (N, oH, oW, kh, kw, C)
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    return win.transpose(0, 1, 2, 4, 5, 3)


def conv2d_forward(x, layer: LayerParams, stride=(1, 1), return_cols=False):
    """Cross-correlation with "valid" padding plus bias.

    ``x`` is a single ``(H, W, C)`` map or a batch ``(N, H, W, C)``.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    kh, kw, cin, cout = layer.weights.shape
    n, h, w, c = x.shape
    sh, sw = stride
    if sh < 1 or sw < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if c != cin:
        raise ShapeError(f"input has {c} channels but kernel expects {cin} (kernel shape {layer.weights.shape})")
    if kh > h or kw > w:
        raise ShapeError(f"kernel {kh}x{kw} does not fit input {h}x{w}")
    oh, ow = conv_output_size(h, kh, sh), conv_output_size(w, kw, sw)
    cols = _im2col(x, kh, kw, sh, sw).reshape(n * oh * ow, kh * kw * cin)
    out = (cols @ layer.weights.reshape(-1, cout) + layer.biases).reshape(n, oh, ow, cout)
    if single:
        out = out[0]
    if return_cols:
        return out, cols
    return out


def conv2d_backward(dout, cols, x_shape, layer: LayerParams, stride, need_dx=True):
    """Returns ``(dx, dW, db)``; ``dx`` is None when ``need_dx`` is false."""
    kh, kw, cin, cout = layer.weights.shape
    n, h, w, c = x_shape
    sh, sw = stride
    _, oh, ow, _ = dout.shape
    d2 = dout.reshape(-1, cout)
    dW = (cols.T @ d2).reshape(layer.weights.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = (d2 @ layer.weights.reshape(-1, cout).T).reshape(n, oh, ow, kh, kw, cin)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + sh * (oh - 1) + 1:sh, j:j + sw * (ow - 1) + 1:sw, :] += dcols[:, :, :, i, j, :]
    return dx, dW, db


def lstm_step(x, h, c, layer: LayerParams):
    """One LSTM step. Works for single vectors or ``(B, dim)`` batches."""
    hidden = layer.biases.shape[0] // 4
    nin = layer.weights.shape[0] - hidden
    if x.shape[-1] != nin or h.shape[-1] != hidden or c.shape[-1] != hidden:
        raise ShapeError(
            f"lstm expects x:{nin} h:{hidden} c:{hidden}, got x:{x.shape[-1]} h:{h.shape[-1]} c:{c.shape[-1]}"
        )
    z = np.concatenate([x, h], axis=-1) @ layer.weights + layer.biases
    i = sigmoid(z[..., :hidden])
    f = sigmoid(z[..., hidden:2 * hidden])
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = sigmoid(z[..., 3 * hidden:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------


def _param_shapes(spec, in_shape, aux_dim):
    """Parameter shapes for one layer and the layer's output shape (per sample)."""
    if isinstance(spec, Conv2D):
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d needs a (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        kh, kw = spec.kernel
        if kh > h or kw > w:
            raise ShapeError(f"kernel {spec.kernel} does not fit input {in_shape}")
        out = (conv_output_size(h, kh, spec.stride[0]), conv_output_size(w, kw, spec.stride[1]), spec.filters)
        return (kh, kw, c, spec.filters), (spec.filters,), out
    nin = int(np.prod(in_shape))
    if isinstance(spec, Dense):
        return (nin, spec.units), (spec.units,), (spec.units,)
    if isinstance(spec, LSTM):
        if spec.concat_aux:
            nin += aux_dim
        return (nin + spec.units, 4 * spec.units), (4 * spec.units,), (spec.units,)
    raise TypeError(f"unknown layer spec {spec!r}")


class Network:
    """An ordered stack of conv2d / dense / LSTM layers over a time window.

    Every layer maps a ``(T, B, ...)`` array to a ``(T, B, ...)`` array. Conv
    and dense layers are applied independently per time step; LSTM layers run
    the recurrence over ``T``. A layer flagged ``concat_aux`` receives the
    auxiliary vector appended to its input. All weights live in the flat
    vector ``self.params`` so optimizers and checkpoints can treat them as one
    array.
    """

    def __init__(self, input_shape, layers: Sequence, aux_dim=0, dtype=np.float32, rng=None, init=True):
        self.input_shape = tuple(input_shape)
        self.specs = tuple(layers)
        self.aux_dim = aux_dim
        self.dtype = np.dtype(dtype)

        shapes = []
        self.shapes = []  # per-sample output shape of each layer
        cur = self.input_shape
        for spec in self.specs:
            if not isinstance(spec, (Conv2D, Dense, LSTM)):
                raise TypeError(f"unknown layer spec {spec!r}")
            if getattr(spec, "activation", "linear") not in ACTIVATIONS:
                raise ValueError(f"unknown activation {spec.activation!r}")
            if isinstance(spec, Conv2D) and self.shapes and len(cur) != 3:
                raise ShapeError("conv2d cannot follow a flattened layer")
            wshape, bshape, cur = _param_shapes(spec, cur, aux_dim)
            shapes.append((wshape, bshape))
            self.shapes.append(cur)
        self.output_shape = cur

        sizes = [int(np.prod(w)) + int(np.prod(b)) for w, b in shapes]
        self.size = int(sum(sizes))
        self.params = np.zeros(self.size, dtype=self.dtype)
        self.slices = []
        off = 0
        for (wshape, bshape) in shapes:
            nw, nb = int(np.prod(wshape)), int(np.prod(bshape))
            self.slices.append(((off, off + nw, wshape), (off + nw, off + nw + nb, bshape)))
            off += nw + nb
        self.layers = self._bind(self.params)
        if init:
            self.initialize(rng if rng is not None else np.random.default_rng(0))

    # -- parameter plumbing -------------------------------------------------

    def _bind(self, flat):
        out = []
        for spec, ((w0, w1, ws), (b0, b1, bs)) in zip(self.specs, self.slices):
            out.append(LayerParams(spec.kind, flat[w0:w1].reshape(ws), flat[b0:b1].reshape(bs)))
        return out

    def initialize(self, rng):
        """He-uniform for conv/dense, U(-1/sqrt(H), 1/sqrt(H)) for LSTM with
        forget-gate bias 1."""
        for spec, layer in zip(self.specs, self.layers):
            if isinstance(spec, LSTM):
                lim = 1.0 / np.sqrt(spec.units)
                layer.weights[...] = rng.uniform(-lim, lim, layer.weights.shape)
                layer.biases[...] = 0.0
                layer.biases[spec.units:2 * spec.units] = 1.0
            else:
                fan_in = int(np.prod(layer.weights.shape[:-1]))
                lim = np.sqrt(6.0 / fan_in)
                layer.weights[...] = rng.uniform(-lim, lim, layer.weights.shape)
                layer.biases[...] = 0.0

    def layer_arrays(self, flat=None):
        """(name, array) for every weight and bias tensor, in declaration order."""
        layers = self.layers if flat is None else self._bind(flat)
        out = []
        for k, layer in enumerate(layers):
            out.append((f"{k}.{layer.kind}.weights", layer.weights))
            out.append((f"{k}.{layer.kind}.biases", layer.biases))
        return out

    def copy(self, dtype=None):
        net = Network(self.input_shape, self.specs, self.aux_dim, dtype or self.dtype, init=False)
        net.params[...] = self.params
        return net

    def set_params(self, flat):
        if flat.shape != self.params.shape:
            raise ShapeError(f"expected {self.params.shape} parameters, got {flat.shape}")
        self.params[...] = flat

    def lstm_units(self):
        return [s.units for s in self.specs if isinstance(s, LSTM)]

    def zero_state(self, batch):
        return [(np.zeros((batch, u), self.dtype), np.zeros((batch, u), self.dtype)) for u in self.lstm_units()]

    # -- forward ------------------------------------------------------------

    def forward(self, x, aux=None, state=None, record=True):
        """Run a ``(T, B, *input_shape)`` window.

        Returns ``(out, final_state, cache)``; ``cache`` is None unless
        ``record`` is set. ``state`` is a list of ``(h, c)`` per LSTM layer
        and defaults to zeros.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[2:] != self.input_shape:
            raise ShapeError(f"expected input (T, B, {self.input_shape}), got {x.shape}")
        T, B = x.shape[:2]
        if T < 1:
            raise ShapeError("window length must be >= 1")
        if self.aux_dim:
            if aux is None:
                raise ShapeError("network needs an auxiliary input")
            aux = np.asarray(aux, dtype=self.dtype)
            if aux.shape != (T, B, self.aux_dim):
                raise ShapeError(f"expected aux {(T, B, self.aux_dim)}, got {aux.shape}")
        if state is None:
            state = self.zero_state(B)
        final_state = []
        caches = []
        lstm_k = 0
        cur = x
        for spec, layer in zip(self.specs, self.layers):
            if isinstance(spec, Conv2D):
                flat_in = cur.reshape((T * B,) + cur.shape[2:])
                z, cols = conv2d_forward(flat_in, layer, spec.stride, return_cols=True)
                z = z.reshape((T, B) + z.shape[1:])
                cache = {"cols": cols if record else None, "in_shape": flat_in.shape}
            elif isinstance(spec, Dense):
                inp = cur.reshape(T * B, -1)
                z = (inp @ layer.weights + layer.biases).reshape(T, B, -1)
                cache = {"in": inp, "in_shape": cur.shape}
            else:
                inp = cur.reshape(T, B, -1)
                if spec.concat_aux:
                    inp = np.concatenate([inp, aux], axis=-1)
                z, fin, cache = self._lstm_forward(inp, layer, spec.units, state[lstm_k], record)
                cache["in_shape"] = cur.shape
                final_state.append(fin)
                lstm_k += 1
            act = getattr(spec, "activation", "linear")
            if act == "relu":
                mask = z > 0
                z = z * mask
                cache["mask"] = mask
            caches.append(cache if record else None)
            cur = z
        return cur, final_state, (caches if record else None)

    def _lstm_forward(self, inp, layer, hidden, init_state, record):
        T, B, nin = inp.shape
        W, b = layer.weights, layer.biases
        Wx, Wh = W[:nin], W[nin:]
        zx = (inp.reshape(T * B, nin) @ Wx + b).reshape(T, B, 4 * hidden)
        h, c = init_state
        hs = np.empty((T + 1, B, hidden), self.dtype)
        cs = np.empty((T + 1, B, hidden), self.dtype)
        gates = np.empty((T, B, 4 * hidden), self.dtype)
        hs[0], cs[0] = h, c
        for t in range(T):
            z = zx[t] + hs[t] @ Wh
            ifo_i = sigmoid(z[:, :2 * hidden])
            g = np.tanh(z[:, 2 * hidden:3 * hidden])
            o = sigmoid(z[:, 3 * hidden:])
            i, f = ifo_i[:, :hidden], ifo_i[:, hidden:]
            cs[t + 1] = f * cs[t] + i * g
            hs[t + 1] = o * np.tanh(cs[t + 1])
            gates[t, :, :2 * hidden] = ifo_i
            gates[t, :, 2 * hidden:3 * hidden] = g
            gates[t, :, 3 * hidden:] = o
        cache = {"inp": inp, "hs": hs, "cs": cs, "gates": gates} if record else {}
        return hs[1:], (hs[T].copy(), cs[T].copy()), cache

    # -- backward -----------------------------------------------------------

    def backward(self, caches, dout):
        """Gradient of the loss w.r.t. the flat parameter vector, given the
        upstream gradient ``dout`` of shape ``(T, B, *output_shape)``."""
        if caches is None or len(caches) != len(self.specs) or any(c is None for c in caches):
            raise ValueError("backward needs the activations recorded by forward(record=True)")
        grad = np.zeros_like(self.params)
        glayers = self._bind(grad)
        d = np.asarray(dout, dtype=self.dtype)
        T, B = d.shape[:2]
        for k in range(len(self.specs) - 1, -1, -1):
            spec, layer, cache, g = self.specs[k], self.layers[k], caches[k], glayers[k]
            if "mask" in cache:
                d = d * cache["mask"]
            need_dx = k > 0
            if isinstance(spec, Conv2D):
                dflat = d.reshape((T * B,) + d.shape[2:])
                dx, dW, db = conv2d_backward(dflat, cache["cols"], cache["in_shape"], layer, spec.stride, need_dx)
                g.weights[...] = dW
                g.biases[...] = db
                if need_dx:
                    d = dx.reshape((T, B) + dx.shape[1:])
            elif isinstance(spec, Dense):
                d2 = d.reshape(T * B, -1)
                g.weights[...] = cache["in"].T @ d2
                g.biases[...] = d2.sum(axis=0)
                if need_dx:
                    d = (d2 @ layer.weights.T).reshape(cache["in_shape"])
            else:
                dinp = self._lstm_backward(d.reshape(T, B, -1), layer, g, spec.units, cache, need_dx)
                if need_dx:
                    if spec.concat_aux:
                        dinp = dinp[..., : dinp.shape[-1] - self.aux_dim]
                    d = dinp.reshape(cache["in_shape"])
        return grad

    def _lstm_backward(self, dh_out, layer, g, hidden, cache, need_dx):
        inp, hs, cs, gates = cache["inp"], cache["hs"], cache["cs"], cache["gates"]
        T, B, nin = inp.shape
        Wh = layer.weights[nin:]
        dz_all = np.empty((T, B, 4 * hidden), self.dtype)
        dh_next = np.zeros((B, hidden), self.dtype)
        dc_next = np.zeros((B, hidden), self.dtype)
        for t in range(T - 1, -1, -1):
            i = gates[t, :, :hidden]
            f = gates[t, :, hidden:2 * hidden]
            gg = gates[t, :, 2 * hidden:3 * hidden]
            o = gates[t, :, 3 * hidden:]
            tc = np.tanh(cs[t + 1])
            dh = dh_out[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:, :hidden] = dc * gg * i * (1.0 - i)
            dz[:, hidden:2 * hidden] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * hidden:3 * hidden] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * hidden:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ Wh.T
        dz2 = dz_all.reshape(T * B, 4 * hidden)
        g.weights[:nin] = inp.reshape(T * B, nin).T @ dz2
        g.weights[nin:] = hs[:T].reshape(T * B, hidden).T @ dz2
        g.biases[...] = dz2.sum(axis=0)
        if not need_dx:
            return None
        return (dz2 @ layer.weights[:nin].T).reshape(T, B, nin)

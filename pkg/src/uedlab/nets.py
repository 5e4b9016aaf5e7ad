"""Small convolutional-recurrent policy/value networks with hand-derived
reverse-mode gradients.

Topology (fixed family, float64 throughout):

    image --3x3 valid conv--> tanh --flatten--+
    direction one-hot --linear--> tanh -------+--> GRU --> tanh FC --> tanh FC --> linear out
    timestep scalar --linear--> tanh ---------+
    latent z (fed raw) ------------------------+

Policy and value networks are separate parameter sets of identical topology
(the value net has a single scalar output).  Differentiation is implemented
by hand for this family; there is no generic autodiff here, which is what
makes the finite-difference gradient checks in the test suite meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Timesteps are scaled before the embedding layer to keep tanh pre-activations
# in a sane range for episode lengths up to a few hundred steps.
TIMESTEP_SCALE = 0.1


@dataclass(frozen=True)
class NetworkSpec:
    """Topology description shared by the policy net and its value twin."""

    view_shape: tuple[int, int, int]  # (height, width, channels)
    n_actions: int
    conv_filters: int = 16
    conv_kernel: int = 3
    recurrent_width: int = 256
    head_widths: tuple[int, int] = (32, 32)
    direction_embed: int = 0  # 5 for navigation agents
    timestep_embed: int = 0  # 10 for the designer
    latent_dim: int = 0  # 50 for the designer

    def __post_init__(self):
        h, w, _ = self.view_shape
        if h < self.conv_kernel or w < self.conv_kernel:
            raise ValueError("view smaller than the conv kernel")
        for width in (self.conv_filters, self.recurrent_width, *self.head_widths,
                      self.n_actions):
            if width < 1:
                raise ValueError("all widths must be >= 1")

    @property
    def conv_out_shape(self) -> tuple[int, int]:
        h, w, _ = self.view_shape
        k = self.conv_kernel
        return h - k + 1, w - k + 1

    @property
    def recurrent_input_dim(self) -> int:
        oh, ow = self.conv_out_shape
        return (oh * ow * self.conv_filters + self.direction_embed
                + self.timestep_embed + self.latent_dim)


def param_shapes(spec: NetworkSpec, n_outputs: int) -> dict[str, tuple[int, ...]]:
    k, f = spec.conv_kernel, spec.conv_filters
    channels = spec.view_shape[2]
    r = spec.recurrent_width
    h1, h2 = spec.head_widths
    shapes: dict[str, tuple[int, ...]] = {
        "conv_W": (f, k * k * channels),
        "conv_b": (f,),
    }
    if spec.direction_embed:
        shapes["dir_W"] = (4, spec.direction_embed)
        shapes["dir_b"] = (spec.direction_embed,)
    if spec.timestep_embed:
        shapes["t_W"] = (spec.timestep_embed,)
        shapes["t_b"] = (spec.timestep_embed,)
    shapes.update({
        "gru_Wx": (3 * r, spec.recurrent_input_dim),
        "gru_Wh": (3 * r, r),
        "gru_bx": (3 * r,),
        "gru_bh": (3 * r,),
        "h1_W": (h1, r),
        "h1_b": (h1,),
        "h2_W": (h2, h1),
        "h2_b": (h2,),
        "out_W": (n_outputs, h2),
        "out_b": (n_outputs,),
    })
    return shapes


class ParamSet:
    """Named views into one flat float64 parameter vector."""

    def __init__(self, shapes: dict[str, tuple[int, ...]],
                 flat: Optional[np.ndarray] = None):
        self.shapes = dict(shapes)
        sizes = {name: int(np.prod(shape)) for name, shape in shapes.items()}
        self.size = sum(sizes.values())
        if flat is None:
            flat = np.zeros(self.size, dtype=np.float64)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ValueError(f"expected flat vector of length {self.size}")
        self.flat = flat
        self._views = {}
        offset = 0
        for name, shape in shapes.items():
            self._views[name] = self.flat[offset:offset + sizes[name]].reshape(shape)
            offset += sizes[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def __setitem__(self, name: str, value):
        self._views[name][...] = value

    def zeros_like(self) -> "ParamSet":
        return ParamSet(self.shapes)

    def copy(self) -> "ParamSet":
        return ParamSet(self.shapes, self.flat.copy())


def _orthogonal(rows: int, cols: int, rng: np.random.Generator,
                gain: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(spec: NetworkSpec, n_outputs: int,
                rng: np.random.Generator) -> ParamSet:
    """Orthogonal init for recurrent/linear maps, fan-in-scaled uniform for
    the convolution; biases zero."""
    params = ParamSet(param_shapes(spec, n_outputs))
    fan_in = params["conv_W"].shape[1]
    bound = 1.0 / np.sqrt(fan_in)
    params["conv_W"][...] = rng.uniform(-bound, bound, params["conv_W"].shape)
    for name in ("dir_W", "t_W", "gru_Wh", "h1_W", "h2_W", "out_W"):
        if name in params.shapes:
            w = params[name]
            if w.ndim == 1:
                w[...] = rng.uniform(-0.1, 0.1, w.shape)
            else:
                gain = 0.01 if name == "out_W" else 1.0
                w[...] = _orthogonal(w.shape[0], w.shape[1], rng, gain)
    wx = params["gru_Wx"]
    r = spec.recurrent_width
    for g in range(3):  # per-gate orthogonal blocks
        wx[g * r:(g + 1) * r] = _orthogonal(r, wx.shape[1], rng)
    return params


@dataclass(frozen=True)
class StepFeatures:
    """Per-step network inputs extracted from a domain observation."""

    image: np.ndarray
    direction: Optional[int] = None
    timestep: Optional[float] = None
    latent: Optional[np.ndarray] = None


def _im2col(image: np.ndarray, k: int) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(image, (k, k), axis=(0, 1))
    # (oh, ow, C, k, k) -> (oh*ow, k*k*C) matching conv_W's (k, k, C) ravel.
    patches = windows.transpose(0, 1, 3, 4, 2)
    oh, ow = patches.shape[:2]
    return patches.reshape(oh * ow, -1)


class RecurrentNet:
    """Forward/backward passes for one parameter set of the fixed topology."""

    def __init__(self, spec: NetworkSpec, n_outputs: int, params: ParamSet):
        self.spec = spec
        self.n_outputs = n_outputs
        self.params = params

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.spec.recurrent_width, dtype=np.float64)

    def step(self, feats: StepFeatures, h: np.ndarray):
        """Returns (output, next_state, cache)."""
        p = self.params
        k = self.spec.conv_kernel
        patches = _im2col(np.asarray(feats.image, dtype=np.float64), k)
        conv_pre = patches @ p["conv_W"].T + p["conv_b"]
        conv_act = np.tanh(conv_pre)
        parts = [conv_act.ravel()]
        dir_act = t_act = None
        if self.spec.direction_embed:
            dir_act = np.tanh(p["dir_W"][feats.direction] + p["dir_b"])
            parts.append(dir_act)
        if self.spec.timestep_embed:
            t_scaled = feats.timestep * TIMESTEP_SCALE
            t_act = np.tanh(p["t_W"] * t_scaled + p["t_b"])
            parts.append(t_act)
        if self.spec.latent_dim:
            parts.append(np.asarray(feats.latent, dtype=np.float64))
        x = np.concatenate(parts)

        r_width = self.spec.recurrent_width
        gx = p["gru_Wx"] @ x + p["gru_bx"]
        gh = p["gru_Wh"] @ h + p["gru_bh"]
        reset = _sigmoid(gx[:r_width] + gh[:r_width])
        update = _sigmoid(gx[r_width:2 * r_width] + gh[r_width:2 * r_width])
        cand = np.tanh(gx[2 * r_width:] + reset * gh[2 * r_width:])
        h_new = (1.0 - update) * cand + update * h

        y1 = np.tanh(p["h1_W"] @ h_new + p["h1_b"])
        y2 = np.tanh(p["h2_W"] @ y1 + p["h2_b"])
        out = p["out_W"] @ y2 + p["out_b"]
        cache = {
            "patches": patches, "conv_act": conv_act,
            "dir_act": dir_act, "direction": feats.direction,
            "t_act": t_act, "timestep": feats.timestep,
            "x": x, "h": h, "h_new": h_new,
            "reset": reset, "update": update, "cand": cand,
            "gh_n": gh[2 * r_width:],
            "y1": y1, "y2": y2,
        }
        return out, h_new, cache

    def forward_sequence(self, feats_seq, h0: Optional[np.ndarray] = None):
        """Unrolls the net over an episode; returns (outputs, caches)."""
        h = self.initial_state() if h0 is None else h0
        outs, caches = [], []
        for feats in feats_seq:
            out, h, cache = self.step(feats, h)
            outs.append(out)
            caches.append(cache)
        return np.array(outs), caches

    def backward_sequence(self, caches, d_outs: np.ndarray,
                          grads: Optional[ParamSet] = None) -> ParamSet:
        """Backpropagation through the full unroll.  ``d_outs`` holds the loss
        gradient w.r.t. each step's output; gradients accumulate into
        ``grads`` (created if not given)."""
        p = self.params
        if grads is None:
            grads = ParamSet(p.shapes)
        r_width = self.spec.recurrent_width
        d_h = np.zeros(r_width)
        for t in range(len(caches) - 1, -1, -1):
            c = caches[t]
            d_out = np.asarray(d_outs[t], dtype=np.float64)
            # Output heads.
            grads["out_W"] += np.outer(d_out, c["y2"])
            grads["out_b"] += d_out
            d_y2 = p["out_W"].T @ d_out
            d_z2 = d_y2 * (1.0 - c["y2"] ** 2)
            grads["h2_W"] += np.outer(d_z2, c["y1"])
            grads["h2_b"] += d_z2
            d_y1 = p["h2_W"].T @ d_z2
            d_z1 = d_y1 * (1.0 - c["y1"] ** 2)
            grads["h1_W"] += np.outer(d_z1, c["h_new"])
            grads["h1_b"] += d_z1
            d_hn = p["h1_W"].T @ d_z1 + d_h
            # GRU cell.
            update, cand, reset = c["update"], c["cand"], c["reset"]
            d_cand = d_hn * (1.0 - update)
            d_update = d_hn * (c["h"] - cand)
            d_h = d_hn * update
            d_zn = d_cand * (1.0 - cand ** 2)
            d_gxn = d_zn
            d_ghn = d_zn * reset
            d_reset = d_zn * c["gh_n"]
            d_zr = d_reset * reset * (1.0 - reset)
            d_zu = d_update * update * (1.0 - update)
            d_gx = np.concatenate([d_zr, d_zu, d_gxn])
            d_gh = np.concatenate([d_zr, d_zu, d_ghn])
            grads["gru_Wx"] += np.outer(d_gx, c["x"])
            grads["gru_bx"] += d_gx
            grads["gru_Wh"] += np.outer(d_gh, c["h"])
            grads["gru_bh"] += d_gh
            d_x = p["gru_Wx"].T @ d_gx
            d_h += p["gru_Wh"].T @ d_gh
            # Split the recurrent input gradient back into its sources.
            offset = c["conv_act"].size
            d_conv = d_x[:offset].reshape(c["conv_act"].shape)
            d_conv_pre = d_conv * (1.0 - c["conv_act"] ** 2)
            grads["conv_W"] += d_conv_pre.T @ c["patches"]
            grads["conv_b"] += d_conv_pre.sum(axis=0)
            if self.spec.direction_embed:
                d_e = self.spec.direction_embed
                d_dir = d_x[offset:offset + d_e]
                d_dir_pre = d_dir * (1.0 - c["dir_act"] ** 2)
                grads["dir_W"][c["direction"]] += d_dir_pre
                grads["dir_b"] += d_dir_pre
                offset += d_e
            if self.spec.timestep_embed:
                d_t = self.spec.timestep_embed
                d_temb = d_x[offset:offset + d_t]
                d_t_pre = d_temb * (1.0 - c["t_act"] ** 2)
                grads["t_W"] += d_t_pre * (c["timestep"] * TIMESTEP_SCALE)
                grads["t_b"] += d_t_pre
                offset += d_t
            # Latent inputs receive no parameter gradient.
        return grads


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))

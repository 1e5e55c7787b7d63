"""Auto-decoder network: fixed MLP + per-family latent table.

The network maps [x, y, one-hot(label), z] to n signed-distance channels.
Default shape (the production configuration): 8 hidden layers of 384
LeakyReLU units with the input concatenated onto the output of hidden
layer 3, then a linear head.  Forward/backward are hand-written reverse
mode over float64 numpy so training is bit-reproducible and gradients are
exact; tests verify them against central finite differences.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, NumericalError

LATENT_DIM = 128


@dataclass
class NetworkConfig:
    alphabet_size: int
    hidden_layers: int = 8
    width: int = 384
    skip_layer: int = 3          # input concat after this hidden layer; 0 disables
    out_channels: int = 3
    leaky_slope: float = 0.01
    latent_dim: int = LATENT_DIM

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ValueError("network needs at least one hidden unit/layer")
        if not 0 <= self.skip_layer < self.hidden_layers:
            raise ValueError(
                f"skip_layer must be in [0, hidden_layers), got {self.skip_layer}"
            )

    @property
    def in_dim(self):
        return 2 + self.alphabet_size + self.latent_dim

    def layer_dims(self):
        """(fan_in, fan_out) per layer including the linear head."""
        dims = []
        for l in range(self.hidden_layers):
            fan_in = self.in_dim if l == 0 else self.width
            if self.skip_layer and l == self.skip_layer:
                fan_in = self.width + self.in_dim
            dims.append((fan_in, self.width))
        dims.append((self.width, self.out_channels))
        return dims

    def to_dict(self):
        return {
            "alphabet_size": self.alphabet_size,
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "skip_layer": self.skip_layer,
            "out_channels": self.out_channels,
            "leaky_slope": self.leaky_slope,
            "latent_dim": self.latent_dim,
        }


@dataclass
class Parameters:
    weights: list
    biases: list

    def named(self):
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"w{l}", w
            yield f"b{l}", b

    def copy(self):
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_parameters(config, rng):
    """Kaiming fan-in init (LeakyReLU gain), zero biases, float64."""
    gain = np.sqrt(2.0 / (1.0 + config.leaky_slope**2))
    weights, biases = [], []
    for fan_in, fan_out in config.layer_dims():
        std = gain / np.sqrt(fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Parameters(weights, biases)


@dataclass
class LatentTable:
    codes: np.ndarray            # (families, latent_dim) float64
    family_ids: list
    frozen: bool = False

    def mean_code(self):
        return self.codes.mean(axis=0)


def init_latents(family_ids, rng, latent_dim=LATENT_DIM, std=0.01):
    codes = rng.normal(0.0, std, size=(len(family_ids), latent_dim))
    return LatentTable(codes=codes, family_ids=list(family_ids))


def assemble_inputs(points, label, z, alphabet_size):
    """Rows [x, y, one-hot(label), z] for a batch sharing one conditioning."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    X = np.zeros((len(P), 2 + alphabet_size + len(z)))
    X[:, :2] = P
    X[:, 2 + label] = 1.0
    X[:, 2 + alphabet_size :] = z
    return X


def forward(config, params, X, need_cache=True):
    """Evaluate the network on rows of X; returns (out, cache).

    The cache keeps the input and every pre-activation, enough to run
    :func:`backward` without re-doing the matmuls.
    """
    if X.shape[1] != config.in_dim:
        raise ValueError(f"input width {X.shape[1]} != expected {config.in_dim}")
    slope = config.leaky_slope
    zs = [] if need_cache else None
    a = X
    for l in range(config.hidden_layers):
        if config.skip_layer and l == config.skip_layer:
            a = np.concatenate([a, X], axis=1)
        z = a @ params.weights[l] + params.biases[l]
        if need_cache:
            zs.append(z)
        a = np.where(z >= 0, z, slope * z)
    out = a @ params.weights[-1] + params.biases[-1]
    cache = (X, zs) if need_cache else None
    return out, cache


def backward(config, params, cache, d_out, need_param_grads=True):
    """Exact reverse-mode gradients for a cached forward pass.

    Returns (grads, dX) where ``grads`` mirrors :class:`Parameters` and
    ``dX`` is the gradient w.r.t. the assembled input rows (spatial
    coordinates in the first two columns, latent in the last block).
    ``need_param_grads=False`` skips the weight-gradient matmuls (useful
    when only the input/latent gradient is wanted) and returns None for
    the first element.
    """
    if cache is None:
        raise ValueError("backward needs the cache from a forward call")
    X, zs = cache
    if len(zs) != config.hidden_layers or len(X) != len(d_out):
        raise ValueError("stale cache: shapes do not match this backward call")
    slope = config.leaky_slope
    gw = [None] * (config.hidden_layers + 1)
    gb = [None] * (config.hidden_layers + 1)
    dX = np.zeros_like(X)

    def activation(l):
        z = zs[l]
        return np.where(z >= 0, z, slope * z)

    if need_param_grads:
        a_last = activation(config.hidden_layers - 1)
        gw[-1] = a_last.T @ d_out
        gb[-1] = d_out.sum(axis=0)
    da = d_out @ params.weights[-1].T
    for l in range(config.hidden_layers - 1, -1, -1):
        z = zs[l]
        dz = da * np.where(z >= 0, 1.0, slope)
        if need_param_grads:
            if l == 0:
                a_in = X
            elif config.skip_layer and l == config.skip_layer:
                a_in = np.concatenate([activation(l - 1), X], axis=1)
            else:
                a_in = activation(l - 1)
            gw[l] = a_in.T @ dz
            gb[l] = dz.sum(axis=0)
        d_in = dz @ params.weights[l].T
        if l == 0:
            dX += d_in
        elif config.skip_layer and l == config.skip_layer:
            da = d_in[:, : config.width]
            dX += d_in[:, config.width :]
        else:
            da = d_in
    grads = Parameters(gw, gb) if need_param_grads else None
    return grads, dX


def evaluate(config, params, points, label, z, chunk=65536):
    """Forward without caching, chunked over points; returns (N, n)."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.empty((len(P), config.out_channels))
    for s in range(0, len(P), chunk):
        X = assemble_inputs(P[s : s + chunk], label, z, config.alphabet_size)
        out[s : s + chunk], _ = forward(config, params, X, need_cache=False)
    return out


# ---------------------------------------------------------------------------
# ADAM


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure(self, name, array):
        if name not in self.m:
            self.m[name] = np.zeros_like(array)
            self.v[name] = np.zeros_like(array)


def adam_step(state, arrays, grads):
    """One ADAM update, in place, over named parameter arrays.

    ``arrays`` and ``grads`` are dicts name -> ndarray with matching
    shapes.  NaN gradients abort with the offending tensor named.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for tensor {name!r}")
        p = arrays[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        state.ensure(name, p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + raw little-endian float64 payload

CKPT_MAGIC = b"GSDFCKP1"
CKPT_VERSION = 1


@dataclass
class ModelBundle:
    """Everything needed to render or keep training."""

    network: NetworkConfig
    params: Parameters
    latents: LatentTable
    alphabet: str
    channels: int = 3
    aa_k: float = 4.0
    train_width: int = 64
    supervision: str = "sdf"
    train_config: dict = field(default_factory=dict)
    epoch: int = 0
    adam: AdamState | None = None


def _manifest_arrays(bundle):
    arrays = list(bundle.params.named())
    arrays.append(("latents", bundle.latents.codes))
    if bundle.adam is not None:
        for name in sorted(bundle.adam.m):
            arrays.append((f"adam.m.{name}", bundle.adam.m[name]))
            arrays.append((f"adam.v.{name}", bundle.adam.v[name]))
    return arrays


def save_checkpoint(path, bundle):
    arrays = _manifest_arrays(bundle)
    manifest = {
        "format": "glyphsdf-checkpoint",
        "version": CKPT_VERSION,
        "alphabet": bundle.alphabet,
        "families": bundle.latents.family_ids,
        "frozen_latents": bundle.latents.frozen,
        "network": bundle.network.to_dict(),
        "channels": bundle.channels,
        "aa_k": bundle.aa_k,
        "train_width": bundle.train_width,
        "supervision": bundle.supervision,
        "train_config": bundle.train_config,
        "epoch": bundle.epoch,
        "adam": None
        if bundle.adam is None
        else {
            "lr": bundle.adam.lr,
            "beta1": bundle.adam.beta1,
            "beta2": bundle.adam.beta2,
            "eps": bundle.adam.eps,
            "step_count": bundle.adam.step_count,
        },
        "arrays": [],
    }
    offset = 0
    for name, arr in arrays:
        manifest["arrays"].append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset}
        )
        offset += arr.size * 8
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expect_alphabet=None):
    try:
        raw = open(path, "rb").read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(CKPT_MAGIC) + 4 or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    (blob_len,) = struct.unpack_from("<I", raw, len(CKPT_MAGIC))
    start = len(CKPT_MAGIC) + 4
    try:
        manifest = json.loads(raw[start : start + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint manifest in {path}") from exc
    if manifest.get("version") != CKPT_VERSION:
        raise CheckpointError(
            f"checkpoint version {manifest.get('version')} unsupported (want {CKPT_VERSION})"
        )
    if expect_alphabet is not None and manifest["alphabet"] != expect_alphabet:
        raise CheckpointError(
            "checkpoint alphabet does not match the configured alphabet"
        )
    config = NetworkConfig(**manifest["network"])
    payload = raw[start + blob_len :]
    arrays = {}
    for spec in manifest["arrays"]:
        size = int(np.prod(spec["shape"])) if spec["shape"] else 1
        end = spec["offset"] + size * 8
        if end > len(payload):
            raise CheckpointError(f"truncated checkpoint payload in {path}")
        arrays[spec["name"]] = (
            np.frombuffer(payload, dtype="<f8", count=size, offset=spec["offset"])
            .reshape(spec["shape"])
            .copy()
        )
    dims = config.layer_dims()
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(dims):
        w = arrays.get(f"w{l}")
        b = arrays.get(f"b{l}")
        if w is None or b is None:
            raise CheckpointError(f"checkpoint missing layer {l} arrays")
        if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise CheckpointError(
                f"layer {l} shape {w.shape} does not match config {(fan_in, fan_out)}"
            )
        weights.append(w)
        biases.append(b)
    codes = arrays["latents"]
    if codes.shape != (len(manifest["families"]), config.latent_dim):
        raise CheckpointError("latent table shape does not match config")
    latents = LatentTable(
        codes=codes,
        family_ids=list(manifest["families"]),
        frozen=bool(manifest.get("frozen_latents", False)),
    )
    adam = None
    if manifest.get("adam") is not None:
        a = manifest["adam"]
        adam = AdamState(
            lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
            step_count=a["step_count"],
        )
        for name, arr in arrays.items():
            if name.startswith("adam.m."):
                adam.m[name[len("adam.m."):]] = arr
            elif name.startswith("adam.v."):
                adam.v[name[len("adam.v."):]] = arr
    return ModelBundle(
        network=config,
        params=Parameters(weights, biases),
        latents=latents,
        alphabet=manifest["alphabet"],
        channels=manifest["channels"],
        aa_k=manifest["aa_k"],
        train_width=manifest["train_width"],
        supervision=manifest.get("supervision", "sdf"),
        train_config=manifest.get("train_config", {}),
        epoch=manifest.get("epoch", 0),
        adam=adam,
    )

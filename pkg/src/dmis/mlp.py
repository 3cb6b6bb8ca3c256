"""Fully-connected tanh network u(t, x; theta) and its checkpoint format.

Parameters are kept as per-layer float64 arrays.  The activation is fixed
to tanh: third-order input derivatives are propagated through the network,
which rules out non-smooth activations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MissingArtifactError, NonFiniteError

CHECKPOINT_MAGIC = "dmis-mlp"
CHECKPOINT_VERSION = "v1"


@dataclass
class MlpParams:
    """Weights/biases of a tanh MLP with 2 inputs (t, x)."""

    depth: int
    width: int
    out_dim: int
    seed: int
    weights: list = field(default_factory=list)   # [(out, in) float64]
    biases: list = field(default_factory=list)    # [(out,) float64]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def flat(self) -> np.ndarray:
        """Concatenate all parameters into one vector (W then b per layer)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, theta: np.ndarray) -> None:
        if theta.size != self.n_params:
            raise ConfigError(
                f"flat vector has {theta.size} entries, expected {self.n_params}"
            )
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = theta[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = theta[pos : pos + b.size].copy()
            pos += b.size


def layer_sizes(depth: int, width: int, out_dim: int) -> list:
    """(in, out) pairs for every affine layer, input dim fixed at 2."""
    sizes = [(2, width)]
    for _ in range(depth - 1):
        sizes.append((width, width))
    sizes.append((width, out_dim))
    return sizes


def param_count(depth: int, width: int, out_dim: int) -> int:
    return sum((fin + 1) * fout for fin, fout in layer_sizes(depth, width, out_dim))


def init(depth: int, width: int, out_dim: int, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases, reproducible from seed."""
    if depth < 1 or width < 1:
        raise ConfigError(f"depth/width must be >= 1, got {depth}/{width}")
    if out_dim not in (1, 2):
        raise ConfigError(f"out_dim must be 1 or 2, got {out_dim}")
    rng = np.random.default_rng(seed)
    params = MlpParams(depth=depth, width=width, out_dim=out_dim, seed=seed)
    for fin, fout in layer_sizes(depth, width, out_dim):
        limit = np.sqrt(6.0 / (fin + fout))
        params.weights.append(rng.uniform(-limit, limit, size=(fout, fin)))
        params.biases.append(np.zeros(fout))
    return params


def forward(params: MlpParams, t, x) -> np.ndarray:
    """Plain forward pass; bitwise-identical to the jet value channel.

    Scalars give shape (out_dim,), arrays of n points give (n, out_dim).
    """
    from .autodiff import jet_values

    scalar = np.isscalar(t) or (np.ndim(t) == 0 and np.ndim(x) == 0)
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
    xx = np.atleast_1d(np.asarray(x, dtype=np.float64))
    jet = jet_values(params, tt, xx, max_x_order=0)
    out = np.stack(jet.u, axis=1)
    return out[0] if scalar else out


def check_finite(params: MlpParams) -> None:
    for w, b in zip(params.weights, params.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NonFiniteError("network parameters contain NaN or inf")


def save_checkpoint(path, params: MlpParams) -> None:
    header = (
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} "
        f"{params.depth} {params.width} {params.out_dim} {params.seed}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"checkpoint not found: {path}") from exc
    with fh:
        header = fh.readline()
        fields = header.decode("ascii").split()
        if len(fields) != 6 or fields[0] != CHECKPOINT_MAGIC:
            raise ConfigError(f"not a {CHECKPOINT_MAGIC} file: {path}")
        if fields[1] != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {fields[1]!r}")
        depth, width, out_dim, seed = (int(v) for v in fields[2:])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    params = init(depth, width, out_dim, seed)
    params.set_flat(raw.astype(np.float64))
    return params

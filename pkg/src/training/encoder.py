"""
Siamese bag-of-n-grams text encoder.

A text is hashed into unigram and bigram buckets, the bucket embeddings are
mean-pooled, then passed through one dense projection with a tanh activation:

    h = (counts @ E) / max(total_count, 1)
    e = tanh(h @ W + b)

The same parameters encode both elements of a pair. Gradients are derived by
hand and returned per parameter.
"""

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from loguru import logger
from scipy import sparse
from sklearn.feature_extraction.text import HashingVectorizer

from ..common.config_loader import EncoderConfig
from ..common.error_handler import CheckpointError, ShapeError

CHECKPOINT_FORMAT_VERSION = 1

PARAMETER_NAMES = ("embedding", "projection", "bias")

TOKEN_PATTERN = r"[a-z0-9]+"


def build_vectorizer(hash_buckets: int) -> HashingVectorizer:
    """Hashed unigram+bigram counter over lowercase alphanumeric tokens."""
    return HashingVectorizer(
        n_features=hash_buckets,
        ngram_range=(1, 2),
        lowercase=True,
        token_pattern=TOKEN_PATTERN,
        alternate_sign=False,
        norm=None,
        dtype=np.float64,
    )


class EncoderModel:
    """
    Parameters and forward/backward passes of the toy Siamese encoder.

    Attributes:
        config: Encoder shape settings
        parameters: Mapping of "embedding" (B x n), "projection" (n x n) and "bias" (n,)
    """

    def __init__(self, config: EncoderConfig, parameters: Dict[str, np.ndarray]):
        self.config = config
        self.logger = logger
        self.parameters = {name: np.asarray(parameters[name], dtype=np.float64) for name in PARAMETER_NAMES}
        self._check_shapes(self.parameters)
        self._vectorizer = build_vectorizer(config.hash_buckets)

    @classmethod
    def initialize(cls, config: Optional[EncoderConfig] = None, seed: int = 0) -> "EncoderModel":
        """
        Create a freshly initialized model.

        The embedding table is uniform in [-init_scale, init_scale]; the
        projection is the identity plus Gaussian noise; the bias is zero.
        """
        config = config or EncoderConfig()
        rng = np.random.default_rng(seed)
        n = config.dim
        embedding = rng.uniform(-config.init_scale, config.init_scale, size=(config.hash_buckets, n))
        projection = np.eye(n) + config.projection_noise * rng.standard_normal((n, n))
        return cls(config, {"embedding": embedding, "projection": projection, "bias": np.zeros(n)})

    def _check_shapes(self, parameters: Dict[str, np.ndarray]) -> None:
        B, n = self.config.hash_buckets, self.config.dim
        expected = {"embedding": (B, n), "projection": (n, n), "bias": (n,)}
        for name, shape in expected.items():
            if parameters[name].shape != shape:
                raise ShapeError(f"parameter '{name}' has shape {parameters[name].shape}, expected {shape}")

    @property
    def dim(self) -> int:
        return self.config.dim

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.config, {k: v.copy() for k, v in self.parameters.items()})

    def features(self, texts: Sequence[str]) -> sparse.csr_matrix:
        """Count-normalized hashed features, one row per text."""
        counts = self._vectorizer.transform(list(texts)).tocsr()
        totals = np.asarray(counts.sum(axis=1)).ravel()
        scale = 1.0 / np.maximum(totals, 1.0)
        return sparse.diags(scale) @ counts

    def _forward(self, texts: Sequence[str]):
        feats = self.features(texts)
        pooled = np.asarray(feats @ self.parameters["embedding"])
        outputs = np.tanh(pooled @ self.parameters["projection"] + self.parameters["bias"])
        return feats, pooled, outputs

    def encode(self, text: str) -> np.ndarray:
        """Embed a single text."""
        return self.encode_batch([text])[0]

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        """Embed texts into an (m, n) matrix."""
        if len(texts) == 0:
            return np.zeros((0, self.dim))
        return self._forward(texts)[2]

    def backward(self, texts: Sequence[str], upstream_grads: Any) -> Dict[str, np.ndarray]:
        """
        Parameter gradients for dL/d encode_batch(texts) = upstream_grads.

        Args:
            texts: The m encoded texts
            upstream_grads: (m, n) gradient with respect to the embeddings

        Returns:
            Gradients keyed like ``parameters``
        """
        G = np.asarray(upstream_grads, dtype=np.float64)
        if G.shape != (len(texts), self.dim):
            raise ShapeError(f"upstream gradients have shape {G.shape}, expected {(len(texts), self.dim)}")
        if len(texts) == 0:
            return self.zero_gradients()

        feats, pooled, outputs = self._forward(texts)
        grad_z = G * (1.0 - outputs ** 2)
        grad_pooled = grad_z @ self.parameters["projection"].T
        return {
            "embedding": np.asarray(feats.T @ grad_pooled),
            "projection": pooled.T @ grad_z,
            "bias": grad_z.sum(axis=0),
        }

    def zero_gradients(self) -> Dict[str, np.ndarray]:
        return {name: np.zeros_like(value) for name, value in self.parameters.items()}


def encode(model: EncoderModel, text: str) -> np.ndarray:
    """Embed a single text with ``model``."""
    return model.encode(text)


def encode_batch(model: EncoderModel, texts: Sequence[str]) -> np.ndarray:
    """Embed texts with ``model``."""
    return model.encode_batch(texts)


def encode_batch_backward(model: EncoderModel, texts: Sequence[str], upstream_grads: Any) -> Dict[str, np.ndarray]:
    """Parameter gradients of ``encode_batch`` for the given upstream gradients."""
    return model.backward(texts, upstream_grads)


def siamese_backward(
    model: EncoderModel,
    texts_q: Sequence[str],
    texts_a: Sequence[str],
    grad_Q: np.ndarray,
    grad_A: np.ndarray,
) -> Dict[str, np.ndarray]:
    """Sum the parameter gradients flowing from both sides of a pair batch."""
    grads_q = model.backward(texts_q, grad_Q)
    grads_a = model.backward(texts_a, grad_A)
    return {name: grads_q[name] + grads_a[name] for name in PARAMETER_NAMES}


@dataclass
class Checkpoint:
    """A loaded checkpoint: model, free-form metadata and optimizer moments."""

    model: EncoderModel
    meta: Dict[str, Any] = field(default_factory=dict)
    optimizer_state: Optional[Dict[str, Dict[str, np.ndarray]]] = None


def save_checkpoint(
    model: EncoderModel,
    path: Union[str, Path],
    meta: Optional[Dict[str, Any]] = None,
    optimizer_state: Optional[Dict[str, Dict[str, np.ndarray]]] = None,
) -> Path:
    """
    Write model parameters, metadata and optimizer moments to an .npz file.

    Args:
        model: Model to save
        path: Target file
        meta: JSON-serializable metadata (temperature, epoch, step, ...)
        optimizer_state: Optional {"m": {...}, "v": {...}} moment arrays

    Returns:
        Path written
    """
    from ..cli.dataset_io import atomic_write_bytes

    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config_hash": model.config.config_hash(),
        "encoder": model.config.model_dump(mode="json"),
        "meta": meta or {},
    }
    arrays = {f"param.{name}": value for name, value in model.parameters.items()}
    for moment, values in (optimizer_state or {}).items():
        for name, value in values.items():
            arrays[f"optim.{moment}.{name}"] = np.asarray(value)
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))

    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    target = Path(path)
    atomic_write_bytes(target, buffer.getvalue())
    logger.debug(f"Saved checkpoint to {target}")
    return target


def load_checkpoint(path: Union[str, Path], expected_config: Optional[EncoderConfig] = None) -> Checkpoint:
    """
    Load a checkpoint written by ``save_checkpoint``.

    Args:
        path: Checkpoint file
        expected_config: When given, the stored shapes must match it

    Raises:
        CheckpointError: missing file, unreadable file, version or shape mismatch
    """
    source = Path(path)
    if not source.is_file():
        raise CheckpointError("checkpoint not found", path=str(source))

    try:
        with np.load(source, allow_pickle=False) as archive:
            header = json.loads(str(archive["header"]))
            parameters = {name: archive[f"param.{name}"] for name in PARAMETER_NAMES}
            optimizer_state: Dict[str, Dict[str, np.ndarray]] = {}
            for key in archive.files:
                if key.startswith("optim."):
                    _, moment, name = key.split(".", 2)
                    optimizer_state.setdefault(moment, {})[name] = archive[key]
    except (OSError, ValueError, KeyError) as e:
        raise CheckpointError(f"could not read checkpoint: {e}", path=str(source)) from e

    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}", path=str(source))

    stored_config = EncoderConfig(**header["encoder"])
    if expected_config is not None and expected_config.config_hash() != header["config_hash"]:
        raise CheckpointError(
            f"checkpoint shape (B={stored_config.hash_buckets}, n={stored_config.dim}) does not match "
            f"expected (B={expected_config.hash_buckets}, n={expected_config.dim})",
            path=str(source),
        )

    try:
        model = EncoderModel(stored_config, parameters)
    except ShapeError as e:
        raise CheckpointError(str(e), path=str(source)) from e

    return Checkpoint(model=model, meta=header.get("meta", {}), optimizer_state=optimizer_state or None)

"""Video feature extraction: stride sampling of grayscale frames, optional
face-box cropping plus area-average downscaling, stacking of consecutive
frames into 2-channel images, zero-padding onto a fixed canvas, and a
two-stage 2-D convolutional network whose sigmoid feature layer is averaged
over frame pairs to give one vector per utterance.

Face localization is upstream: frames arrive pre-cropped or with manifest
bounding boxes. Frames are ingested as binary PGM files.

At the reference geometry (250x500 canvas, 10x20 then 20x30 kernels, 2x2
pools) the shape chain does not validate: 250x500 minus a 10x20 kernel
leaves odd 241x481 maps that a 2x2 pool rejects. That configuration is kept
constructable for documentation, but ``build_visual_network`` raises on it;
the desk-scale configuration is the validated path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .layers import ConvLayer, ConvSpec, DenseLayer, MaxPoolLayer, ReluLayer, SigmoidLayer, SoftmaxLayer
from .network import Network, TrainConfig, train_softmax
from .tensor import Tensor


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM image into floats in [0, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if not (0 < maxval < 256):
        raise DataError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise DataError(f"{path}: expected {width * height} pixels, got {pixels.size}")
    return pixels.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DataError(f"image must be 2-D, got shape {img.shape}")
    quantized = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(quantized.tobytes())


@dataclass
class FrameSequence:
    """Ordered grayscale frames with optional per-frame face boxes
    (x, y, w, h in pixel units)."""

    frames: list[np.ndarray]
    boxes: list[tuple[int, int, int, int]] | None = None

    def __post_init__(self):
        self.frames = [np.asarray(f, dtype=np.float64) for f in self.frames]
        for i, f in enumerate(self.frames):
            if f.ndim != 2:
                raise DataError(f"frame {i} is not 2-D (shape {f.shape})")
        if self.boxes is not None and len(self.boxes) != len(self.frames):
            raise DataError(
                f"{len(self.boxes)} boxes for {len(self.frames)} frames"
            )

    def __len__(self) -> int:
        return len(self.frames)


def sample_frames(seq: FrameSequence, stride: int) -> FrameSequence:
    """Keep frames at indices 0, stride, 2*stride, ...; at least two must
    survive so consecutive pairing stays possible."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    frames = seq.frames[::stride]
    boxes = seq.boxes[::stride] if seq.boxes is not None else None
    if len(frames) < 2:
        raise DataError(
            f"stride {stride} keeps {len(frames)} of {len(seq)} frames; need >= 2 for pairing"
        )
    return FrameSequence(frames, boxes)


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row i holds each input cell's overlap with output interval i,
    normalized so rows sum to 1 (exact box-filter resampling)."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def crop_and_downscale(seq: FrameSequence, factor: float) -> FrameSequence:
    """Crop each frame to its face box (when present), then shrink both axes
    by ``factor`` with area averaging. factor 1 with no boxes is identity."""
    if not (0.0 < factor <= 1.0):
        raise ConfigError(f"factor must be in (0, 1], got {factor}")
    out = []
    for i, frame in enumerate(seq.frames):
        if seq.boxes is not None:
            x, y, w, h = seq.boxes[i]
            fh, fw = frame.shape
            if x < 0 or y < 0 or w < 1 or h < 1 or x + w > fw or y + h > fh:
                raise DataError(
                    f"frame {i}: box (x={x}, y={y}, w={w}, h={h}) outside {fw}x{fh} frame"
                )
            frame = frame[y : y + h, x : x + w]
        if factor == 1.0:
            out.append(frame)
            continue
        h_in, w_in = frame.shape
        h_out = max(1, int(round(h_in * factor)))
        w_out = max(1, int(round(w_in * factor)))
        out.append(_area_weights(h_in, h_out) @ frame @ _area_weights(w_in, w_out).T)
    return FrameSequence(out, None)


def pair_frames(seq: FrameSequence) -> list[Tensor]:
    """k frames -> k-1 two-channel images: channel 0 is frame t, channel 1
    is frame t+1."""
    if len(seq) < 2:
        raise DataError(f"pairing needs >= 2 frames, got {len(seq)}")
    dims = {f.shape for f in seq.frames}
    if len(dims) != 1:
        raise DataError(f"frames disagree on dims: {sorted(dims)}")
    return [
        Tensor(np.stack([seq.frames[t], seq.frames[t + 1]]))
        for t in range(len(seq) - 1)
    ]


def pad_to_canvas(img: Tensor, canvas: tuple[int, int]) -> Tensor:
    """Place the 2-channel image at the canvas top-left, zeros elsewhere."""
    ch, hh, ww = img.dims
    th, tw = canvas
    if hh > th or ww > tw:
        raise DataError(f"image {hh}x{ww} larger than canvas {th}x{tw}")
    out = np.zeros((ch, th, tw))
    out[:, :hh, :ww] = img.data
    return Tensor(out)


@dataclass
class VisualCnnConfig:
    """Geometry of the frame-pair network.

    Reference scale: every tenth frame, half-resolution downscale, 250x500
    canvas, 100 10x20 kernels then 100 20x30 kernels with 2x2 pools, and a
    300-unit sigmoid feature layer. See the module docstring for why that
    exact chain fails validation; desk() is the validated configuration.
    """

    sample_stride: int = 10
    downscale: float = 0.5
    canvas: tuple[int, int] = (250, 500)
    conv1_maps: int = 100
    conv1_kernel: tuple[int, int] = (10, 20)
    conv2_maps: int = 100
    conv2_kernel: tuple[int, int] = (20, 30)
    pool: tuple[int, int] = (2, 2)
    feature_width: int = 300

    def __post_init__(self):
        self.canvas = (int(self.canvas[0]), int(self.canvas[1]))
        self.conv1_kernel = (int(self.conv1_kernel[0]), int(self.conv1_kernel[1]))
        self.conv2_kernel = (int(self.conv2_kernel[0]), int(self.conv2_kernel[1]))
        self.pool = (int(self.pool[0]), int(self.pool[1]))
        if self.sample_stride < 1 or self.feature_width < 1:
            raise ConfigError("sample_stride and feature_width must be positive")
        if not (0.0 < self.downscale <= 1.0):
            raise ConfigError(f"downscale must be in (0, 1], got {self.downscale}")

    @classmethod
    def desk(cls) -> "VisualCnnConfig":
        return cls(sample_stride=2, downscale=0.5, canvas=(20, 28),
                   conv1_maps=6, conv1_kernel=(3, 5),
                   conv2_maps=8, conv2_kernel=(2, 3),
                   pool=(2, 2), feature_width=16)


def build_visual_network(cfg: VisualCnnConfig, n_classes: int, seed: int) -> Network:
    """Assemble and shape-check the frame-pair network; raises ShapeError
    when the configured chain does not validate (the reference-scale
    geometry does not)."""
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    conv1 = ConvLayer(ConvSpec(rank=2, kernel_dims=cfg.conv1_kernel,
                               in_channels=2, out_channels=cfg.conv1_maps))
    conv2 = ConvLayer(ConvSpec(rank=2, kernel_dims=cfg.conv2_kernel,
                               in_channels=cfg.conv1_maps, out_channels=cfg.conv2_maps))
    layers: list = [
        conv1, ReluLayer(), MaxPoolLayer(cfg.pool),
        conv2, ReluLayer(), MaxPoolLayer(cfg.pool),
    ]
    dims: tuple[int, ...] = (2,) + cfg.canvas
    for i, layer in enumerate(layers):
        try:
            dims = layer.out_dims(dims)
        except ShapeError as e:
            raise ShapeError(f"visual chain invalid at layer {i} ({layer.kind}): {e}") from e
    flat = int(np.prod(dims))
    layers.extend([
        DenseLayer(flat, cfg.feature_width),
        SigmoidLayer(),
        DenseLayer(cfg.feature_width, n_classes),
        SoftmaxLayer(),
    ])
    return Network(layers, (2,) + cfg.canvas, seed)


FEATURE_LAYER_OFFSET = 3  # sigmoid after the feature dense, from the end


def preprocess_sequence(seq: FrameSequence, cfg: VisualCnnConfig) -> list[Tensor]:
    """Manifest frames -> canvas-padded 2-channel pair tensors."""
    sampled = sample_frames(seq, cfg.sample_stride)
    scaled = crop_and_downscale(sampled, cfg.downscale)
    return [pad_to_canvas(p, cfg.canvas) for p in pair_frames(scaled)]


class VisualModel:
    """Trained frame-pair feature extractor."""

    def __init__(self, net: Network, cfg: VisualCnnConfig,
                 loss_trace: Sequence[float] | None = None):
        self.net = net
        self.cfg = cfg
        self.loss_trace = list(loss_trace) if loss_trace else []
        feat_dims = net.layer_dims[len(net.layers) - FEATURE_LAYER_OFFSET]
        if feat_dims != (cfg.feature_width,):
            raise ConfigError(
                f"network feature width {feat_dims} != config {cfg.feature_width}"
            )

    def pair_features(self, pair: Tensor) -> np.ndarray:
        _, activations = self.net.forward_full(pair)
        return activations[len(self.net.layers) - FEATURE_LAYER_OFFSET].copy()


def extract_visual_features(pairs: Sequence[Tensor], model: VisualModel) -> np.ndarray:
    """Utterance vector: arithmetic mean of the feature-layer activations
    over all frame pairs."""
    if not len(pairs):
        raise DataError("no frame pairs to extract from")
    return np.mean([model.pair_features(p) for p in pairs], axis=0)


def train_visual_model(
    utterances: Sequence[tuple[Sequence[Tensor], int]],
    cfg: VisualCnnConfig,
    tcfg: TrainConfig,
) -> VisualModel:
    """Fit the frame-pair network; every pair of an utterance carries the
    utterance label as its training target."""
    if not utterances:
        raise DataError("empty training set")
    labels = sorted({label for _, label in utterances})
    if len(labels) < 2:
        raise DataError(f"training set has a single class {labels}, need at least 2")
    n_classes = max(labels) + 1
    net = build_visual_network(cfg, n_classes, seed=tcfg.seed)
    inputs: list[Tensor] = []
    targets: list[int] = []
    for pairs, label in utterances:
        for p in pairs:
            inputs.append(p)
            targets.append(label)
    net, trace = train_softmax(net, inputs, targets, tcfg)
    return VisualModel(net, cfg, loss_trace=trace)

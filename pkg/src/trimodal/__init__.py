"""Trimodal sentiment/emotion pipeline: CNN feature extractors for text and
video, acoustic descriptor statistics for audio, concatenation fusion into a
linear SVM, and a speaker-aware evaluation harness."""

__version__ = "0.1.0"

from .tensor import Tensor
from .layers import ConvSpec, conv_forward, maxpool_forward
from .network import Network, TrainConfig, grad_check, train_softmax
from .text import EmbeddingTable, SentenceWindow, TextCnnConfig, embed_sentence, extract_text_features, train_text_model
from .audio import AudioClip, FunctionalCatalog, apply_functionals, compute_llds, extract_audio_features, frame_clip, z_standardize
from .visual import FrameSequence, VisualCnnConfig, crop_and_downscale, extract_visual_features, pad_to_canvas, pair_frames, sample_frames
from .fusion import FeatureRecord, FusedVector, SvmModel, fuse, predict, train_svm
from .metrics import MetricsReport, compute_metrics
from .datasets import DatasetManifest, SplitPlan, SynthSpec, gen_synthetic, load_manifest, make_splits, make_tuning_split, map_labels, save_manifest
from .experiments import AuditLog, ExperimentConfig, cross_dataset_run, run_experiment
from .tsne import Projection2D, tsne_2d

__all__ = [
    "Tensor", "ConvSpec", "conv_forward", "maxpool_forward",
    "Network", "TrainConfig", "grad_check", "train_softmax",
    "EmbeddingTable", "SentenceWindow", "TextCnnConfig", "embed_sentence",
    "extract_text_features", "train_text_model",
    "AudioClip", "FunctionalCatalog", "apply_functionals", "compute_llds",
    "extract_audio_features", "frame_clip", "z_standardize",
    "FrameSequence", "VisualCnnConfig", "crop_and_downscale",
    "extract_visual_features", "pad_to_canvas", "pair_frames", "sample_frames",
    "FeatureRecord", "FusedVector", "SvmModel", "fuse", "predict", "train_svm",
    "MetricsReport", "compute_metrics",
    "DatasetManifest", "SplitPlan", "SynthSpec", "gen_synthetic",
    "load_manifest", "make_splits", "make_tuning_split", "map_labels",
    "save_manifest",
    "AuditLog", "ExperimentConfig", "cross_dataset_run", "run_experiment",
    "Projection2D", "tsne_2d",
]

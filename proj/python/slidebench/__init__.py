"""Whole-slide tiling, embedding, and slide-level MIL benchmarking."""

from ._slidebench import (
    Slide,
    SlidebenchError,
    __version__,
    crop,
    embed,
    evaluate,
    label_components,
    native_embed,
    otsu_threshold,
    pearson,
    predict,
    read_features,
    read_manifest,
    report,
    run_cli,
    saturation,
    set_warnings_enabled,
    spearman,
    split,
    split_counts,
    synth_slide,
    synth_slide_json,
    tissue_mask,
    train,
    validate,
    write_features,
)

__all__ = [
    "Slide",
    "SlidebenchError",
    "__version__",
    "crop",
    "embed",
    "evaluate",
    "label_components",
    "native_embed",
    "otsu_threshold",
    "pearson",
    "predict",
    "read_features",
    "read_manifest",
    "report",
    "run_cli",
    "saturation",
    "set_warnings_enabled",
    "spearman",
    "split",
    "split_counts",
    "synth_slide",
    "synth_slide_json",
    "tissue_mask",
    "train",
    "validate",
    "write_features",
]

"""Deep feature export for object-view image datasets."""

__version__ = "0.1.0"

from .exporter import (
    ConfigError,
    EmptyDataset,
    ExportError,
    ExporterConfig,
    ViewImages,
    build_backbone,
    embed_images,
    export,
    pool_embeddings,
    scan_image_tree,
    write_feature_rows,
)

__all__ = [
    "ConfigError",
    "EmptyDataset",
    "ExportError",
    "ExporterConfig",
    "ViewImages",
    "build_backbone",
    "embed_images",
    "export",
    "pool_embeddings",
    "scan_image_tree",
    "write_feature_rows",
    "__version__",
]

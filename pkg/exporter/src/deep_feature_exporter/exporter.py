"""Batch CNN feature extraction for object-view image trees.

Walks a dataset-shaped directory of images, embeds each view's projection
images with a torchvision backbone, pools them element-wise into one vector
per view, and writes the shared feature CSV schema:

    category,instance_id,view_id,tag,dim,v1,...,vN

The consumer of that file is a separate package; the schema is the whole
contract between the two, so this module writes it independently.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image
from torchvision import models, transforms
from torchvision.models.feature_extraction import create_feature_extractor

POOLINGS = ("AVG", "MAX")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
HEAD_ATTRIBUTES = ("classifier", "fc", "head", "heads")
HEAD_INPUT = "head_input"

# standard ImageNet channel statistics; fixed constants keep runs comparable
# whether or not pretrained weights are in play
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_FIXED_COLUMNS = ("category", "instance_id", "view_id", "tag", "dim")


class ExportError(Exception):
    """Base for everything this package raises on purpose."""


class ConfigError(ExportError):
    pass


class EmptyDataset(ExportError):
    """No exportable views under the image root."""


@dataclass(frozen=True)
class ExporterConfig:
    """Backbone, preprocessing, and pooling choices for one export run.

    `layer` names where the embedding is read: the default reads the flatten
    just before the classification head (which is stripped); any other value
    is treated as a graph node name of the backbone.
    """

    model_name: str = "mobilenet_v3_small"
    input_resolution: int = 150
    pooling: str = "AVG"
    layer: str = HEAD_INPUT
    pretrained: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pooling", str(self.pooling).upper())
        if self.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if int(self.input_resolution) < 32:
            raise ConfigError(f"input resolution must be >= 32, got {self.input_resolution}")
        object.__setattr__(self, "input_resolution", int(self.input_resolution))


@dataclass(frozen=True)
class ViewImages:
    category: str
    instance_id: str
    view_id: str
    paths: tuple = field(default_factory=tuple)


def build_backbone(cfg):
    """Instantiate the backbone and expose the requested embedding.

    Weights are the pretrained ones when asked for, otherwise a random
    initialization made reproducible by seeding torch's global generator
    immediately before construction.
    """
    torch.manual_seed(cfg.seed)
    weights = "DEFAULT" if cfg.pretrained else None
    try:
        model = models.get_model(cfg.model_name, weights=weights)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"unknown model {cfg.model_name!r}: {exc}") from exc
    if cfg.layer == HEAD_INPUT:
        for attr in HEAD_ATTRIBUTES:
            if hasattr(model, attr):
                setattr(model, attr, torch.nn.Identity())
                break
        else:
            raise ConfigError(
                f"cannot locate a classification head on {cfg.model_name!r}; "
                "name an embedding layer explicitly"
            )
    else:
        try:
            model = create_feature_extractor(model, return_nodes={cfg.layer: "feat"})
        except ValueError as exc:
            raise ConfigError(f"unknown layer {cfg.layer!r}: {exc}") from exc
    model.eval()
    return model


def _preprocessor(resolution):
    return transforms.Compose(
        [
            transforms.Resize((resolution, resolution)),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


def embed_images(model, batch, layer=HEAD_INPUT):
    """Forward a (k, 3, H, W) batch, flattened to (k, D) float64."""
    with torch.no_grad():
        out = model(batch)
    if isinstance(out, dict):
        out = out["feat"]
    return out.reshape(out.shape[0], -1).double().numpy()


def pool_embeddings(embeddings, pooling):
    """Element-wise AVG or MAX across a view's image embeddings, rectified.

    On a single embedding both poolings are the identity (up to the
    rectification applied either way).
    """
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ValueError(f"expected a (k, dim) embedding stack, got shape {e.shape}")
    pooled = e.mean(axis=0) if pooling == "AVG" else e.max(axis=0)
    return np.maximum(pooled, 0.0)


def scan_image_tree(root):
    """Views under root/category/instance, sorted for stable output.

    A view is either a subdirectory of images (multi-projection) or a single
    flat image file whose stem is the view id.
    """
    if not os.path.isdir(root):
        raise EmptyDataset(f"image root {root!r} is not a directory")
    views = []
    for category in sorted(os.listdir(root)):
        cat_dir = os.path.join(root, category)
        if not os.path.isdir(cat_dir):
            continue
        for instance in sorted(os.listdir(cat_dir)):
            inst_dir = os.path.join(cat_dir, instance)
            if not os.path.isdir(inst_dir):
                continue
            for entry in sorted(os.listdir(inst_dir)):
                path = os.path.join(inst_dir, entry)
                if os.path.isdir(path):
                    images = tuple(
                        os.path.join(path, name)
                        for name in sorted(os.listdir(path))
                        if name.lower().endswith(IMAGE_EXTENSIONS)
                    )
                    if images:
                        views.append(ViewImages(category, instance, entry, images))
                elif entry.lower().endswith(IMAGE_EXTENSIONS):
                    stem = os.path.splitext(entry)[0]
                    views.append(ViewImages(category, instance, stem, (path,)))
    return views


def _load_image(path, prep):
    with Image.open(path) as img:
        return prep(img.convert("RGB"))


def export(image_root, cfg, out_path=None):
    """Embed every view under image_root; optionally write the feature CSV.

    Returns (rows, skips): rows as (category, instance_id, view_id, vector)
    tuples, skips as dicts recording unreadable images and views dropped
    entirely. Unreadable inputs are never fatal; an empty result is.
    """
    views = scan_image_tree(image_root)
    if not views:
        raise EmptyDataset(f"no view images found under {image_root!r}")
    model = build_backbone(cfg)
    prep = _preprocessor(cfg.input_resolution)
    rows = []
    skips = []
    for view in views:
        tensors = []
        for path in view.paths:
            try:
                tensors.append(_load_image(path, prep))
            except (OSError, ValueError) as exc:
                skips.append({"path": path, "error": f"{type(exc).__name__}: {exc}"})
        if not tensors:
            skips.append(
                {
                    "path": f"{view.category}/{view.instance_id}/{view.view_id}",
                    "error": "view skipped: no readable images",
                }
            )
            continue
        embeddings = embed_images(model, torch.stack(tensors), cfg.layer)
        vector = pool_embeddings(embeddings, cfg.pooling)
        if not np.all(np.isfinite(vector)):
            skips.append(
                {
                    "path": f"{view.category}/{view.instance_id}/{view.view_id}",
                    "error": "view skipped: non-finite embedding",
                }
            )
            continue
        rows.append((view.category, view.instance_id, view.view_id, vector))
    if not rows:
        raise EmptyDataset(f"no views under {image_root!r} produced an embedding")
    if out_path is not None:
        write_feature_rows(out_path, rows)
        _write_sidecar(out_path, skips)
    return rows, skips


def write_feature_rows(path, rows):
    """Write deep-feature rows in the shared CSV schema, atomically.

    Rows sort by (category, instance_id, view_id); the header is sized to
    the widest row; floats use repr so reloads round-trip exactly.
    """
    ordered = sorted(rows, key=lambda r: (r[0], r[1], r[2]))
    width = max(len(r[3]) for r in ordered)
    lines = [",".join(_FIXED_COLUMNS + tuple(f"v{i + 1}" for i in range(width)))]
    for category, instance_id, view_id, vector in ordered:
        values = ",".join(repr(float(x)) for x in vector)
        lines.append(f"{category},{instance_id},{view_id},deep,{len(vector)},{values}")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _write_sidecar(out_path, skips):
    with open(f"{out_path}.skipped.json", "w", encoding="utf-8") as fh:
        json.dump(skips, fh, indent=2, sort_keys=True)
        fh.write("\n")

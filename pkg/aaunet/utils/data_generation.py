# Synthetic ultrasound-like lesion images.

import logging
import os

import numpy as np
from PIL import Image
from scipy import ndimage

from ..data.manifest import ManifestRecord, write_manifest

logger = logging.getLogger(__name__)

def _lesion_mask(rng, h, w, irregular):
    scale = min(h, w)
    a = rng.uniform(0.12, 0.28) * scale
    b = rng.uniform(0.6, 1.0) * a
    cy = rng.uniform(0.3, 0.7) * h
    cx = rng.uniform(0.3, 0.7) * w
    theta = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    radius = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    if irregular:
        # lobulated margin
        angle = np.arctan2(v, u)
        lobes = rng.integers(3, 7)
        radius = radius / (1 + 0.2 * np.sin(lobes * angle + rng.uniform(0, 2 * np.pi)))
    return radius <= 1.0

def synth_image(rng, size=(64, 64), difficulty=0.3, min_lesions=0, max_lesions=2):
    """
    Draw one image/mask pair.

    The background has smooth intensity variation; lesions are darker
    ellipses (lobulated for malignant ones). Borders are blurred in
    proportion to `difficulty`, then multiplicative gamma speckle is applied.

    Returns
    -------
    image : uint8 array (h, w)

    mask : uint8 array (h, w) with values in {0, 255}

    label : str
        "normal" without lesions, else "benign" or "malignant"
    """
    h, w = size
    count = int(rng.integers(min_lesions, max_lesions + 1))
    label = "normal" if count == 0 else ("malignant" if rng.random() < 0.5 else "benign")
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(count):
        mask |= _lesion_mask(rng, h, w, irregular=(label == "malignant"))

    background = rng.uniform(0.55, 0.75)
    gradient = np.linspace(-0.08, 0.08, h)[:, np.newaxis] * rng.choice([-1, 1])
    clean = np.full((h, w), background) + gradient
    lesion_level = rng.uniform(0.15, 0.3)
    clean[mask] = lesion_level
    if difficulty > 0:
        clean = ndimage.gaussian_filter(clean, sigma=0.5 + 2.5 * difficulty)
    shape = 1.0 / (0.02 + 0.2 * difficulty)
    speckle = rng.gamma(shape, 1.0 / shape, size=(h, w))
    image = np.clip(clean * speckle, 0.0, 1.0)
    if mask.any() and (~mask).any() and image[mask].mean() >= image[~mask].mean():
        raise RuntimeError("Synthetic lesion is not darker than its background")
    return (np.rint(image * 255).astype(np.uint8), np.where(mask, 255, 0).astype(np.uint8),
            label)

def synth_dataset(out_dir, n, size=(64, 64), seed=0, difficulty=0.3, min_lesions=0,
        max_lesions=2):
    """
    Write n synthetic image/mask PNG pairs and a manifest.

    Parameters
    ----------
    out_dir : str
        Receives images/, masks/ and manifest.jsonl

    n : int
        Number of images, at least 1

    size : (int, int)
        Image height and width

    seed : int
        The output is a pure function of the arguments.

    difficulty : float
        In [0, 1]: 0 gives sharp borders and mild speckle.

    min_lesions, max_lesions : int
        Range of lesion counts per image.

    Returns
    -------
    Manifest
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= difficulty <= 1:
        raise ValueError("difficulty must lie in [0, 1]")
    if not 0 <= min_lesions <= max_lesions:
        raise ValueError("Need 0 <= min_lesions <= max_lesions")
    image_dir = os.path.join(out_dir, "images")
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(image_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        image, mask, label = synth_image(rng, size, difficulty, min_lesions, max_lesions)
        name = "synth_{:04d}.png".format(i)
        image_path = os.path.join(image_dir, name)
        mask_path = os.path.join(mask_dir, name)
        Image.fromarray(image).save(image_path)
        Image.fromarray(mask).save(mask_path)
        records.append(ManifestRecord(os.path.abspath(image_path), os.path.abspath(mask_path),
            label))
    manifest = write_manifest(records, os.path.join(out_dir, "manifest.jsonl"))
    logger.info("Wrote %d synthetic images to %s", n, out_dir)
    return manifest

# PNG ingestion, preprocessing to model tensors and mask/overlay export.

import csv
import logging
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage

from ..tensor import Tensor, GraphNode
from ..errors import ImageDecodeError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_SIZE = (256, 256)

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

@dataclass(frozen=True)
class Sample:
    """
    A preprocessed image with its ground truth.

    Parameters
    ----------
    id : str

    image : Tensor of shape (1, 1, h, w) with values in [0, 1]

    mask : Tensor of shape (1, 1, h, w) with values in {0, 1}, or None

    label : str
    """
    id: str
    image: Tensor
    mask: Optional[Tensor]
    label: str = "unknown"

    def __post_init__(self):
        if self.mask is not None and self.mask.shape != self.image.shape:
            raise ShapeError("Sample {} image and mask disagree".format(self.id),
                    "shape", self.image.shape, self.mask.shape)

def _open(path):
    try:
        with Image.open(path) as img:
            img.load()
            if img.width == 0 or img.height == 0:
                raise ImageDecodeError("{}: zero-area image".format(path))
            return img.copy()
    except (OSError, SyntaxError) as e:
        raise ImageDecodeError("{}: cannot decode image: {}".format(path, e))

def _to_array(x):
    if isinstance(x, (Tensor, GraphNode)):
        x = x.data
    arr = np.asarray(x)
    if arr.ndim == 4:
        if arr.shape[:2] != (1, 1):
            raise ShapeError("Expected a single-channel image", "shape", (1, 1), arr.shape[:2])
        arr = arr[0, 0]
    if arr.ndim != 2:
        raise ShapeError("Expected a 2-D image", "rank", 2, arr.ndim)
    return arr

def read_image(path, target_size=None):
    """
    Decode a grayscale or RGB PNG to luminance in [0, 1].

    RGB is converted with Rec. 601 weights; the image is resized with
    bilinear interpolation when `target_size` (h, w) differs from its size.

    Returns
    -------
    numpy array of shape (h, w)
    """
    img = _open(path)
    if img.mode != "L":
        img = img.convert("L")
    if target_size is not None and (img.height, img.width) != tuple(target_size):
        img = img.convert("F").resize((target_size[1], target_size[0]),
                Image.Resampling.BILINEAR)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return np.clip(arr, 0.0, 1.0)

def read_mask(path, target_size=None):
    """
    Decode a mask PNG to {0, 1}: pixels above 127 are foreground. Resizing
    uses nearest-neighbour interpolation.

    Returns
    -------
    numpy array of shape (h, w)
    """
    img = _open(path)
    if img.mode != "L":
        img = img.convert("L")
    if target_size is not None and (img.height, img.width) != tuple(target_size):
        img = img.resize((target_size[1], target_size[0]), Image.Resampling.NEAREST)
    return (np.asarray(img) > 127).astype(np.float64)

def load_sample(record, target_size=DEFAULT_SIZE):
    """
    Load one manifest record.

    Parameters
    ----------
    record : ManifestRecord

    target_size : (int, int) or None
        Working resolution (h, w). None keeps the native size.

    Returns
    -------
    Sample
    """
    image = read_image(record.image_path, target_size)
    mask = None
    if record.mask_path is not None:
        mask = read_mask(record.mask_path, image.shape)
    return Sample(record.id, Tensor(image[np.newaxis, np.newaxis]),
            None if mask is None else Tensor(mask[np.newaxis, np.newaxis]),
            record.label)

def load_dataset(manifest, target_size=DEFAULT_SIZE):
    samples = [load_sample(r, target_size) for r in manifest]
    logger.info("Loaded %d samples at %s", len(samples),
            "native size" if target_size is None else "{}x{}".format(*target_size))
    return samples

def write_mask(pred, path, threshold=0.5):
    """
    Binarize a probability map at `threshold` and write it as an 8-bit PNG
    with pixels in {0, 255}.
    """
    arr = _to_array(pred)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("Predictions must lie in [0, 1]")
    out = np.where(arr >= threshold, 255, 0).astype(np.uint8)
    Image.fromarray(out).save(path)

def write_probability_map(pred, path):
    """
    Write probabilities in [0, 1] as 8-bit gray levels (p * 255, rounded).
    """
    arr = np.clip(_to_array(pred), 0.0, 1.0)
    Image.fromarray(np.rint(arr * 255).astype(np.uint8)).save(path)

def boundary(mask):
    """
    Pixels of `mask` having at least one 4-neighbour outside the mask;
    pixels beyond the image edge count as outside.
    """
    mask = np.asarray(mask).astype(bool)
    eroded = ndimage.binary_erosion(mask, structure=_FOUR_CONNECTED, border_value=0)
    return mask & ~eroded

def write_overlay(image, pred, gt, path, threshold=0.5):
    """
    Write an RGB overlay: the ground-truth boundary in red and the predicted
    boundary in green, drawn over the grayscale image.
    """
    img = _to_array(image)
    pred_mask = _to_array(pred) >= threshold
    rgb = np.repeat(np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8)[..., np.newaxis],
            3, axis=2)
    rgb[boundary(pred_mask)] = (0, 255, 0)
    if gt is not None:
        rgb[boundary(_to_array(gt) > 0.5)] = (255, 0, 0)
    Image.fromarray(rgb).save(path)

def write_attention_maps(dump, out_dir, sample_id, index=0):
    """
    Export the attention maps of one image: a PNG of beta (x255) per block
    and a CSV of the alpha vectors.

    Parameters
    ----------
    dump : list of StageAttention
        As returned by `AAUNet.attention_dump`

    out_dir : str

    sample_id : str

    index : int
        Batch index of the image inside the dump.
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "{}_alpha.csv".format(sample_id))
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["block", "channel", "alpha"])
        for entry in dump:
            if entry.alpha is not None:
                for channel, value in enumerate(entry.alpha[index, :, 0, 0]):
                    writer.writerow([entry.name, channel, "{:.6f}".format(value)])
            if entry.beta is not None:
                png_path = os.path.join(out_dir, "{}_{}_beta.png".format(sample_id,
                    entry.name.replace(".", "_")))
                write_probability_map(entry.beta[index, 0], png_path)
    return csv_path

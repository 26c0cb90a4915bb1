# Dataset manifests: one JSON record per line.

import json
import logging
import os
from dataclasses import dataclass
from typing import Optional

from PIL import Image

from ..errors import ManifestError

logger = logging.getLogger(__name__)

LABELS = ("benign", "malignant", "normal", "unknown")

@dataclass(frozen=True)
class ManifestRecord:
    """
    One image/mask pair.

    Parameters
    ----------
    image_path : str
        Absolute path of the image PNG

    mask_path : str
        Absolute path of the mask PNG, or None for unlabelled images

    label : str
        One of "benign", "malignant", "normal", "unknown"

    fold : int
        Optional: predefined cross-validation fold.
    """
    image_path: str
    mask_path: Optional[str]
    label: str = "unknown"
    fold: Optional[int] = None

    @property
    def id(self):
        return os.path.splitext(os.path.basename(self.image_path))[0]

class Manifest:
    """
    An ordered collection of ManifestRecords.
    """
    def __init__(self, records, path=None):
        self.records = list(records)
        self.path = path

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def labels(self):
        return [r.label for r in self.records]

    def filter(self, label=None, exclude_normal=False):
        """
        Returns a new Manifest keeping records with `label` (if given) and
        dropping normal-class records when `exclude_normal` is set.
        """
        records = [r for r in self.records
                if (label is None or r.label == label)
                and not (exclude_normal and r.label == "normal")]
        return Manifest(records, self.path)

def _parse_record(obj, base_dir, path, line_number):
    if not isinstance(obj, dict):
        raise ManifestError("record must be a JSON object", path, line_number)
    for key in ("image_path", "mask_path"):
        if key not in obj:
            raise ManifestError("missing field '{}'".format(key), path, line_number)
    unknown = set(obj) - {"image_path", "mask_path", "label", "fold"}
    if unknown:
        raise ManifestError("unknown fields {}".format(sorted(unknown)), path, line_number)
    label = obj.get("label", "unknown")
    if label not in LABELS:
        raise ManifestError("label '{}' not in {}".format(label, LABELS), path, line_number)
    fold = obj.get("fold")
    if fold is not None and (not isinstance(fold, int) or isinstance(fold, bool) or fold < 0):
        raise ManifestError("fold must be a non-negative integer", path, line_number)
    image_path = os.path.normpath(os.path.join(base_dir, obj["image_path"]))
    mask_path = obj["mask_path"]
    if mask_path is not None:
        mask_path = os.path.normpath(os.path.join(base_dir, mask_path))
    return ManifestRecord(image_path, mask_path, label, fold)

def _check_decodable(file_path, what, path, line_number):
    if not os.path.isfile(file_path):
        raise ManifestError("{} not found: {}".format(what, file_path), path, line_number)
    try:
        with Image.open(file_path) as img:
            img.verify()
    except (OSError, SyntaxError) as e:
        raise ManifestError("cannot decode {} {}: {}".format(what, file_path, e),
                path, line_number)

def load_manifest(path, skip_normal=False, validate=True):
    """
    Parse a manifest file.

    Parameters
    ----------
    path : str
        Manifest file; relative image and mask paths are resolved against
        its directory.

    skip_normal : bool
        Drop records labelled "normal".

    validate : bool
        Check eagerly that every referenced file exists and decodes.

    Returns
    -------
    Manifest
    """
    if not os.path.isfile(path):
        raise ManifestError("manifest not found", path)
    base_dir = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError("malformed JSON: {}".format(e.msg), path, line_number)
            record = _parse_record(obj, base_dir, path, line_number)
            if skip_normal and record.label == "normal":
                continue
            if validate:
                _check_decodable(record.image_path, "image", path, line_number)
                if record.mask_path is not None:
                    _check_decodable(record.mask_path, "mask", path, line_number)
            records.append(record)
    logger.info("Loaded %d records from %s", len(records), path)
    return Manifest(records, path)

def write_manifest(records, path):
    """
    Write records with paths relative to the manifest directory.
    """
    base_dir = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            obj = {"image_path" : os.path.relpath(r.image_path, base_dir),
                    "mask_path" : (os.path.relpath(r.mask_path, base_dir)
                        if r.mask_path is not None else None),
                    "label" : r.label}
            if r.fold is not None:
                obj["fold"] = r.fold
            f.write(json.dumps(obj, sort_keys=True) + "\n")
    return Manifest(records, path)

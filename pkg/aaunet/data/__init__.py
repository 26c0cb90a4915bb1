from .manifest import LABELS, Manifest, ManifestRecord, load_manifest, write_manifest
from .images import (Sample, DEFAULT_SIZE, read_image, read_mask, load_sample, load_dataset,
        write_mask, write_probability_map, write_overlay, write_attention_maps, boundary)

from .runtime import (set_deterministic, is_deterministic, thread_limit, make_run_dir,
        RunRecord)
from .data_generation import synth_image, synth_dataset

"""Dataset construction: boundaries, cleaning, shuffled sequences, splits, metadata and synthetic scenes."""

from .meta import PROVIDERS, LabelProvision, MetaRecord, genre_shot_histogram, genre_vector, read_meta, write_meta
from .records import (
    SceneRecord,
    Shot,
    clean_shots,
    derive_seed,
    format_shot_boundaries,
    ingest_shot_boundaries,
    parse_shot_boundaries,
    write_shot_boundaries,
)
from .sequences import (
    SPLITS,
    SequenceSample,
    make_sequences,
    read_manifest,
    restored_order,
    shuffle_augment,
    split_scenes,
    write_manifest,
)
from .synth import FAMILIES, SynthParams, SynthScene, synth_scene
from .tsn import segment_bounds, tsn_sample

"""Stereo SELD toolkit: clip construction, synthetic scenes, and scoring.

Builds stereo sound event localization and detection data from first-order
Ambisonics recordings and 360 video frames (mid/side downmix, yaw rotation,
label folding, perspective crops), renders parametric synthetic FOA scenes,
and scores predictions with frame-level localization-gated F, DOA error,
relative distance error, and onscreen accuracy.
"""

from .audioio import read_wav, read_wav_mono, wav_duration_s, wav_info, write_wav
from .config import PipelineConfig, load_config
from .errors import ConfigError, ParseError, StereoSeldError, ValidationError
from .foa import (
    DEFAULT_SAMPLE_RATE,
    FoaClip,
    SphericalDirection,
    StereoClip,
    encode_plane_wave,
    foa_to_stereo,
    rotate_yaw,
    sn3d_gains,
)
from .labels import (
    CLASS_NAMES,
    LABEL_FRAME_S,
    NUM_CLASSES,
    EventRecord,
    FovConfig,
    fold_front_back,
    onscreen_flag,
    parse_metadata,
    format_metadata,
    read_metadata_file,
    rotate_azimuth,
    slice_frames,
    transform_clip_labels,
    wrap_degrees,
    write_metadata_file,
)
from .metrics import (
    Detection,
    LabelSet,
    MetricsConfig,
    MetricsReport,
    apply_distance_bias,
    class_mean_distance,
    decode_multi_accdoa,
    encode_multi_accdoa,
    match_frame,
    rank_systems,
    score,
)
from .projection import (
    ProjectionMap,
    build_map,
    frame_index_for_time,
    frames_per_clip,
    implied_vfov_deg,
    load_frame,
    lonlat_to_pixel,
    pixel_to_lonlat,
    project,
    save_frame,
)
from .sampler import (
    ClipSpec,
    IndexEntry,
    RecordingIndex,
    read_index,
    read_manifest,
    sample_clips,
    write_index,
    write_manifest,
)
from .spatializer import (
    Keyframe,
    ReverbConfig,
    SampleBank,
    SceneEvent,
    SceneSpec,
    make_ambient,
    make_random_scene,
    read_scene,
    render_scene,
    write_scene,
)

__version__ = "0.1.0"

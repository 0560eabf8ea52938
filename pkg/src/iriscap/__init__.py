"""IrisCode encoding, shifted Hamming matching and constrained-capacity estimation."""

__version__ = "0.1.0"

from .capacity import (
    CalibratedThreshold,
    CapacityResult,
    IdentityErrorRecord,
    calibrate_threshold,
    capacity_curve,
    compute_frr,
    constrained_capacity,
    count_false_accepts,
)
from .dataset import (
    EnrollmentPlan,
    QualityPolicy,
    SampleRecord,
    apply_quality_policy,
    build_plan,
    enumerate_pairs,
    load_manifest,
)
from .encoder import FilterBank, NormalizedTexture, build_filter_bank, encode, quantize_phase
from .engine import SystemConfig, resume, run_nn
from .matcher import (
    MatchScore,
    ShiftSpec,
    hamming_distance,
    match_score,
    match_with_elimination,
    pair_seed,
)
from .store import ScoreStore
from .synth import PopulationParams, derive_genuine_sample, generate_population, measure_entropy
from .template import (
    FEATURE_LEVELS,
    ColumnSet,
    PackedTemplate,
    TemplateGeometry,
    eliminate_columns,
    load_template,
    pack_template,
    sample_column_set,
    save_template,
    stack_resolutions,
    strip_boundaries,
)

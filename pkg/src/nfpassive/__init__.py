"""Near-field multi-transmitter passive imaging with coherent multi-frequency combination.

Simulate planar scattered-field data (:mod:`.forward`), image each
transmitter and frequency by plane-wave-spectrum backpropagation
(:mod:`.pws`), superpose the images (:mod:`.combine`) and score them
(:mod:`.analysis`).  :mod:`.scenarios` wires the stages into a pipeline.
"""

from .analysis import (
    GroundTruthMask,
    MetricsReport,
    TxEstimate,
    coverage,
    ghost_to_target_ratio,
    mip,
    normalized_entropy,
    peak_sidelobe_ratio,
    peak_to_artifact_ratio,
    score_image,
    tx_localize,
)
from .combine import CombinedImage, coherent_combine, incoherent_combine, subset_combine
from .forward import (
    MeasurementDataCube,
    PointScatterer,
    ReflectivePlate,
    SceneDescription,
    dipole_field,
    mirror_source,
    simulate,
)
from .grids import (
    C0,
    FieldComponent,
    FrequencyGrid,
    ImagingVolume,
    MeasurementPlane,
    SamplingWarning,
    TxSource,
    make_frequency_grid,
)
from .pws import ImageSet, backpropagate, pws_decompose, pws_recompose, single_frequency_image
from .scenarios import ConfigError, ScenarioConfig, parse_config, preset, run_pipeline

__version__ = "0.1.0"

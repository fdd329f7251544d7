"""Proxy-based video object segmentation with a perturbation-robustness benchmark.

Objects from reference frames are summarized as cluster-centroid proxies
at several granularities, matched into the target frame by bounded L2
similarity, decoded through a modulation-conditioned calibration
cascade, and merged by argmax. A perturbation suite and J/F-based
robustness metrics round out the benchmark side.
"""

from .calibration import (
    CascadeConfig,
    aggregate_others,
    cascade_calibrate,
    conditional_decode,
    conditioning_layer,
    confidence_gate,
    discriminative_condition_code,
    merge_masks,
)
from .correlation import (
    SimilarityStack,
    generate_proto_map,
    l2_similarity,
    nearest_proxy_classify,
    similarity_map,
    similarity_stack,
)
from .encoder import EncoderConfig, encode
from .errors import ConfigError, DataError, DimensionError, FormatError
from .grids import (
    ConditionCode,
    FeatureMap,
    Image,
    LabelMask,
    bilinear_resize,
    channel_concat,
    channelwise_modulate,
    downsample_mask,
    elementwise_mask,
    global_avg_pool,
)
from .metrics import (
    RobustnessReport,
    SequenceScore,
    after_perturbation_accuracy,
    boundary_f,
    jf_mean,
    perturbation_robustness,
    region_j,
    split_scores,
    temporal_decay_curve,
)
from .perturb import (
    PerturbationSpec,
    gaussian_blur,
    gaussian_noise,
    perturb_dataset,
    salt_pepper,
)
from .pipeline import (
    PipelineConfig,
    ReferenceSchedule,
    propagate_sequence,
    select_references,
)
from .proxies import (
    K_FULL,
    ClusterResult,
    ClusterSchedule,
    ProxyEntry,
    ProxySet,
    build_adaptive_proxy,
    build_grid_proxy,
    build_proxy_entry,
    kmeans,
    object_embedding,
)
from .weights import ParamSpec, WeightBundle, WeightStore, init_weights

__version__ = "0.1.0"

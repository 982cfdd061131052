"""Cross-modal modulator: token-grid correlation, top-k retention, gated FiLM
and state-space mixing, with attention baselines and a scaling harness."""

from .baselines import (
    CrossAttentionWeights,
    PrependWeights,
    attention_core,
    cross_attention_forward,
    prepend_forward,
)
from .block import CmmTrace, CmmWeights, FusionOutput, cmm_forward, cmm_trace
from .config import CmmConfig
from .correlation import (
    CorrelationScores,
    CorrelationWeights,
    aggregate_context,
    apply_topk,
    correlate,
    merge_heads,
    project_shared,
    split_heads,
)
from .errors import CmmError, CorruptionError, FormatError, ParameterError, ShapeError, UsageError
from .film import FilmWeights, film_generate, film_in, film_out
from .fixtures import (
    SyntheticInputs,
    generate_baseline_weights,
    generate_inputs,
    generate_weights,
    load_bundle,
    save_bundle,
)
from .ssm import (
    DiagonalSsmParams,
    SelectiveScanParams,
    SsmBackend,
    discretize_zoh,
    selective_scan,
    ssm_conv,
    ssm_kernel,
    ssm_scan_recurrent,
)

__version__ = "0.1.0"

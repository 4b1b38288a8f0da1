"""stkit: spatio-temporal grounding toolkit.

Coordinate special-token codec, coordinate-token positional grids,
two-stage point-to-region feature packing, tube/span/box evaluation
metrics, and a deterministic instruction-sample forge, plus a CLI.
"""

from .codec import (
    BBox,
    CoordToken,
    CoordVocab,
    SpatioTemporalTube,
    TemporalSpan,
    decode_box,
    decode_span,
    decode_tube,
    dequantize,
    encode_box,
    encode_span,
    encode_tube,
    extended_vocab_index,
    parse_tokens,
    quantize,
    render_token,
)
from .kernels import (
    active_backend,
    linear_interp_resize,
    matmul,
    mean_pool_regions,
    scaled_dot_attention,
    set_backend,
    softmax_lastdim,
)
from .metrics import (
    MetricReport,
    PredictionRecord,
    aggregate,
    box_iou,
    s_iou,
    temporal_iou,
)
from .packer import (
    PackerConfig,
    PackerParams,
    flatten_tokens,
    point_region_attention,
    sample_frame_indices,
    spatial_pack,
    temporal_pack,
    two_stage_pack,
)
from .posembed import (
    EmbeddingTables,
    apply_position,
    output_distribution,
    position_grid,
    resize_grid,
    resize_grid_image,
)
from .tensorio import load_tensor, save_tensor

__version__ = "0.1.0"

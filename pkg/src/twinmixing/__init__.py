"""TwinMixing: a lightweight multi-task segmentation network on CPU.

A shared encoder built from Efficient Pyramid Mixing modules feeds two
task decoders (drivable area, lane markings) made of Dual Branch
Upsampling blocks.  The package ships the forward engine, a
parameter/FLOP analyzer, the hybrid Focal + Tversky objective with
analytic gradients, INT8 quantization simulation, and file formats plus
a CLI around them.
"""

from .analysis import (
    ComplexityReport,
    CostRow,
    MetricReport,
    complexity_report,
    confusion_matrix,
    count_flops,
    count_params,
    metrics_from_confusion,
    seg_metrics,
)
from .blocks import (
    DbuSpec,
    DbuWeights,
    EpmModuleSpec,
    EpmModuleWeights,
    EpmUnitSpec,
    EpmUnitWeights,
    PcaaLiteSpec,
    PcaaLiteWeights,
    dbu,
    epm_module,
    epm_unit,
    group_count,
    hff_merge,
    make_epm_module_spec,
    make_epm_unit_spec,
    pcaa_lite,
    spatial_softmax,
)
from .errors import ConfigError, ImageFormatError, ShapeError, WeightFormatError
from .kernels import (
    BnActParams,
    ConvSpec,
    ConvWeights,
    avg_pool,
    bilinear_upsample_x2,
    bn_act,
    channel_shuffle,
    conv2d,
    same_padding,
    transposed_conv2d,
)
from .losses import (
    DRIVABLE_PRESET,
    LANE_PRESET,
    LossParams,
    ProbMap,
    focal_loss,
    grad_check,
    prob_map_from_logits,
    task_loss,
    total_loss,
    tversky_loss,
)
from .model import (
    ModelConfig,
    ModelGraph,
    WeightStore,
    build_model,
    forward,
    load_config,
    random_init,
    run_encoder,
    save_config,
    validate_store,
    zero_init,
)
from .quant import QuantParams, calibrate, quant_dequant, quantize_model
from .tensor import (
    Shape,
    add,
    concat_channels,
    coords_of,
    elementwise_combine,
    freeze,
    mul,
    offset_of,
    slice_channels,
    tensor,
)
from .weights_io import load_weights, read_raw, save_raw, save_weights

__version__ = "0.1.0"

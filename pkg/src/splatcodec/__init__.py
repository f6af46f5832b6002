"""splatcodec: an entropy codec for pre-trained 3D Gaussian Splatting models.

The pipeline quantizes each attribute channel on a min-max grid whose depth
depends on the attribute group's error sensitivity, fits a parametric
probability model per channel (Laplace for SH AC, small Gaussian mixtures
for rotation/scaling/opacity, empirical for SH DC), and range-codes every
channel independently against the model's fixed-point PMF. Geometry plus
SH DC travel as a colored point cloud in canonical Morton order. The result
is lossless at the chosen quantization precision.

Typical use::

    from splatcodec import load_ply, encode, decode, save_ply

    cloud = load_ply("scene.ply")
    blob = encode(cloud, preset="M")
    save_ply(decode(blob), "scene_roundtrip.ply")
"""

from .container import (
    ContainerInfo,
    SizeReport,
    decode,
    encode,
    parse_header,
    size_report,
)
from .errors import (
    CodecError,
    CorruptStreamError,
    FormatError,
    UnsupportedFormatError,
    ValidationError,
)
from .fitting import (
    GmmParams,
    LaplaceParams,
    Pmf,
    discretize_pmf,
    fit_empirical,
    fit_gmm,
    fit_laplace,
    refine_laplace_binned,
)
from .model import AttributeGroup, GaussianCloud, channel, load_ply, save_ply
from .pccodec import (
    CanonicalOrder,
    canonical_sort,
    decode_geometry,
    encode_geometry,
    encode_shdc,
    decode_shdc,
    morton_code,
    morton_decode,
)
from .pruning import (
    geometry_prune,
    importance_prune,
    proxy_importance,
    pruned_count,
    rectify_shac,
)
from .quantize import (
    PRESETS,
    QuantGrid,
    RatePreset,
    apply_grid,
    dequantize_channel,
    quantize_channel,
    sensitivity_sweep,
)
from .rangecoder import (
    CodedPayload,
    adaptive_byte_decode,
    adaptive_byte_encode,
    decode_symbols,
    encode_symbols,
)
from .stats import (
    Histogram,
    NmiMatrix,
    histogram,
    nmi,
    nmi_heatmap,
    shannon_entropy,
)
from .synthetic import synthetic_cloud

__version__ = "0.1.0"

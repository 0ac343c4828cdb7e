"""Desk-scale building blocks of an anatomy-guided two-branch classifier:
a small autodiff tensor core, grouped multi-head self-attention with an
analytic cost model, a progressive attention branch, channel-block branch
fusion, polynomial curve-fit boundary segmentation, and the evaluation
metric suite, all behind a deterministic CLI.
"""

from ._kernels import BACKEND
from .attention import (AttentionConfig, GroupedAttentionParams, group,
                        grouped_attention, merge, unit_attention)
from .cost import (CostReport, count_ops_instrumented, flops_gmhsa_per_unit,
                   flops_gmhsa_total, flops_mhsa, sweep)
from .curvefit import (AnatomyFeature, LandmarkSet, PolynomialCurve,
                       anatomy_feature, compose_input, curve_to_pointset,
                       fit_polynomial, rasterize, rotate_points,
                       rotation_angle)
from .errors import (ConfigurationError, DegenerateInputError, DimensionError,
                     FittingError, InsufficientDataError, RadixnetError,
                     UsageError)
from .fusion import (BranchScores, FusionConfig, align_spatial, block_scores,
                     fuse, top_half_blocks)
from .metrics import (ConfusionMatrix, SurfacePointSet, asd,
                      classification_metrics, hd95, paired_t_test_one_tail,
                      roc_auc)
from .model import (ModelConfig, forward_classify, init_model_params,
                    parameter_count)
from .progressive import (ProgressiveConfig, StageSpec, default_schedule,
                          progressive_forward)
from .tensor import (GradRecord, Tensor, add, avg_pool2d, backward,
                     concat_channels, global_avg_pool, grouped_conv2d, matmul,
                     mul, relu, reshape, sigmoid, softmax, take_channels,
                     transpose2d, tsum)

__version__ = "0.1.0"

# making source code directory a module

# SPDX-License-Identifier: Apache-2.0

__version__ = "1.0.0"

from .errors import (
    BpdqError,
    ConfigError,
    FormatError,
    NonFiniteError,
    NumericalError,
    OracleSizeError,
    PreconditionError,
    ShapeError,
    SingularHessianError,
    SingularMatrixError,
    TensorIOError,
    TruncatedError,
)
from .tensorio import RunConfig, load_tensor, save_tensor, synth_layer
from .linalg import HessianState, hessian_from_activations, inverse_cholesky_factor, wls_fit
from .solver import (
    GroupState,
    SolveReport,
    bpdq_quantize_layer,
    gptq_quantize_layer,
    objective,
    rtn_quantize_layer,
    solve_group,
)
from .kernel import (
    QuantizedLayer,
    bits_per_weight,
    bits_per_weight_fixed,
    dequantize,
    lut_matvec,
    pack,
    unpack,
)

"""Activation-function laboratory on a small numpy autodiff engine."""

from .activations import (
    ACTIVATION_NAMES,
    Activation,
    ActivationKind,
    activation_derivative,
    apply_activation,
    gelu_derivative_exact,
    gelu_derivative_tanh,
    gelu_exact,
    gelu_tanh,
    make_activation,
)
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionError,
    FormatError,
    IngestionError,
    InternalError,
    NonFiniteError,
    ParameterError,
)
from .normalization import NormLayer
from .resnet import Network, NetworkConfig, build_network
from .tensor import Tensor, backward, conv2d, grad, no_grad

__version__ = "0.1.0"

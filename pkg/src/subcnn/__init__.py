"""subcnn: subband-decomposition CNN micro-framework.

Trainable filter-bank frontends (adaptive, complementary-adaptive, and
fixed-wavelet subband decomposition) feeding per-subband or stacked-subband
CNNs, with an analytic op-count cost model, a quantization-robustness
harness, and a frequency-response analyzer. NumPy throughout, with numba
jitted convolution kernels selected by SUBCNN_BACKEND (numba|numpy).
"""

from .backend import backend_name, get_backend
from .config import load_config, load_config_text, preset_names
from .cost import CostReport, model_cost, reduction
from .frontend import FrontendSpec, FrontendState, decompose, frontend_backward, frontend_init, frequency_response
from .model import Model, ModelConfig, build_model, model_backward, model_forward, parameter_count
from .quant import quant_sweep, quantize_input, quantize_weights_tensor
from .train import OptimizerState, evaluate, lr_schedule, sgd_step, train_epoch

__version__ = "0.1.0"

__all__ = [
    "backend_name", "get_backend",
    "load_config", "load_config_text", "preset_names",
    "CostReport", "model_cost", "reduction",
    "FrontendSpec", "FrontendState", "decompose", "frontend_backward",
    "frontend_init", "frequency_response",
    "Model", "ModelConfig", "build_model", "model_backward", "model_forward",
    "parameter_count",
    "quant_sweep", "quantize_input", "quantize_weights_tensor",
    "OptimizerState", "evaluate", "lr_schedule", "sgd_step", "train_epoch",
    "__version__",
]

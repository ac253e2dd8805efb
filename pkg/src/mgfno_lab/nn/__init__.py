from .adam import AdamState, adam_step
from .layers import (
    LinearLayer,
    SpectralConvLayer,
    fourier_layer,
    linear_init,
    mlp,
    phi_activation,
    spectral_conv,
    spectral_init,
)

__all__ = [
    "AdamState",
    "adam_step",
    "LinearLayer",
    "SpectralConvLayer",
    "fourier_layer",
    "linear_init",
    "mlp",
    "phi_activation",
    "spectral_conv",
    "spectral_init",
]

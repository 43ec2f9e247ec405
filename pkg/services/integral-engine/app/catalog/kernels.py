"""Named kernels and inline kernel definitions."""

import re

import numpy as np
from shared.exceptions import ConfigurationError
from shared.schemas import KernelSpec

from app.catalog.expressions import kernel_function
from app.services.kernels import Kernel, KernelDomain, separable_kernel

_NAME = re.compile(r"^([a-z-]+)(?:\((.*)\))?$")

KERNEL_NAMES = (
    "identity",
    "convolution-exp",
    "ramp",
    "separable-cos",
    "fredholm-periodic",
)


def _identity_blocks(values: np.ndarray, d: int) -> np.ndarray:
    """Scalar samples times the d x d identity."""
    return values[..., None, None] * np.eye(d)


def _parameter(name: str, raw: str | None, default: float) -> float:
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise ConfigurationError(f"Kernel '{name}' expects a numeric parameter, got '{raw}'") from e


def parse_kernel_name(text: str) -> tuple[str, str | None]:
    """Split 'name(param)' into its parts."""
    match = _NAME.match(text.strip())
    if match is None or match.group(1) not in KERNEL_NAMES:
        raise ConfigurationError(
            f"Unknown kernel '{text}'. Known kernels: {', '.join(KERNEL_NAMES)}"
        )
    return match.group(1), match.group(2)


def build_kernel(text: str, T: float, d: int) -> Kernel:
    """
    Catalog kernel by name.

    - identity: k = Id on the triangle
    - convolution-exp(lam): k = exp(-lam (t - s)) Id with its exact time derivative
    - ramp: k = (t - s) Id (singular diagonal)
    - separable-cos: k = (1 + cos(2 pi t / T) / 2) Id on the square
    - fredholm-periodic: k = (1 + cos(2 pi (t - s) / T) / 2) Id on the square

    Raises:
        ConfigurationError: For an unknown name or a bad parameter
    """
    name, raw = parse_kernel_name(text)
    label = text.strip()
    if name == "identity":
        return Kernel(
            KernelDomain.TRIANGLE,
            d,
            T,
            fn=lambda t, s: _identity_blocks(np.ones_like(t - s), d),
            dt_fn=lambda t, s: _identity_blocks(np.zeros_like(t - s), d),
            label=label,
        )
    if name == "convolution-exp":
        lam = _parameter(name, raw, 1.0)
        return Kernel(
            KernelDomain.TRIANGLE,
            d,
            T,
            fn=lambda t, s: _identity_blocks(np.exp(-lam * (t - s)), d),
            dt_fn=lambda t, s: _identity_blocks(-lam * np.exp(-lam * (t - s)), d),
            label=label,
        )
    if name == "ramp":
        return Kernel(
            KernelDomain.TRIANGLE,
            d,
            T,
            fn=lambda t, s: _identity_blocks(t - s, d),
            dt_fn=lambda t, s: _identity_blocks(np.ones_like(t - s), d),
            label=label,
        )
    if name == "separable-cos":
        return separable_kernel(
            lambda t: _identity_blocks(1.0 + np.cos(2.0 * np.pi * t / T) / 2.0, d),
            lambda s: _identity_blocks(np.ones_like(s), d),
            KernelDomain.SQUARE,
            T,
            d,
            label=label,
        )
    return Kernel(
        KernelDomain.SQUARE,
        d,
        T,
        fn=lambda t, s: _identity_blocks(1.0 + np.cos(2.0 * np.pi * (t - s) / T) / 2.0, d),
        label=label,
    )


def kernel_from_spec(spec: KernelSpec, T: float, d: int) -> Kernel:
    """Resolve a kernel section: catalog name or inline entries."""
    if spec.name is not None:
        return build_kernel(spec.name, T, d)
    assert spec.entries is not None
    fn = kernel_function(spec.entries, T, d)
    dt_fn = kernel_function(spec.dt_entries, T, d) if spec.dt_entries else None
    return Kernel(KernelDomain(spec.domain), d, T, fn=fn, dt_fn=dt_fn, label="inline")

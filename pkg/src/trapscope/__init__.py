"""trapscope: numerical certification of higher-order trap behaviour of the
zero control for strongly degenerate ladder quantum control systems."""

from .controls import (
    PiecewiseControl,
    constant,
    inner,
    integral,
    norm,
    project_mean_zero,
    random_direction,
    read_control_file,
    sample_midpoints,
    write_control_file,
    zero,
)
from .dynamics import (
    DysonForms,
    closed_form_AlN,
    dyson_forms,
    dyson_resum_defect,
    kernel_bruteforce_A1N,
    kernel_form_A1N,
    objective,
    propagate,
)
from .errors import TrapscopeError
from .landscape import (
    CertificateConfig,
    LieAlgebraResult,
    TaylorFit,
    TrapReport,
    differential,
    lie_rank,
    order_2N2_value,
    taylor_fit,
    trap_certificate,
    witness_search,
)
from .model import (
    Observable,
    ProblemInstance,
    SystemSpec,
    build_instance,
    build_observable,
    build_system,
    interaction_element,
    v_power_element,
)
from .numerics import expm_mih, hermitian_eig, unitarity_defect

__version__ = "0.1.0"

__all__ = [
    "CertificateConfig",
    "DysonForms",
    "LieAlgebraResult",
    "Observable",
    "PiecewiseControl",
    "ProblemInstance",
    "SystemSpec",
    "TaylorFit",
    "TrapReport",
    "TrapscopeError",
    "build_instance",
    "build_observable",
    "build_system",
    "closed_form_AlN",
    "constant",
    "differential",
    "dyson_forms",
    "dyson_resum_defect",
    "expm_mih",
    "hermitian_eig",
    "inner",
    "integral",
    "interaction_element",
    "kernel_bruteforce_A1N",
    "kernel_form_A1N",
    "lie_rank",
    "norm",
    "objective",
    "order_2N2_value",
    "project_mean_zero",
    "propagate",
    "random_direction",
    "read_control_file",
    "sample_midpoints",
    "taylor_fit",
    "trap_certificate",
    "unitarity_defect",
    "v_power_element",
    "witness_search",
    "write_control_file",
    "zero",
]

"""Weight-controlled DC flow networks: flows, sensitivities and robustness margins."""

from dcflowctl.netcore import (
    FlowState,
    Network,
    NetworkError,
    feasibility_class,
    flow_bound_check,
    incidence,
    laplacian,
    pinv_laplacian,
    remove_circulations,
    solve_flow,
)

__all__ = [
    "FlowState",
    "Network",
    "NetworkError",
    "feasibility_class",
    "flow_bound_check",
    "incidence",
    "laplacian",
    "pinv_laplacian",
    "remove_circulations",
    "solve_flow",
]

__version__ = "0.1.0"

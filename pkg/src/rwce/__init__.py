"""Random walks in changing environments.

Graph families and balls live in :mod:`rwce.graphs`, network solves in
:mod:`rwce.electrical`, environment dynamics and slowness diagnostics in
:mod:`rwce.environment`, simulation and exact path laws in
:mod:`rwce.walker`, and the batch front-end in :mod:`rwce.cli`.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .graphs import (Ball, GraphFamily, Network, ball, box_grid, collapse_boundary, explicit,  # noqa: F401
                     geometric_weights, grid2d, line, make_family, read_edge_list, split_at_origin, tree,
                     triangle, triangle_with_tail)
from .electrical import (effective_resistance, flow_energy, perturbation_bound, resistance_profile,  # noqa: F401
                         return_probability, solve_voltage, unit_current, voltage_difference_identity)
from .environment import (BumpEnvironment, LinearlyReinforced, ListSchedule, OnceReinforced,  # noqa: F401
                          RandomSchedule, ScheduledEnvironment, StaticEnvironment, ratio_certificate,
                          run_environment, slowness_report)
from .walker import (classify, exact_law, frozen_process_check, nonadaptive_equivalence,  # noqa: F401
                     one_step_martingale_check, simulate, transition_distribution)

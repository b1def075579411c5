"""Generalized incompressible flows by penalized discrete geodesics and semi-discrete transport."""

from .analysis import (GeneralizedFlow, Trajectory, box_dimension, covering_radius_check, extract_flow,
                       farthest_point_sampling, h1_inner, incompressibility_residual, kmeans,
                       pressure_field)
from .domain import (DiscreteMap, Domain, Partition, PartitionError, build_partition, make_domain,
                     pushforward, sample_map, unit_disk, unit_square)
from .energy import Chain, EnergyBreakdown, energy, energy_grad
from .flows import (beltrami_flow, brenier_disk_sampler, classical_threshold, get_flow, integrate_map,
                    rotation_flow)
from .geom2d import LaguerreDiagram, cell_moments, power_cell, power_diagram
from .optimizer import SolveConfig, minimize, refine, stationarity_residual
from .sdot import DiagonalError, TransportError, dist2_S, grad_dist2_S, solve_dual

__version__ = "0.1.0"

"""Distributed (Delta - k + 1)-coloring via shattering, simulated at desk scale."""
from .core import (UNCOLORED, AnalysisConstants, DESK_OVERRIDES, Graph, NodeRng, PartialColoring, k_delta,
                   min_colors, palette, read_graph, slack, write_graph)
from .decomposition import (CliqueInfo, Decomposition, GenParams, ValidationReport, certificate_check, generate,
                            read_decomposition, validate, write_decomposition)
from .errors import (ArtifactError, CapacityError, ContractViolation, DomainError, HallViolation, InfeasibleParams,
                     InvariantBreach, StageAbort, StructuralError)
from .pipeline import RunConfig, RunReport, flagship_params, run_batch, run_pipeline

__version__ = "0.1.0"

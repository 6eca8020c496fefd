"""Spectral desk-scale simulator for the conformally modulated biharmonic
map flow from the flat 4-torus into round spheres."""

from .lattice import Grid4, Jet, make_grid, integrate, jet, window
from .target import SphereTarget, project_point, tangential, \
    second_fundamental_form, tangency_defect, SphereDepartureError
from .flow import (FlowParams, FlowState, ConformalState, bienergy, density,
                   rhs_projection, rhs_explicit_b, stability_dt, step,
                   step_imex, conformal_update_quadrature,
                   conformal_update_ode, gradient_check)
from .fixedpoint import PicardWindow, DiscreteNorms, picard_iterate, \
    picard_window, s1_solve, s2_solve, NonContractionError
from .diagnostics import (DiagRecord, ConcentrationConfig, record,
                          concentration, energy_identity_residual,
                          volume_identity_residual, epu_growth_check,
                          matrix_lemma_check)

__version__ = "0.1.0"

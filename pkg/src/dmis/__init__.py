"""PINN training with dynamic mesh-based importance sampling.

Subpackages: autodiff (tape + Taylor jets), mlp (tanh network), problems
(benchmark PDEs), mesh (Delaunay interpolation), sampler (importance
sampling), training (Adam loop), refsolve (ground-truth grids), metrics
(errors and convergence), cli (batch entry point).
"""

__version__ = "1.0.0"

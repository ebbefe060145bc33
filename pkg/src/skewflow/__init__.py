"""Binormal and skew-mean-curvature flow toolkit.

Submodules:
    diffgeo    discrete extrinsic geometry on periodic grids
    filament   closed-curve binormal flow and its 1D companions
    sphereprod exact reduced dynamics of sphere products
    membrane   grid evolution of 2D membranes in R^4 with diagnostics
    cli        command-line front end
    validate   the oracle/acceptance suite
"""

__version__ = "0.1.0"

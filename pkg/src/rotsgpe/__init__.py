"""Stochastic projected Gross-Pitaevskii simulations of rotating Bose gases.

Submodules
----------
basis
    Rotating-frame Laguerre-Gaussian basis, energy cutoff and the mixed
    Gauss-Laguerre/Fourier transforms used for the projected nonlinear term.
reservoir
    Ideal-gas thermodynamics of the non-condensate band and reservoir rates.
sampler
    Truncated-Wigner initial states of the rotating ideal gas.
dynamics
    Simple-growth SGPE right-hand side and the stochastic RK4 integrator.
analysis
    Penrose-Onsager condensate, vortex detection and pair histograms.
cli
    Configuration, persistence and the command line entry point.
"""

__version__ = "0.1.0"

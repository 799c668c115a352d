"""Monte Carlo simulation of a linear Boltzmann velocity-jump process in a
two-dimensional strip with reflecting obstacles, with a finite-difference
Laplace reference and residence-time analysis."""
from .geometry import Disk, DomainConfig, Rect, StripSpec, first_hit, reflect, validate
from .scattering import KernelParams, diffusion_coefficient, sample_entry, scatter
from .rng import RngStream, derive_seed
from .density import GridSpec, ScalarField, SojournGrid, normalize, relative_error
from .transport import BatchResult, RegionDecomposition, run_batch, simulate_particle
from .laplace import SolverSettings, flux_through, solve
from .analysis import SweepSpec, local_residence_map, region_times, run_sweep

__version__ = "0.1.0"

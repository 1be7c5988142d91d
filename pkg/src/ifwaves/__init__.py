"""Travelling waves, stability and bifurcations in an integrate-and-fire network."""

from .model import CoarseWave, Domain, ModelParams, ProfileSample, Stimulus, alpha, kernel_w
from .profiles import (profile_nu, profile_nu_prime, profile_sigma, psi,
                       stability_entry_M)
from .solver import (SolveOptions, WaveRecord, compatibility_m1, find_m1_speed,
                     seed_composite, seed_from_simulation, solve_wave, wave_family)
from .stability import (RootWindow, StabilityReport, build_matrices, classify,
                        evaluate_E, find_roots, linearized_apply)
from .continuation import (Branch, ContinuationOptions, GrazingPoint, HopfPoint,
                           continue_branch, grazing_scaling_study, solve_grazing,
                           solve_hopf)
from .simulate import (NetworkTrajectory, SpeedStats, fit_saltatory_amplitude,
                       simulate, track_levelset)

__version__ = "0.1.0"

"""Quantum-limited force estimation with a damped oscillator in a structured bath.

Natural units throughout: the oscillator frequency, hbar and k_B are 1.
"""

from nmforce.bath import BathSpec, KernelTable, memory_kernel, noise_kernel, nu_moments, tabulate_kernels
from nmforce.volterra import GreenTable, green_table, series_coefficients, solve_green
from nmforce.dynamics import (
    CONSTANT,
    RESONANT,
    CovarianceState,
    ForceShape,
    NoiseMoments,
    SqueezeParams,
    accumulate_noise_moments,
    covariance_markovian,
    covariance_nonmarkovian,
    markovian_response,
    response_vector,
)
from nmforce.qfi import (
    Bath,
    QfiResult,
    gaussian_fidelity,
    homodyne_sensitivity,
    optimize_theta,
    qfi,
    qfi_from_fidelity,
)
from nmforce.protocol import (
    ProtocolConfig,
    ProtocolResult,
    ProtocolScan,
    asymptotic_qfi,
    fit_scaling,
    optimize_protocol,
    sequential_qfi,
    total_energy_view,
)

__version__ = "0.1.0"

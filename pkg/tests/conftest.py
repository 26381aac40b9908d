import numpy as np
import pytest

from fibercavity import SystemParams, from_two_pi_mhz


@pytest.fixture
def measured_params() -> SystemParams:
    """Rates of the characterized system: kappa = 2pi x 6.4 MHz total,
    gamma = 2pi x 2.6 MHz, g = 2pi x 7.8 MHz."""
    return SystemParams(
        kappa1=from_two_pi_mhz(0.12),
        kappa2=from_two_pi_mhz(3.08),
        kappa_loss=from_two_pi_mhz(3.2),
        gamma=from_two_pi_mhz(2.6),
        g=from_two_pi_mhz(7.8),
    )


@pytest.fixture
def critical_params(measured_params) -> SystemParams:
    """Same rates with kappa2 set exactly to kappa1 + kappa_loss."""
    import dataclasses

    return dataclasses.replace(
        measured_params,
        kappa2=measured_params.kappa1 + measured_params.kappa_loss,
    )


def grid_peak_detunings(params, span, step):
    """Brute-force transmission maxima by dense grid search (test oracle)."""
    from fibercavity import transmission

    deltas = np.arange(-span, span + step, step)
    values = transmission(params, deltas)
    interior = (values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:])
    return deltas[1:-1][interior]

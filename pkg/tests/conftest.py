import math

import numpy as np
import pytest

from nfldp.model import homogeneous_bistable_model, scalar_model, scalar_reduction
from nfldp.cli import named_states
from nfldp.noise import NoiseConfig
from nfldp.quasipotential import kramers_scalar
from nfldp.simulate import ExitExperiment, first_exit

LADDER_RATIOS = (3.0, 4.0, 5.0)
LADDER_PATHS = 1000


@pytest.fixture(scope="session")
def scalar_setup():
    """N = 1 restriction of the homogeneous bistable model with its potential and states."""
    full = homogeneous_bistable_model(d=1, cutoff=8)
    model = scalar_model(full)
    states = named_states(model)
    pot = scalar_reduction(model)
    lam0 = float(model.basis.lambdas[0])
    return {"model": model, "states": states, "potential": pot, "lambda0": lam0,
            "noise": NoiseConfig(model.basis, 1.0, seed=2024)}


@pytest.fixture(scope="session")
def scalar_exit_ladder(scalar_setup):
    """First exits from the lower well for barrier/(eps^2 lambda0^2) in LADDER_RATIOS."""
    s = scalar_setup
    low, mid = s["states"]["lower"], s["states"]["middle"]
    radius = 0.98 * float(np.linalg.norm(mid.u_star - low.u_star))
    barrier = kramers_scalar(s["potential"], s["lambda0"], 1.0)["barrier"]
    rows = []
    for ratio in LADDER_RATIOS:
        eps = math.sqrt(2 * barrier / ratio) / s["lambda0"]
        kr = kramers_scalar(s["potential"], s["lambda0"], eps)
        exp = ExitExperiment(low, radius, (eps,), LADDER_PATHS, 20 * kr["mean"])
        tau, cens = first_exit(exp, s["model"], s["noise"], eps, threads=4)
        rows.append({"ratio": ratio, "epsilon": eps, "kramers": kr, "tau": tau, "censored": cens})
    return {"radius": radius, "barrier": barrier, "rows": rows}

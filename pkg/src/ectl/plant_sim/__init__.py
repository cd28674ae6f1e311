"""Plant models, error bounds, parameter design and closed-loop runs."""
from .bounds import (BoundInputs, DesignError, design_parameters, estimate_eta, eval_alpha_prime,
                     eval_beta, eval_gamma, eval_theta, inf_norm)
from .plant import PlantLti, discretize_zoh
from .runner import (EncryptedLoop, EquivalenceError, IdealLoop, IntegerLoop, LocalLink,
                     RingLoop, Trace, run_closed_loop)

__all__ = [
    "BoundInputs", "DesignError", "design_parameters", "estimate_eta", "eval_alpha_prime",
    "eval_beta", "eval_gamma", "eval_theta", "inf_norm", "PlantLti", "discretize_zoh",
    "EncryptedLoop", "EquivalenceError", "IdealLoop", "IntegerLoop", "LocalLink", "RingLoop",
    "Trace", "run_closed_loop",
]

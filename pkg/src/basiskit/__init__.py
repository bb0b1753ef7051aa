"""basiskit: communication-efficient Newton-type federated optimization
with matrix-basis Hessian encoding, compression operators with
certified class parameters, and exact bit accounting."""

__version__ = "0.1.0"

from . import algorithms, basis, compressors, dataio, harness, linalg, problems
from .dataio import RunConfig, load_config
from .harness import Experiment, cost_report, run
from .verification import verify

__all__ = [
    "algorithms", "basis", "compressors", "dataio", "harness", "linalg",
    "problems", "RunConfig", "load_config", "Experiment", "cost_report",
    "run", "verify", "__version__",
]

"""sdiqrng: simulator and post-processing toolkit for a source-device-independent
continuous-variable quantum random number generator.

Subpackages cover the pipeline end to end: state models and quadrature
statistics (``states``), the homodyne digitizer model (``detector``), offline
filtering (``dsp``), variance-vs-power calibration (``calibration``), the
min-entropy certificate (``entropy``), Toeplitz randomness extraction
(``extractor``), an adversarial sanity lab (``attacklab``), a statistical
test battery (``stats``) and the command-line interface (``cli``).
"""

from . import (  # noqa: F401
    attacklab,
    calibration,
    detector,
    dsp,
    entropy,
    extractor,
    states,
    stats,
)

__version__ = "0.1.0"

"""Joint text/spectrum embeddings for condition monitoring.

Trains a pair of projection heads against annotated vibration spectra so
that free-form analyst queries can classify and retrieve spectra without
class labels. Ships with a kinematics-driven synthetic corpus generator,
a deterministic fallback text embedder, a CLI and an HTTP service.
"""

__version__ = "0.1.0"

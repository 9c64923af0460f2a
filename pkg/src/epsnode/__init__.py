"""Grid-map UWB novelty detection pipeline.

Subpackages: simulator (planar channel model), dataset (persistence and
splitting), features (RNG/MA/PCA input pipelines), autoencoder (overcomplete
dense net), novelty (error maps), evaluation (KDE + KL), gridsearch
(hyperparameter sweeps), cli (command-line toolchain).
"""

from . import (  # noqa: F401
    autoencoder,
    dataset,
    evaluation,
    features,
    gridsearch,
    novelty,
    render,
    simulator,
)

__version__ = "0.1.0"

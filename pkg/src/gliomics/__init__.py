"""Glioma-grading radiomics pipeline.

Registration + subtraction maps, intensity/shape feature vectors, SVM and
MLP classifiers, evaluation protocol and nonparametric statistics, with a
synthetic phantom cohort generator for end-to-end validation.
"""

__version__ = "0.1.0"

from .volume import (  # noqa: F401
    GridGeometry,
    LabelMap,
    Volume,
    load_labelmap,
    load_volume,
    resample,
    save_labelmap,
    save_volume,
)

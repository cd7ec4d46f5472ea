"""Occupant glare evaluation from fisheye HDR images.

Subpackages cover Radiance HDR input/output, fisheye photometry, glare
indices, multi-region luminance features, classifiers, ROC analysis,
synthetic corpora and the ``oge`` command line.
"""

__version__ = "0.1.0"

from .errors import DegenerateDataWarning, OgeError  # noqa: E402,F401

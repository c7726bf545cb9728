"""Transmon charge-noise analysis toolkit.

Thin Python layer over the C++ core: charge-basis spectra and parity bands,
synthetic single-shot and offset-charge data, GMM/HMM inference with model
selection, PSD estimation with Lorentzian and power-law fits, and
induced-charge electrostatics.
"""

from ._qnoise import *  # noqa: F401,F403
from ._qnoise import __doc__ as _core_doc  # noqa: F401

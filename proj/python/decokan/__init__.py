"""DecoKAN: interpretable wavelet-decomposed KAN forecasting."""

try:
    from ._decokan import *  # noqa: F401,F403  (installed wheel layout)
except ImportError:  # in-tree builds expose _decokan on PYTHONPATH
    from _decokan import *  # noqa: F401,F403

"""Average peak-age-of-information analytics for an intra-body nanosensor
network. Thin Python surface over the C++ core."""

try:
    from ._bloodnet import *  # noqa: F401,F403
    from ._bloodnet import __doc__  # noqa: F401
except ImportError:  # running against a plain CMake build tree
    from _bloodnet import *  # noqa: F401,F403

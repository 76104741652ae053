"""Friction-agent simulation, training, and evaluation toolkit."""

try:
    from ._frictionlab import *  # noqa: F401,F403
    from ._frictionlab import __doc__ as _core_doc
except ImportError:  # in-tree testing against the raw extension module
    from _frictionlab import *  # noqa: F401,F403
    from _frictionlab import __doc__ as _core_doc

__doc__ = _core_doc
__version__ = "0.1.0"

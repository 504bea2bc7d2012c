"""Driving-scene captioning, risk assessment, and safety-suggestion toolkit.

Thin wrapper over the compiled `_drivesafe` extension module.
"""

try:
    from ._drivesafe import *  # noqa: F401,F403  (installed wheel layout)
    from ._drivesafe import __doc__ as _core_doc
except ImportError:  # in-tree build: extension sits next to the package on PYTHONPATH
    from _drivesafe import *  # noqa: F401,F403
    from _drivesafe import __doc__ as _core_doc

__all__ = [name for name in dir() if not name.startswith("_")]

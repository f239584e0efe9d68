"""Python face of the timegate core.

Re-exports the native module's operations: interpreter selection over the
release calendar, dependency unpinning, unified-diff line mapping, run-record
metrics (pass@1 / prec@1 and the single-run sweep), exact-decimal cost
accounting, and test-log triage.
"""

try:
    from ._timegate import *  # noqa: F401,F403  (installed layout)
    from . import _timegate as _native
except ImportError:  # development layout: module sits on PYTHONPATH
    from _timegate import *  # noqa: F401,F403
    import _timegate as _native

__all__ = [name for name in dir(_native) if not name.startswith("_")]

"""Curve kernel selection.

Imports the compiled kernel when the extension was built, otherwise falls
back to the pure-Python one. Both expose the same functions; ``BACKEND``
names the active choice so tests and benchmarks can report it.
"""

try:
    from . import _ecfast as _impl
except ImportError:  # extension not built on this install
    from . import _ecpure as _impl

BACKEND = _impl.BACKEND_NAME

scalar_mult = _impl.scalar_mult
scalar_base_mult = _impl.scalar_base_mult
add_points = _impl.add_points
shamir_mult = _impl.shamir_mult
is_on_curve = _impl.is_on_curve

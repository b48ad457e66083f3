"""Exact truncated-precision computation in Lubin-Tate theory.

Subpackages build on one another in this order: padic (base field
arithmetic), series (truncated power series kernels), formal (Lubin-Tate
formal groups), witt (ramified Witt vectors), tower (division towers and
Galois-module certificates), exponentials (generalized exponential series),
cli (the ltlab command).
"""

from .padic import Context, KElem, make_context

__all__ = ["Context", "KElem", "make_context"]
__version__ = "0.1.0"

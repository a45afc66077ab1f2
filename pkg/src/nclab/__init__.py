"""Numerics for N non-colliding Brownian motions started at the origin.

The multi-time correlation functions form a pfaffian process with an
explicit 2x2 matrix kernel built from Hermite polynomials.  Submodules:

- ``stochastic``: heat kernels, Karlin-McGregor determinants, densities and
  brute-force integration oracles
- ``skewlin``: pfaffians, J_N, de Bruijn and Andreief matrices
- ``basis``: the skew-orthogonal Hermite functions R_k and Phi_k
- ``kernels``: the matrix kernel and correlation functions
- ``fredholm``: Fredholm pfaffians and the characteristic function
- ``montecarlo``: a rejection sampler for the conditioned process
"""

__version__ = "0.1.0"

"""Critical bond percolation laboratory for loop-cluster structure.

Library layout:

- lattice: hypercubic geometry, regions, canonical edges
- sampler: seeded stateless edge openness (counter-style keyed hash)
- graphcore: cluster growth, bridges, edge-disjoint path machinery
- loops: loop-cluster decompositions and their summary statistics
- events: rare-event detectors used by the Monte Carlo experiments
- oracle: exact enumeration oracles for tiny instances
- registry: named tiny instances with exact registered values
- mc: tallies, experiment plans, critical-point estimation
- diagrams: deterministic lattice diagram sums
- analysis: log-log exponent fits and reports
- cli: config-driven experiment runner (also `python -m looplab`)

Heavy submodules (numba-compiled kernels) are imported on first use,
not at package import.
"""

__version__ = "0.1.0"

from . import lattice  # noqa: F401  (light, always handy)

__all__ = [
    "__version__",
    "lattice",
    "sampler",
    "graphcore",
    "loops",
    "events",
    "oracle",
    "registry",
    "mc",
    "diagrams",
    "analysis",
    "cli",
]


def __getattr__(name):
    # lazy import so `import looplab` stays fast; numba only loads on demand
    if name in __all__:
        import importlib

        mod = importlib.import_module(f".{name}", __name__)
        globals()[name] = mod
        return mod
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

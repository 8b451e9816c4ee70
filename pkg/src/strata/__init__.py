"""Strata: a strategic rewriting language with an incremental compiler.

The compiler looks whole-program from the outside but internally wires
reusable stages (per-module front-end, per-definition sub-front-end,
whole-program checks, per-strategy back-end) through a persistent
incremental build engine, so recompilation cost follows the size of a
change while outputs stay byte-identical to a clean build.
"""

__version__ = "0.1.0"

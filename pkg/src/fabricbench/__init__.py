"""Cluster performance characterization toolkit.

Analytic peak and bandwidth models, node microbenchmarks, a fat-tree
fabric simulator, a socket-based all-pairs ping-pong harness and the
statistics that tie their outputs together.
"""

__version__ = "0.1.0"

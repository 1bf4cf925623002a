"""
Heavyfield - mean-field heavy-ball laboratory
Deterministic experiments on momentum training of wide two- and three-layer networks
"""

__version__ = "1.0.0"

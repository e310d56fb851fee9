"""Grid-encoded physics-informed neural network solvers.

Subpackages: tape (reverse-mode engine), jets (second-order forward
components), encoding (grid feature interpolation), models (the six
architectures), problems (benchmark PDEs), oracles (reference solutions),
training (loss assembly + Adam), harness (experiment runner / CLI).
"""

__version__ = "0.1.0"

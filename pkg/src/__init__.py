"""
corona-harmonic

Harmonic-measure machinery on planar domains: Whitney decompositions,
walk-on-spheres, boundary cubes, HD/LD coronas, Carleson estimates, the
augmented domain and the Cantor dichotomy experiments.
"""

__version__ = "0.1.0"

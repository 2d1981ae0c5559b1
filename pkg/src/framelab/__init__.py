"""framelab: curvature, holonomy and Gromov-Hausdorff experiments for
lifting metrics on orthonormal frame bundles."""

__version__ = "0.1.0"

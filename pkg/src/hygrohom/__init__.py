"""Multi-scale homogenisation and hygro-thermal degradation on tetrahedral meshes."""

__version__ = "0.1.0"

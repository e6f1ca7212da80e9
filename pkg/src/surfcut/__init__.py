"""Free-boundary surface extraction from a 3D cost volume and a seed point."""
__version__ = "0.1.0"

from .pipeline import SurfCutParams, surfcut, surfcut_auto  # noqa: E402
from .volume import ScalarVolume, SeedPoint, read_svol, write_svol  # noqa: E402

__all__ = ["SurfCutParams", "surfcut", "surfcut_auto", "ScalarVolume", "SeedPoint",
           "read_svol", "write_svol", "__version__"]

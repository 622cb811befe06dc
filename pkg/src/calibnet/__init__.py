"""Local paired calibrations for planar multiphase interface networks."""
from .tensions import SurfaceTensionMatrix, embed_simplex, is_admissible
from .geometry import DiscDomain, PlanarNetwork, Segment
from .partition import FlatPartition, find_localization_scales, validate_flat_partition
from .calibration import build_calibration, verify_calibration
from .energy import PolygonalPartition, interface_energy, verify_energy_identity
from .competitors import minimality_probe, perturb

__version__ = "0.1.0"

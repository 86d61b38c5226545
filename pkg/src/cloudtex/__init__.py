"""cloudtex: textured mesh reconstruction from colored point clouds."""

from .camera import CameraRig, View, direction_priority, make_rig, project, unproject as unproject_pixel
from .pcio import (
    ColoredPointCloud,
    TextureAtlas,
    TriangleMesh,
    read_mesh,
    read_point_cloud,
    sample_points,
    write_textured_mesh,
)
from .pipeline import PipelineConfig, reconstruct
from .projection import Raster
from .uvatlas import Chart, TexelTable

__version__ = "0.1.0"

__all__ = [
    "CameraRig", "View", "direction_priority", "make_rig", "project", "unproject_pixel",
    "ColoredPointCloud", "TextureAtlas", "TriangleMesh",
    "read_mesh", "read_point_cloud", "sample_points", "write_textured_mesh",
    "PipelineConfig", "reconstruct", "Raster", "Chart", "TexelTable",
    "__version__",
]

"""Python access to the vxp core: geometry, retrieval, file formats and the CLI."""

from ._core import (
    VxpError,
    cli,
    grid_dims,
    knn,
    load_point_cloud_bin,
    one_percent_k,
    project_point,
    read_descriptors,
    smooth_l1,
    synthetic_cloud,
    voxelize,
    write_descriptors,
    write_point_cloud_bin,
    zero_triplet_expansion,
)

__all__ = [
    "VxpError",
    "cli",
    "grid_dims",
    "knn",
    "load_point_cloud_bin",
    "one_percent_k",
    "project_point",
    "read_descriptors",
    "smooth_l1",
    "synthetic_cloud",
    "voxelize",
    "write_descriptors",
    "write_point_cloud_bin",
    "zero_triplet_expansion",
]

"""
voxup: surface-anchored voxel upsampling and view-domain partitioning toolkit
"""

__version__ = "1.0.1"

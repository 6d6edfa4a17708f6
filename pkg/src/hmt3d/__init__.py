"""Forward-only hybrid SSM / window-attention sparse voxel backbone."""
__version__ = "0.1.0"

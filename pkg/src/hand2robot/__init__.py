"""hand2robot: edit RGBD pinch-grasp hand demos into robot demonstration datasets."""

__version__ = "0.1.0"

"""Phase segmentation and air-void stereology for polished-concrete scans."""

__version__ = "0.1.0"

"""Export a VGG-19 feature stack to a multi-output ONNX asset."""

__version__ = "0.1.0"

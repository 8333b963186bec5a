"""Multi-object tracking driven by frame-wise motion fields and appearance features."""
from .geometry import BBox, iou
from .tracker import Detection, FrameBundle, Track, TrackerConfig, advance, initial_state, run_sequence

__version__ = "0.1.0"

__all__ = [
    "BBox", "iou", "Detection", "FrameBundle", "Track", "TrackerConfig",
    "advance", "initial_state", "run_sequence", "__version__",
]

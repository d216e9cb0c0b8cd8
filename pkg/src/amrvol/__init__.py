"""AMR volume rendering: same-level bricks, active brick regions, BVH traversal,
hat-basis reconstruction, adaptive ray marching, and a frame-streaming service."""

__version__ = "0.1.0"

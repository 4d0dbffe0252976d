"""Offline tool: frame directory + gaze log -> per-frame CNN descriptors.

For every frame a 200x200 patch is cropped around the gaze location (edge
replication at the borders, frame center when gaze is invalid), resized to
the network input, and pushed through AlexNet; the 4096-d fc7 activation
after ReLU is written to a binary embeddings file the main pipeline ingests.
"""

from .extractor import Fc7Extractor, embed_frames, extract_patch
from .gaemio import read_embeddings, write_embeddings

__version__ = "0.1.0"

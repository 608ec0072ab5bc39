"""Image-folder to embedding-dataset extraction with frozen backbones."""

from .backbones import Backbone, available, load_backbone, register
from .extract import ExtractSpec, extract, read_labels, stratified_split
from .lt import long_tail_counts, make_long_tail

__version__ = "0.1.0"

from .errors import StapError
from .formula import parse_formula
from .model import build_context
from .nuts import SamplerConfig, sample_chain
__version__ = "0.1.0"
__author__ = "stap-glm contributors"

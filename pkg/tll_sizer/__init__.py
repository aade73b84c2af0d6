"""Sizing, construction and verification of TLL/ReLU controllers that
approximately simulate a Lipschitz expert controller."""
from .errors import TLLSizerError

__version__ = '0.1.0'
__all__ = ['TLLSizerError', '__version__']

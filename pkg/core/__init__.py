# DFT neural-sampler toolkit

__version__ = "0.1.0"

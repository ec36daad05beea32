# multiscale-mle: drift estimation from multiscale diffusion data

__version__ = "0.1.0"

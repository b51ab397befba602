"""Long-horizon portfolio fund separation: eigenpairs, Monte Carlo and filtering."""
__version__ = "0.1.0"

"""Phase change with void formation: simulator, scenarios and convergence studies."""

__version__ = "0.1.0"

"""Urban wind simulation and Fourier neural operator surrogate."""

from .core.config import settings

__version__ = settings.app_version

__all__ = ["__version__"]

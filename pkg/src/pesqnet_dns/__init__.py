"""pesqnet-dns - PESQNet-mediated deep noise suppression training toolkit"""

from pesqnet_dns._version import __version__

__all__ = ["__version__"]

"""Channel allocation toolkit for multi-radio 802.11 mesh networks."""

__version__ = "0.1.0"

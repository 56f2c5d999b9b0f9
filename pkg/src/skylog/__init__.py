"""Aerial cellular coverage logger.

Collects geo-tagged LTE serving/neighbor measurements and end-to-end
service probes from a UAV-mounted modem (or a deterministic simulation of
one), and turns the resulting traces into coverage statistics and map
layers.
"""

__version__ = "0.1.0"

"""Peer-ranging GNSS spoofing detection toolkit.

Modules: model (shared types), verify (location verification exchange),
recovery (sliding-window detector), meta (weight/threshold optimization),
evaluate (curves and exact oracles), traffic (mobility traces), geometry
(attacker-influence multilateration), cli (command-line frontend).
"""

__version__ = "0.1.0"

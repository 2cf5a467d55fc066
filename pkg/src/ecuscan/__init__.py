"""On-line boundary-scan test and reconfiguration simulator for an automotive ECU."""

__version__ = "0.1.0"

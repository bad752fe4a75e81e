"""Joint BS/HRIS beamforming for HRIS-assisted MIMO dual-function radar-communication."""

__version__ = "0.1.0"

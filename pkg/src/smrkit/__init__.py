"""Multi-leader state-machine replication over segmented sequenced
broadcast, with a deterministic simulation and verification harness."""

__version__ = "0.1.0"

"""mannsim: a desk-scale cellular downlink simulator where per-cell
agents, a neural-network regressor and a coordinator dynamically pick
partial-frequency-reuse configurations to lift cell-edge throughput."""

__version__ = "0.1.0"

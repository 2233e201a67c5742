"""RIS-aided edge inference: channel simulation, queue control, and learning.

A discrete-time simulator for a multi-device uplink where mobile devices
compress inference requests, offload them over a reconfigurable-surface-aided
MIMO channel, and an edge host serves them from a computation queue. Control
combines per-slot convex allocation (transmit covariances by water-filling,
CPU cycles by greedy scheduling) with a learned policy for compression levels
and surface phase shifts, traded off through a congestion-plus-power
objective with a virtual queue enforcing a long-run accuracy floor.
"""

from risedge.config import ExperimentConfig, load_config

__all__ = ["ExperimentConfig", "load_config"]
__version__ = "0.1.0"

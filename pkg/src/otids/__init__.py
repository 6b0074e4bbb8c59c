"""Process-aware intrusion detection for industrial fieldbus captures.

Random forests and support vector machines over Modbus gas-pipeline and
OPC UA batch-process packet data, with time-based interpolation for
missing values, feature relevance ranking and a reproducible command
line pipeline.
"""

__version__ = "0.1.0"

"""
Throughput-oriented scheduling of pipelined DAG applications on heterogeneous clusters
"""

__version__ = "0.1.0"

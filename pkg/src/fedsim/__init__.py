"""Deterministic federated-learning simulator.

Building blocks: a numpy forward/backward/SGD engine (`nn`), dataset
loading and client partitioning (`data`), seven Byzantine behaviors
(`attacks`), five baseline robust aggregators (`aggregation`), the
shadow-model/SVM client filter (`fedguard`), and the experiment
orchestrator plus CLI (`sim`, `cli`).
"""

from . import aggregation, attacks, config, data, fedguard, nn, seeding, sim
from .errors import (ConfigurationError, DataError, DimensionError, FedsimError,
                     FormatError, InfeasibilityError, TrainingError)

__version__ = "0.1.0"

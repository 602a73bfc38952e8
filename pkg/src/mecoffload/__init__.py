"""Mobile edge computing offloading: models, optimizer, baselines and simulator."""

from .model import (Catalog, DeviceClass, Network, Scenario, ScenarioError, TaskSpec, UNLIMITED,
                    generate_scenario, load_catalog, load_scenario)

__all__ = ["Catalog", "DeviceClass", "Network", "Scenario", "ScenarioError", "TaskSpec", "UNLIMITED",
           "generate_scenario", "load_catalog", "load_scenario"]
__version__ = "0.1.0"

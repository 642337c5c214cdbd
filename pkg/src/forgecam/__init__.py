"""Feature-based CAM planning for forging dies."""
from .bmfe import BasicFeature, FeatureSet, extract_features
from .die_model import DieModel, Technology, Tool, check_machinability, load_die_model, parse_die_model
from .errors import ForgecamError
from .gcode import parse_gcode
from .perf_viewer import MachineModel, NcuModel, detect_feed_loss, machining_time, plan_feed_profile
from .ppg import ProcessPlan, blend_process, generate_plan
from .toolpath import Toolpath, export_gcode
from .topology import build_topology_graph, export_graph_dot

__version__ = "0.1.0"

__all__ = [
    "BasicFeature", "DieModel", "FeatureSet", "ForgecamError", "MachineModel", "NcuModel",
    "ProcessPlan", "Technology", "Tool", "Toolpath", "blend_process", "build_topology_graph",
    "check_machinability", "detect_feed_loss", "export_gcode", "export_graph_dot",
    "extract_features", "generate_plan", "load_die_model", "machining_time", "parse_die_model",
    "parse_gcode", "plan_feed_profile",
]

from .curve_graph import CurveGraph
from .training_curve_graph import TrainingCurveGraph

from .algorithm import Algorithm
from .dataset import TaskKind, SkewKind
from .dropout_mode import DropoutMode
from .logging import LogLevel
from .merge_mode import MergeMode
from .net import ModelKind, BatchMode

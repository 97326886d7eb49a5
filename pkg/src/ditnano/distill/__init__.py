from .data import (
    TeacherPair,
    TeacherPairReader,
    load_teacher_pairs,
    synth_pair,
    synth_teacher,
    write_teacher_pairs,
)
from .losses import Batch, TaSetup, loss_get, loss_mi1, loss_ta, make_ta
from .metrics import DistanceMetric
from .train import AdamW, TrainConfig, TrainResult, train

__all__ = [
    "AdamW",
    "Batch",
    "DistanceMetric",
    "TaSetup",
    "TeacherPair",
    "TeacherPairReader",
    "TrainConfig",
    "TrainResult",
    "load_teacher_pairs",
    "loss_get",
    "loss_mi1",
    "loss_ta",
    "make_ta",
    "synth_pair",
    "synth_teacher",
    "train",
    "write_teacher_pairs",
]

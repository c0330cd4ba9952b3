from .heuristics import (
    KINDS,
    OrientationStats,
    VerticalPriors,
    heuristic_orientation,
    heuristic_vertical,
    inward_orientation,
)
from .model import (
    ApmConfig,
    ApmLoss,
    ApmModel,
    AttributePrediction,
    cross_attention,
    loss_apm,
    patch_pool,
    predict_attributes,
)
from .training import (
    ApmTrainConfig,
    InstanceSet,
    build_instance_set,
    orientation_accuracy,
    predict_orientations,
    scene_examples,
    train_apm,
)

from ._liverstage import (
    auc,
    calibrate_thresholds,
    default_thresholds,
    dice,
    generate_phantom,
    hausdorff,
    map_y1,
    map_y4,
    mi_loss,
    mi_loss_gradient,
    register_rigid,
    resample,
)

__all__ = [
    "auc",
    "calibrate_thresholds",
    "default_thresholds",
    "dice",
    "generate_phantom",
    "hausdorff",
    "map_y1",
    "map_y4",
    "mi_loss",
    "mi_loss_gradient",
    "register_rigid",
    "resample",
]

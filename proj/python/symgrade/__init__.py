# SPDX-License-Identifier: Apache-2.0
"""Python front end to the native symgrade core."""

from ._symgrade import (
    DEFAULT_LAMBDA,
    NUM_GRADES,
    ConfigError,
    ContractError,
    FormatError,
    IoError,
    NumericError,
    ShapeError,
    confusion_matrix,
    consistency_loss,
    cross_entropy_mean,
    flip_horizontal,
    generate_synthetic,
    grade_name,
    gradcheck,
    jsd_mean,
    onecycle_lr,
    prf_report,
    run_cli,
    softmax_rows,
    stratified_split,
    total_loss,
)

__all__ = [name for name in dir() if not name.startswith("_")]

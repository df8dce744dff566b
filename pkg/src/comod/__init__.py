"""Collaborative content-moderation engine.

Conformal prediction sets over a toxicity classifier, conformal intervals
over an annotation-disagreement regressor, and a routing rule that sends a
comment to a human moderator whenever either signal says the model should
not act alone.
"""

from . import errors
from .annotations import (
    AnnotationRecord,
    LabeledInstance,
    build_labeled,
    disagreement_distance,
    disagreement_entropy,
    filter_min_annotators,
    majority_label,
    mean_annotation,
)
from .conformal_class import (
    ClassCalibration,
    ClassProbs,
    PredictionSet,
    calibrate_cclac,
    calibrate_crc,
    calibrate_lac,
    conformal_quantile,
    predict_set_cclac,
    predict_set_crc,
    predict_set_lac,
)
from .conformal_reg import (
    Interval,
    RegCalibration,
    RegOutput,
    calibrate_ar,
    calibrate_gamma,
    calibrate_r2ccp,
    calibrate_rn,
    interp_prob,
    interval_ar,
    interval_gamma,
    interval_r2ccp,
    interval_rn,
)
from .metrics import EvalRecord, MetricsReport, compute_report
from .router import RoutingDecision, RoutingPolicy, route, route_batch
from .simulator import SimConfig, generate, split

__version__ = "0.1.0"

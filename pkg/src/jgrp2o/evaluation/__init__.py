from jgrp2o.evaluation.metrics import EvalConfig, EvalReport, joint_errors, mean_3d_error, success_curve  # noqa
from jgrp2o.evaluation.evaluator import evaluate, inference_table, predict_dataset, Predictions  # noqa

"""Problem instances: QCQPs, kernel SVMs, matrix games and datasets."""

from .data import (Dataset, load_csv_dataset, make_blobs, normalize_features,
                   save_csv_dataset, train_test_split)
from .games import RPS, bilinear_box_problem, matrix_game
from .qcqp import (QCQPInstance, find_slater_point, gen_qcqp, qcqp_dual_bound,
                   qcqp_to_conic)
from .svm import (KernelSVMInstance, build_kernel_matrices, build_svm_saddle,
                  make_svm_instance, predict_labels)

__all__ = [
    "Dataset", "load_csv_dataset", "make_blobs", "normalize_features",
    "save_csv_dataset", "train_test_split", "RPS", "bilinear_box_problem",
    "matrix_game", "QCQPInstance", "find_slater_point", "gen_qcqp",
    "qcqp_dual_bound", "qcqp_to_conic", "KernelSVMInstance",
    "build_kernel_matrices", "build_svm_saddle", "make_svm_instance",
    "predict_labels",
]

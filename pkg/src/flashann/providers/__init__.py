from .base import KIND_IDS, DistanceProvider, QueryContext
from .exact import ExactProvider
from .pca import PCAModel, PCAProvider, pca_project, pca_train
from .pq import PQModel, PQProvider, pq_adc_table, pq_sdc_distance, pq_train
from .sq import SQModel, SQProvider, sq_decode, sq_encode, sq_train

__all__ = [
    "KIND_IDS",
    "DistanceProvider",
    "QueryContext",
    "ExactProvider",
    "PQModel",
    "PQProvider",
    "pq_train",
    "pq_adc_table",
    "pq_sdc_distance",
    "SQModel",
    "SQProvider",
    "sq_train",
    "sq_encode",
    "sq_decode",
    "PCAModel",
    "PCAProvider",
    "pca_train",
    "pca_project",
]

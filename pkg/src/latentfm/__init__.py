"""Rating prediction with latent-feature factorization machines.

Builds sparse FM feature vectors from user/item one-hots plus latent
features learned from watch histories: topic proportions via collapsed
Gibbs sampling and item embeddings via skip-gram with negative sampling.
Includes an experiment runner comparing the variants by RMSE.
"""

from .corpus import (Dataset, ItemDocument, RatingRecord, UserDocument,
                     build_item_documents, build_user_documents, load_ratings,
                     split)
from .embed import SkipGramConfig, SkipGramModel, generate_pairs, train_skipgram
from .errors import (ConfigError, LatentFMError, ParseError, TrainingDiverged,
                     UnsupportedPolicyError, ValidationError)
from .fm import (EncodedExamples, FeatureLayout, FMModel, SparseFeatureVector,
                 TrainConfig, encode_baseline, encode_topic, encode_vector,
                 fm_predict, fm_predict_naive, sgd_epoch, train_fm)
from .lda import LdaConfig, LdaState, estimate_theta, gibbs_sweep, train_lda
from .metrics import MetricsRecord, rmse, summarize
from .experiment import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Dataset", "RatingRecord", "UserDocument", "ItemDocument",
    "load_ratings", "split", "build_user_documents", "build_item_documents",
    "LdaConfig", "LdaState", "gibbs_sweep", "estimate_theta", "train_lda",
    "SkipGramConfig", "SkipGramModel", "generate_pairs", "train_skipgram",
    "FeatureLayout", "SparseFeatureVector", "FMModel", "TrainConfig",
    "EncodedExamples", "encode_baseline", "encode_topic", "encode_vector",
    "fm_predict", "fm_predict_naive", "sgd_epoch", "train_fm",
    "MetricsRecord", "rmse", "summarize",
    "ExperimentConfig", "run_experiment",
    "LatentFMError", "ParseError", "ValidationError",
    "UnsupportedPolicyError", "ConfigError", "TrainingDiverged",
    "__version__",
]

"""Case-based extractive question answering.

Questions are answered by retrieving stored cases whose masked questions are
similar, then scoring the target passage's candidate spans against the
retrieved gold-answer embeddings. The encoder is swappable: a trainable toy
encoder ships in-package, and precomputed embedding files plug in through
the imported backend.
"""

from .casebase import Casebase, RetrievalConfig, augment, retrieve
from .casebase import build as build_casebase
from .casebase import load as load_casebase
from .casebase import save as save_casebase
from .corpus import AnswerSpan, Case, Dataset, Passage, Question, Token, ingest_mrqa, tokenize
from .datafile import load_dataset, save_dataset
from .encoder import ImportedEncoder, ToyEncoder, ToyEncoderParams, init_toy_params, load_params, save_params
from .metrics import EvalResult, PredictedAnswer, evaluate
from .reuse import Prediction, predict
from .spanner import CandidateSpan, generate_candidates
from .textproc import MaskedQuestion, extract_wh_keyword, mask_with_rules, recognize_entities
from .toydata import ToyCorpus, build_toy_corpus
from .trainer import TrainConfig, TrainResult, compute_loss, finite_difference_check, train

__version__ = "0.1.0"

__all__ = [
    "AnswerSpan",
    "Case",
    "Casebase",
    "CandidateSpan",
    "Dataset",
    "EvalResult",
    "ImportedEncoder",
    "MaskedQuestion",
    "Passage",
    "PredictedAnswer",
    "Prediction",
    "Question",
    "RetrievalConfig",
    "Token",
    "ToyCorpus",
    "ToyEncoder",
    "ToyEncoderParams",
    "TrainConfig",
    "TrainResult",
    "augment",
    "build_casebase",
    "build_toy_corpus",
    "compute_loss",
    "evaluate",
    "extract_wh_keyword",
    "finite_difference_check",
    "generate_candidates",
    "ingest_mrqa",
    "init_toy_params",
    "load_casebase",
    "load_dataset",
    "load_params",
    "mask_with_rules",
    "predict",
    "recognize_entities",
    "retrieve",
    "save_casebase",
    "save_dataset",
    "save_params",
    "tokenize",
    "train",
    "__version__",
]

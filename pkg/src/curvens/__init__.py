"""curvens: ensemble perturbation-curvature detection of machine-generated text.

Pipeline: perturb each candidate text with random span mask-and-fill, score
the original and rewrites under M sub-models, turn each sub-model's
log-probability drop into a curvature score, and combine the M scores with
summary statistics, supervised aggregators, or the multi-stage estimator.
"""
from .corpus import Dataset, TextSample, detokenize, load_jsonl, save_jsonl, tokenize_words
from .curvature import (
    ScoreMatrix,
    build_score_matrix,
    discrepancy,
    normalized_discrepancy,
    read_score_csv,
    write_score_csv,
)
from .ensemble import (
    EnsembleMethod,
    MultiStageModel,
    apply_ensemble,
    exclude_scorer,
    fit_multistage,
    multistage_score,
    summarize,
)
from .evaluation import GenerationConfig, LabeledScores, auroc, make_synthetic_dataset
from .experiment import (
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    load_config,
    run_experiment,
)
from .learners import (
    HyperGrid,
    TrainedAggregator,
    fit_gnb,
    fit_logistic,
    fit_random_forest,
    fit_svm,
    grid_search,
    predict_proba,
)
from .lm import LogProbResult, ModelSpec, NgramModel, build_model, train_ngram
from .perturb import PerturbationConfig, PerturbationSet, perturb_sample, select_mask_spans
from .remote import ProtocolError, RemoteModel, TransportError

__version__ = "0.1.0"

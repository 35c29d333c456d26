"""Diversity of ensembles: loss decompositions, PAC-Bayes bounds and diversity-aware training."""

from ._errors import CsvParseError, MissingColumnError, NumericFailureError
from .data import SyntheticKind, SyntheticSpec, generate, load_csv, sine_fixture, split, standardize
from .diversity import (
    CovarianceReport,
    DecompositionReport,
    covariance_decomposition,
    decompose,
    diversity_pairwise_form,
    diversity_tight_ce,
    diversity_variance_form,
    gap_check,
    positivity_witness,
    single_model_check,
    tandem_loss,
)
from .estimators import EnsembleClassifier, EnsembleRegressor
from .fisher import FisherReport, variance_lower_bound
from .losses import Dataset, Ensemble, LossKind, Task, empirical_loss
from .nnet import Activation, MlpModel, mlp_backward, mlp_forward, mlp_init
from .pacbayes import EpsilonMode, MixtureSpec, PacBoundReport, Prior, kl_mixture_delta, pac_bound, p2b_objective
from .trainers import Objective, TrainConfig, nc_objective, train, train_independent, train_nc, train_p2b

__version__ = "0.1.0"

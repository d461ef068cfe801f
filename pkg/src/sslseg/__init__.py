"""Successive subspace learning segmentation: Saab cascades, entropy-ranked
channels, boosted pixel classifiers and CRF refinement."""

from ._backend import backend_name
from .cascade import CascadeConfig, CascadeModel, fit_cascade, transform_cascade
from .crf import CrfConfig, mean_field, mean_field_refine
from .data_io import DatasetManifest, SliceRecord, load_slice, preprocess, read_manifest
from .errors import (
    BadMagicError,
    ConsistencyError,
    FormatError,
    InvalidArgumentError,
    NumericError,
    SSLSegError,
    TruncationError,
    VersionError,
)
from .featsel import SelectionMask, class_entropy, select_channels
from .gbdt import GbdtConfig, TreeEnsemble, fit_gbdt, predict_proba
from .metrics import DiceReport, dice_per_class, dice_report
from .phantom import PhantomSpec, generate_phantom
from .pipeline import ModelBundle, Prediction, evaluate_manifest, predict, report_params, train_pipeline
from .saab import SaabKernelBank, apply_saab, count_params, fit_saab
from .bundle import load_bundle, save_bundle

__version__ = "0.1.0"

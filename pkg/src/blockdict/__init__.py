"""Block-structured dictionary learning with correlation-based block estimation.

Sparse coding (OMP, block-OMP), block-structure estimation (SAC, CGC and
its class-supervised variant), KSVD and block-SVD dictionary training,
synthetic oracle benchmarks, coherence analysis and classification.
"""

from .analysis import block_coherence_stats, block_recovery_rate, coherence_profile, count_above, reconstruction_error
from .classify import REJECT, cds_score, classify_signal
from .coding import bomp, code_atoms, code_blocks, omp
from .core import (
    BlockDictError,
    BlockStructure,
    ClassLabels,
    ConfigError,
    Dictionary,
    ExperimentConfig,
    FormatError,
    InvariantError,
    NumericalError,
    SparseCodes,
    TrainingSet,
    load_dictionary,
    load_training_set,
    save_dictionary,
    save_training_set,
)
from .learning import TrainReport, bksvd_block_update, bksvd_train, ksvd_train, supervised_train
from .structure import cgc_estimate, fixed_class_blocks, sac_estimate, shrink_schedule, supervised_cgc_estimate
from .synthetic import OracleSpec, add_noise_snr, gen_block_sparse_data, gen_class_benchmark, gen_oracle_dict

__version__ = "0.1.0"

"""Spectral learning of linear second-order RNNs and weighted automata.

The library estimates low train-rank Hankel tensors of an unknown sequence
function from input/output examples and reconstructs an equivalent linear
second-order RNN by rank factorization.  See the README for the CLI and file
formats.
"""

from .models import (
    Linear2RNN,
    VvWFA,
    change_of_basis,
    hankel_tt,
    mse_gradients,
    random_rnn,
    rnn_from_wfa,
    wfa_from_rnn,
    zero_rnn,
)
from .recovery import (
    ConvergenceWarning,
    DivergenceError,
    RecoveryConfig,
    RegressionData,
    build_design,
    estimate_hankel,
    recover_iht,
    recover_least_squares,
    recover_nuclear_norm,
    recover_tiht,
    recover_tiht_tt,
)
from .spectral import (
    HankelTriple,
    IllConditionedFactorization,
    RankConditionWarning,
    SpectralLearnResult,
    per_step_datasets,
    rank_factorize,
    recover_rnn,
    spectral_learn,
    spectral_learn_general,
)
from .data import (
    SequenceDataset,
    arithmetic_model,
    gen_arithmetic_task,
    gen_random_rnn_task,
    generate_dataset,
    load_jsonl,
    load_sequences_csv,
    save_jsonl,
)
from .refine import AdamState, adam_init, adam_step, sgd_refine
from .tensor_train import TensorTrain, tt_add, tt_round, tt_scale, tt_svd
from .metrics import metrics, mse, zero_mse

__version__ = "0.1.0"

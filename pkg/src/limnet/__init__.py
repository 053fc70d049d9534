"""Attention-pooled sentence embeddings over frozen token embeddings.

Two learnable scorers pool a document's frozen token embeddings into
per-sentence local embeddings and document-wide shift vectors; their sum
feeds small classification heads. Every embedding the model produces is
a linear combination of the input tokens. Training is a manually
differentiated, fully deterministic loop.
"""

from .data import (
    Corpus,
    LabelSet,
    load_embeddings,
    load_labels,
    read_embeddings,
    read_labels,
    save_embeddings,
    save_labels,
    split,
    write_embeddings,
    write_labels,
)
from .documents import Document
from .encoder import (
    EncodeResult,
    EncoderParams,
    Variant,
    average_pool,
    encode,
    encode_backward,
    global_shift,
    local_embed,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    FormatError,
    LimnetError,
    NumericalError,
    TrainingDiverged,
)
from .gradcheck import run_gradcheck
from .heads import (
    HeadParams,
    classify_pair,
    classify_sentence,
    cross_entropy,
    head_backward,
    head_forward,
    predict,
)
from .metrics import ConfusionMatrix, confusion, macro_prf, micro_f1
from .modelfile import load_model, read_model, save_model, write_model
from .scorer import (
    ScorerGrad,
    ScorerParams,
    finite_difference_grad,
    relative_error,
    scorer_backward,
    scorer_forward,
    softmax,
)
from .synthetic import SyntheticConfig, centroids, gen_synthetic, local_bayes_bound
from .training import (
    AdamState,
    ModelParams,
    RunLog,
    TrainConfig,
    TrainData,
    TrainResult,
    adam_step,
    count_parameters,
    dropout_apply,
    evaluate,
    init_params,
    overfit_gap,
    train,
)

__version__ = "0.1.0"

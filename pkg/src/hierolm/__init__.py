"""Word-level language models for MdC transliterated Egyptian texts.

Train LSTM / RNN / trigram feed-forward models from scratch (numpy only,
hand-written backprop), evaluate them, and serve next-word predictions over
HTTP or an interactive REPL.
"""

from .corpus import (
    BOS_ID,
    BOS_TOKEN,
    EOS_ID,
    EOS_TOKEN,
    PAD_ID,
    PAD_TOKEN,
    SPECIAL_TOKENS,
    UNK_ID,
    UNK_TOKEN,
    DatasetSplit,
    Vocabulary,
    read_corpus,
    split_dataset,
    tokenize_line,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .evaluation import (
    EvalReport,
    LengthBucketReport,
    MultiShotReport,
    evaluate,
    length_buckets,
    multishot,
    pca_project,
)
from .models import ModelDims,forward_sequence, greedy_complete, init_params, predict_topk
from .service import ModelBundle, serve
from .synth import TemplateGrammar, generate_synthetic_corpus, offering_formula_grammar
from .training import TrainConfig, TrainState, sweep, train

__version__ = "0.1.0"

__all__ = [
    "BOS_ID", "BOS_TOKEN", "EOS_ID", "EOS_TOKEN", "PAD_ID", "PAD_TOKEN",
    "SPECIAL_TOKENS", "UNK_ID", "UNK_TOKEN",
    "Checkpoint", "DatasetSplit", "EvalReport", "LengthBucketReport",
    "ModelBundle", "ModelDims", "MultiShotReport", "TemplateGrammar",
    "TrainConfig", "TrainState", "Vocabulary",
    "evaluate", "forward_sequence", "generate_synthetic_corpus",
    "greedy_complete", "init_params", "length_buckets", "load_checkpoint",
    "multishot", "offering_formula_grammar", "pca_project", "predict_topk",
    "read_corpus", "save_checkpoint", "serve", "split_dataset", "sweep",
    "tokenize_line", "train",
]

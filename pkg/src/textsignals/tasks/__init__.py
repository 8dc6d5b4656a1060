from .evaluation import EvalReport, evaluate, format_table, random_target, random_uniform
from .examples import (
    BalancedSample,
    TaskError,
    TaskExample,
    TaskSplits,
    balance_sample,
    chrono_split,
    make_examples,
    read_examples,
    write_examples,
)
from .features import (
    SparseBinaryVector,
    Vocabulary,
    audit_vocabulary,
    build_vocab,
    build_vocab_from_examples,
    featurize,
    featurize_many,
)
from .forest import ForestModel, load_model, predict, save_model, train_forest

__all__ = [
    "BalancedSample", "EvalReport", "ForestModel", "SparseBinaryVector", "TaskError", "TaskExample",
    "TaskSplits", "Vocabulary", "audit_vocabulary", "balance_sample", "build_vocab",
    "build_vocab_from_examples", "chrono_split", "evaluate", "featurize", "featurize_many",
    "format_table", "load_model", "make_examples", "predict", "random_target", "random_uniform",
    "read_examples", "save_model", "train_forest", "write_examples",
]

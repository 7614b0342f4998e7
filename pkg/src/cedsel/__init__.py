"""Select in-context demonstrations by cross-entropy difference.

Train one lightweight target model per candidate demonstration (or per
equal-size cluster), score each test input under every target, and pick
the demonstration whose model gives the lowest cross-entropy. Includes
the evaluation harness (oracles, ranks, domain composition, bootstrap)
and a numeric check that the score tracks gradient alignment.
"""

from .cluster import (
    ClusterAssignment,
    assign_equal,
    centroid_icd,
    dataset_purity,
    retrain,
    seed_clusters,
)
from .corpus import (
    Example,
    Pool,
    PromptSpec,
    assemble_prompt,
    default_prompt_spec,
    ingest,
    input_text,
    sample_pool,
    training_text,
    write_pool,
)
from .errors import BridgeError, ConfigError, DataError, EngineError, SchemaError
from .evaluation import (
    EvalReport,
    PairTable,
    accuracy,
    avg_rank,
    bootstrap_std,
    domain_analysis,
    oracle,
    predict_by_likelihood,
    rouge_l,
    run_evaluation,
    token_f1,
    verbalize,
)
from .gradcheck import TinyLM, alignment_correlation, alignment_report, ced_one_step, grad
from .lm import (
    AdaptConfig,
    BaseModel,
    TargetModel,
    Vocabulary,
    adapt,
    cross_entropy,
    train_base,
)
from .scoring import PairScore, Ranking, ScoreMatrix, rank, score_matrix, score_pair, select
from .synthetic import make_domain_pool
from .text import count_tokens, tokenize

__version__ = "0.1.0"

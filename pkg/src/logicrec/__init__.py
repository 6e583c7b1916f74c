"""logicrec: a neuro-symbolic recommender.

User interaction histories are compiled into first-order logic queries
whose literals, disjunctions, and similarity scoring are realized by
small neural networks, trained end to end with a pairwise ranking loss
on a minimal reverse-mode tensor engine.
"""

from .autodiff import Tape, Tensor, apply_primitive, backward, no_grad
from .data import (Corpus, RawInteraction, SplitDataset, binarize_and_sequence,
                   leave_one_out_split, load_prepared, parse_dataset, prepare,
                   save_prepared)
from .evaluation import MetricsReport, evaluate, ndcg_hr
from .gradcheck import finite_difference_check
from .instances import (EvalInstance, TrainingInstance, make_eval_instances,
                        make_training_instances)
from .model import (LossBreakdown, ModelConfig, ModelState, ablation_forward,
                    attention_stack, encode_literal, gru_encode, init_state,
                    or_fold, score_candidates, score_item, total_loss)
from .optim import AdamState, adam_step, init_adam
from .queries import (FullExpansion, Literal, QueryExpression, build_query,
                      expand_full, format_query, term_count)
from .training import TrainRun, train

__version__ = "0.1.0"

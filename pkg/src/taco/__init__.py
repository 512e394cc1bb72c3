"""Multitask dual-encoder retrieval testbed.

A numpy library for studying how multitask gradient combiners shape a shared
retrieval model: a feed-forward dual encoder with task-conditioned queries,
synthetic multitask benchmarks with temperature-scaled batch mixing, exact
inner-product search with episodic hard-negative mining, a per-parameter
task-sensitivity adaptive combiner plus standard baselines, and analysis
tooling for parameter-specialization reports.
"""

from .encoder import (
    EncoderConfig,
    TrainBatch,
    encode,
    encode_queries,
    encode_targets,
    init_params,
    nce_gradient,
    nce_loss,
    nce_loss_and_gradient,
    score,
)
from .data import (
    BatchSchedule,
    MultitaskDataset,
    TaskSpec,
    generate_tasks,
    load_dataset,
    make_schedule,
    mixing_batch_sizes,
    next_step_batches,
    save_dataset,
)
from .index import (
    EmbeddingIndex,
    build_index,
    load_index,
    mine_hard_negatives,
    random_negatives,
    refresh_schedule,
    save_index,
    search,
    search_batch,
)
from .sensitivity import (
    SensitivityState,
    adaptive_combine,
    gradient_matrix,
    normalize_by_median,
    raw_sensitivity,
    row_softmax,
    sensitivity_matrix,
    taco_step,
    task_distribution,
    task_weight_matrix,
    update_momentum,
)
from .optim import (
    Adam,
    AdamState,
    GradNormState,
    Sgd,
    SgdState,
    adam_init,
    adam_step,
    cgd_combine,
    gradnorm_init,
    gradnorm_update,
    lr_at,
    make_base_optimizer,
    naive_combine,
    pcgrad_combine,
    sgd_init,
    sgd_step,
)
from .metrics import (
    SpecializationReport,
    r_precision,
    recall_at_k,
    specialization_report,
    task_entropy,
    write_density_csv,
    write_histogram_csv,
    write_metrics_csv,
    write_summary_json,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import (
    ExperimentConfig,
    config_from_flat,
    config_to_flat,
    default_config,
    load_config_file,
    parse_overrides,
    write_config_file,
)
from .experiment import RunReport, run_experiment, run_sweep, train_single_task

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

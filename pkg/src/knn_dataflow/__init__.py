"""Exact k-nearest-neighbor search as streaming dataflow.

Two engines over one staged squared-L2 scan and a strict-compare top-k
queue: FQ-SD batches queries against a streamed, double-buffered dataset;
FD-SQ streams queries against a resident partitioned dataset. Either way
the result is exact and verified against brute force.
"""

from ._backend import available_backends, backend_name, set_backend
from .bench import (
    BenchmarkRun,
    ConfigInvalid,
    IoError,
    MetricsReport,
    SyntheticQuerySpec,
    SyntheticSpec,
    VerificationFailed,
    emit_report,
    format_scale_up,
    run_benchmark,
    scale_up_ratio,
)
from .core import (
    SENTINEL,
    DatasetError,
    DimensionMismatch,
    DuplicateId,
    KnnResult,
    NeighborPair,
    NonFiniteComponent,
    Query,
    VectorCollection,
    VectorRecord,
    validate_dataset,
)
from .data_io import (
    EmptyCollection,
    EmptyFile,
    FileFormatError,
    InconsistentDimension,
    InvalidCapacity,
    PartitionedDataset,
    TruncatedRecord,
    generate_synthetic,
    load_bvecs,
    load_fvecs,
    mips_to_l2,
    partition_dataset,
    write_fvecs,
)
from .distance import (
    DistanceStagingParams,
    WrongBlockCount,
    direct_sq_l2,
    full_add,
    partial_distances,
    staged_distance,
    staged_distance_block,
    vector_add_accumulate,
)
from .engines import (
    DEFAULT_QUEUE_BUDGET,
    BatchSizeMismatch,
    BudgetExceeded,
    BufferEvent,
    EngineConfig,
    EngineError,
    Mode,
    NoPartitions,
    ProducerFailure,
    StreamCursor,
    double_buffer_stream,
    run_fdsq,
    run_fqsd,
    validate_budget,
)
from .oracle import brute_force_knn, distances_match
from .topk import (
    DoubleFlush,
    IndivisibleK,
    InvalidK,
    PartitionedTopKQueue,
    PartitionAfterPush,
    PushAfterFlush,
    QueueNodeState,
    TopKQueue,
    TopKQueueError,
    queue_partition,
)

__version__ = "0.1.0"

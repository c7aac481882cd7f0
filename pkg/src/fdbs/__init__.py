"""fdbs — a self-contained federated read-only geospatial database.

Immutable checksummed shard images serve a uniform query surface behind a
simulated orchestration layer; query engines compose recursively, so a
federation of federations answers exactly like a single shard.
"""

from .backend import QueryTarget, ShardBackend
from .catalog import CAPABILITIES, FEDERATION, LEAF, Catalog, CatalogEntry
from .cluster import (
    Cluster,
    DeploymentSpec,
    ImageStore,
    Phase,
    PodSpec,
    PodStatus,
    PodTemplate,
    ServiceSpec,
    Transition,
    UpdateReport,
)
from .costmodel import (
    CostModel,
    LatencySample,
    LinearModel,
    SimulatedCost,
    WorkloadSpec,
    benchmark_live,
    benchmark_simulated,
    build_cost_model,
    crossover,
    default_cost_model,
    fit_line,
    lookup_best,
)
from .coverage import Coverage, Cuboid, parse_coverage
from .datagen import generate_records, read_dataset, write_dataset
from .distill import (
    Centroid,
    GroupAggregate,
    KnnQuery,
    aggregate_records,
    centroids,
    distance,
    group_aggregates,
    knn,
    merge_aggregates,
    prefix_len_for_zoom,
    select_nearest,
)
from .engine import Engine, QueryPlan, RangeSlice, federate, split_rows
from .errors import (
    ChecksumMismatch,
    CoverageViolation,
    DegenerateSamples,
    DuplicateRecord,
    FdbsError,
    FormatError,
    ImageNotFound,
    InvalidCoverage,
    InvalidPredicate,
    InvalidPrefixLen,
    InvalidRecord,
    InvalidSpec,
    InvariantViolation,
    NameConflict,
    NoCoverage,
    NoCrossover,
    PartialFailure,
    ServiceUnavailable,
    UnknownDeployment,
    UnknownPod,
    UnknownService,
    UnreachableChild,
    UpdateStalled,
)
from .gateway import build_federation_app, build_shard_app, canonical_json
from .image import ShardImage, build_image, count_matches, load_image, scan, serialize_image
from .partition import cell_for, partition_by_cuboid, partition_by_prefix
from .records import GeoRecord, QueryPredicate, micro_text, parse_micro, quantize
from .scenario import Scenario, parse_scenario, run_scenario
from .topology import (
    FederationSpec,
    LeafSpec,
    Topology,
    build_federation,
    build_topology,
    deploy_leaf,
    parse_topology,
)

__version__ = "0.1.0"

"""Asynchronous SGD with filtered state merging, adaptive communication
frequency, and a virtual-time transport, benchmarked on K-Means."""

from .adaptive import ControllerState, adapt, controller_tick, default_controller
from .datagen import PlacementError, SyntheticSpec, generate
from .engine import (CostModel, WorkerState, WorkerStats, merge_update,
                     parzen_accept, run_asgd, worker_step)
from .harness import (ExperimentConfig, ExperimentReport, compare_presets,
                      config_from_mapping, parse_config_file, run_experiment,
                      run_sweep)
from .kmeans import (Dataset, GroundTruth, assign, ground_truth_error,
                     load_dataset, load_ground_truth, minibatch_update,
                     point_update, quantization_error, save_dataset,
                     save_ground_truth)
from .model import (Hyperparams, ModelState, StateDimensionError, UpdateMessage,
                    deserialize_state, distance_sq, serialize_state,
                    serialized_size)
from .results import Evaluator, SolverResult, TracePoint, runtime_to_target
from .seeding import initial_state, partition_points, rng_streams
from .solvers import batch_gd, sgd_run, simuparallel_sgd
from .transport import (PRESETS, NetworkModel, NodeStats, RemoteBuffer,
                        VirtualTransport, WallClockTransport, network_preset)

__version__ = "0.1.0"

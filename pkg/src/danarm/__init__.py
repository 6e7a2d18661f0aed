"""danarm: a simulated musculoskeletal-arm lab for online danger avoidance.

A small neural network learns, online, the danger probability of
muscle-length commands from a tension-triggered safety mechanism, and
the learned network is used to modify commands toward safety and to
solve avoidance-constrained prioritized inverse kinematics.
"""

from .config import LabConfig, load_config
from .experiments import (EpisodeLog, ExperimentConfig, agreement_curve,
                          evaluate_agreement, fixed_end_pull,
                          random_motion_stream, run_ik_experiment,
                          run_modification_experiment, run_online_experiment)
from .ik import (IkProblem, IkResult, UnreachableTargetError,
                 forward_kinematics, jacobian, solve_prioritized)
from .modifier import ModifierConfig, ModifyResult, modify
from .network import (DangerNet, TrainBatch, WeightFormatError, forward,
                      input_gradient, load_weights, load_weights_file,
                      save_weights, save_weights_file, train_epochs)
from .plant import (ArmConfig, ConfigError, DangerZone, JointBoxZone,
                    MusclePairTrap, PlantState, TICK_S, init_state,
                    muscle_length_of, step, tension_of)
from .safety import (SafetyParams, SafetyState, apply_safety,
                     initial_safety_state, safety_step)
from .trainer import (InitialTrainConfig, ReplayBuffer, StoreResult,
                      generate_initial_dataset, online_update,
                      run_initial_training)

__version__ = "0.1.0"

from .ssp import *
from .model import *
from .estimation import *
from .learner import *
from .oracle import *
from .regret import *
from .config import ExperimentConfig, ContextSpec, BaselineConfig, load_config, dump_config, config_from_dict
from .runner import ExperimentRunner, run_experiment, baseline_context_blind, report_run_dir

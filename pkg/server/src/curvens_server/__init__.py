"""Reference model server for the curvens wire protocol."""
from .app import create_app
from .backends import BackendError, LoadedModel
from .config import ModelEntry, ServerConfig, config_from_dict, load_config, paper_config

__version__ = "0.1.0"

from .extract import ExtractError, ExtractorConfig, ExtractReport, extract_features, self_check
from .models import ModelError, load_model, state_dict_sha256
from .vprf import VprfError, read_vprf, write_vprf

__all__ = [
    "ExtractError",
    "ExtractorConfig",
    "ExtractReport",
    "ModelError",
    "VprfError",
    "extract_features",
    "load_model",
    "read_vprf",
    "self_check",
    "state_dict_sha256",
    "write_vprf",
]

__version__ = "0.1.0"

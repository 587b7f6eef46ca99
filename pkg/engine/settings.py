"""
Loads the numerical tolerances from data/numerics.json.
Values are cached after the first read; missing or malformed files fall
back to the built-in defaults below.
"""
import json, os, logging
from typing import Dict, Union

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")
NUMERICS_FILE = os.path.join(DATA_DIR, "numerics.json")

Number = Union[int, float]

DEFAULTS: Dict[str, Number] = {
    "rank_tol": 1e-9,
    "zero_real_band": 1e-9,
    "leibniz_tol": 1e-10,
    "structure_tol": 1e-10,
    "algebra_tol": 1e-10,
    "group_tol": 1e-8,
    "identity_tol": 1e-10,
    "unipotent_tol": 1e-9,
    "expm_squaring_threshold": 0.5,
    "qr_sweeps_per_dim": 100,
    "closed_form_zero_tol": 1e-14,
    "drift_warning": 1e-6,
    "fd_step": 1e-6,
    "min_oracle_density": 10,
    "min_residual_samples": 100,
}

# Cache for loaded data to avoid repeated file I/O
_data_cache: Dict[str, Dict[str, Number]] = {}


def _load_numerics() -> Dict[str, Number]:
    """Load tolerances, overlaying the file on top of DEFAULTS"""
    if 'numerics' not in _data_cache:
        values = dict(DEFAULTS)
        try:
            with open(NUMERICS_FILE, "r", encoding="utf-8") as f:
                loaded = json.load(f)
            for key, value in loaded.items():
                if key not in DEFAULTS:
                    logger.warning("ignoring unknown setting %r in %s", key, NUMERICS_FILE)
                    continue
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    logger.warning("setting %r is not numeric, keeping default", key)
                    continue
                values[key] = value
        except (FileNotFoundError, json.JSONDecodeError, AttributeError) as e:
            logger.warning("using default numerics (%s)", e)
        _data_cache['numerics'] = values
    return _data_cache['numerics']


def get(name: str) -> Number:
    """Return one tolerance / limit by name"""
    values = _load_numerics()
    if name not in values:
        raise KeyError(f"unknown numerical setting: {name}")
    return values[name]


def as_dict() -> Dict[str, Number]:
    return dict(_load_numerics())


def warmup():
    """Load the settings file on startup and log what was found."""
    values = _load_numerics()
    logger.info("loaded %d numerical settings", len(values))


def clear_cache():
    """Clear the data cache - useful for testing or reloading config"""
    _data_cache.clear()

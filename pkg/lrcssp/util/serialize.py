import hashlib
import json

import numpy as np

__all__ = ['FORMAT_VERSION', 'to_jsonable', 'canonical_json', 'fingerprint']

FORMAT_VERSION = 1


def to_jsonable(obj):
    """Turn numpy containers into plain lists/floats, row-major
    """
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def canonical_json(obj):
    # insertion order is the documented field order, so no key sorting
    return json.dumps(to_jsonable(obj), separators=(',', ':'), allow_nan=True)


def fingerprint(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()

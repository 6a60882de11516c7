#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Configuration for the Dieudonné-module lab
"""

import os

from dotenv import load_dotenv

# Carrega variáveis de ambiente
load_dotenv()

# Enumeration limits
ENUMERATION_CONFIG = {
    'candidate_cap': 100_000,        # overlattices per enumeration
    'witness_cap': 1_000_000,        # intertwiner combinations tried by is_isomorphic
    'witness_max_field_degree': 4,   # search only over fields with <= p^4 elements
    'witness_max_rank': 5,
    'root_search_cap': 1_000_000,    # residue elements scanned when embedding subfields
}

# Precision defaults used by the CLI
PRECISION_CONFIG = {
    'default_N': 6,
    'safety_margin': 2,
}

# Parallelism
PARALLEL_CONFIG = {
    'enabled': False,  # single-threaded unless --parallel is given
    'max_workers': 4,
}


class Config:
    """Centralised settings read from the environment"""

    # Logs
    LOG_LEVEL = os.getenv("DVLAB_LOG_LEVEL", "INFO").upper()
    LOG_FILE = os.getenv("DVLAB_LOG_FILE", "")

    # Defaults
    DEFAULT_PRECISION = int(os.getenv("DVLAB_DEFAULT_PRECISION", PRECISION_CONFIG['default_N']))
    MAX_WORKERS = int(os.getenv("DVLAB_MAX_WORKERS", PARALLEL_CONFIG['max_workers']))


def get_candidate_cap() -> int:
    """Enumeration cap; DVLAB_CANDIDATE_CAP is read on every call so overrides apply immediately."""
    return int(os.getenv("DVLAB_CANDIDATE_CAP", ENUMERATION_CONFIG['candidate_cap']))


def get_witness_cap() -> int:
    return int(os.getenv("DVLAB_WITNESS_CAP", ENUMERATION_CONFIG['witness_cap']))


def default_precision(needed: int, budget: int = 0) -> int:
    """
    Precision used when the caller omits N.

    Args:
        needed: digits required to read the Newton polygon
        budget: digits that isogenies and Φ-divisions are expected to consume

    Returns:
        max(DEFAULT_PRECISION, needed + budget + safety margin)
    """
    return max(Config.DEFAULT_PRECISION, needed + budget + PRECISION_CONFIG['safety_margin'])


def resolve_workers(parallel) -> int:
    """Number of worker threads for an optional --parallel value (None/0/1 mean sequential)."""
    if parallel is None:
        return Config.MAX_WORKERS if PARALLEL_CONFIG['enabled'] else 1
    return max(1, int(parallel))

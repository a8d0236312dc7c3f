#  Copyright (c) 2026 by Contributors
"""Levi-graph Transformer reasoner over knowledge graphs.

The pipeline commands mirror the ``kgt`` executable; ``run`` raises on a
non-zero exit code instead of returning it.
"""

try:
    from . import _kgt
except ImportError:  # in-tree test run: the extension sits on PYTHONPATH
    import _kgt

ArityError = _kgt.ArityError
ConfigError = _kgt.ConfigError
IntegrityError = _kgt.IntegrityError
KgtError = _kgt.KgtError
MissingArtifactError = _kgt.MissingArtifactError
Model = _kgt.Model
filtered_rank = _kgt.filtered_rank
ground_answers = _kgt.ground_answers
hits_at_k_m = _kgt.hits_at_k_m
levi_counts = _kgt.levi_counts
mrr_m = _kgt.mrr_m
query_types = _kgt.query_types
run_cli = _kgt.run_cli
smoothed_targets = _kgt.smoothed_targets
union_combine = _kgt.union_combine

__version__ = _kgt.__version__

_EXIT_ERRORS = {2: ConfigError, 3: MissingArtifactError}


def run(*args) -> str:
    """Runs one command, e.g. ``run("--config", "toy.conf", "ingest")``.

    Returns the command's standard output.
    """
    code, out, err = run_cli([str(a) for a in args])
    if code != 0:
        raise _EXIT_ERRORS.get(code, KgtError)(err.strip() or f"exit code {code}")
    return out

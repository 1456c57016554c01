"""
Input/output helpers: CSV reading and writing, result tabulation and worker counts
"""
from multiprocessing import cpu_count
import os

from numpy import asarray, flatnonzero
from pandas import DataFrame, read_csv
import h5py

from causalpatterns.base import DegenerateData, TooShort


__all__ = ['read_series_csv', 'write_table', 'tabulate_results', 'thread_count']

FLOAT_FORMAT = '%.17g'
THREADS_ENV = 'CAUSAL_PATTERNS_THREADS'


def thread_count(requested=None):
    """
    Number of worker processes to use.

    Parameters
    ----------
    requested : {None, int}, optional
        Requested number of workers. Default is None, which requests every available CPU.

    Returns
    -------
    n : int
        `requested`, capped by the number of CPUs and by the CAUSAL_PATTERNS_THREADS environment variable
        when it is set.
    """
    n = cpu_count() if requested is None else int(requested)
    cap = os.getenv(THREADS_ENV)
    if cap is not None and cap.strip():
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got '{cap}'.")
    return max(1, min(n, cpu_count()))


def read_series_csv(path, columns=None):
    """
    Read a multichannel series from a CSV file with a header row and one row per frame.

    Parameters
    ----------
    path : str
        Path to the CSV file.
    columns : {None, list}, optional
        Column names to read, in order. Default is None, which reads every column.

    Returns
    -------
    series : numpy.ndarray
        (T, len(columns)) array.

    Raises
    ------
    DegenerateData
        If any selected value is missing. The message lists the file line numbers (header is line 1).
    TooShort
        If the file holds no data rows.
    """
    frame = read_csv(path)
    if columns is None:
        columns = list(frame.columns)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ValueError(f"Column(s) {missing} not found in {path}.")

    frame = frame[list(columns)]
    if frame.shape[0] == 0:
        raise TooShort(f"{path} holds no data rows.")
    bad = frame.isna().any(axis=1).values
    if bad.any():
        lines = [int(i) + 2 for i in flatnonzero(bad)]
        raise DegenerateData(f"Missing values in {path} on line(s) {lines}.")
    try:
        return frame.values.astype(float)
    except ValueError as e:
        raise DegenerateData(f"Non-numeric values in {path}: {e}") from e


def write_table(path, columns):
    """
    Write columns to a CSV file with floats at 17 significant digits.

    Parameters
    ----------
    path : str
        Output path.
    columns : dict
        Ordered mapping of column name to 1D values.
    """
    DataFrame({k: asarray(v) for k, v in columns.items()}, columns=list(columns)).to_csv(
        path, index=False, float_format=FLOAT_FORMAT)


def _get(results, key):
    keys = key.split('/', 1)
    if len(keys) == 2:
        return _get(results[keys[0]], keys[1])
    return results[keys[0]]


def tabulate_results(results, csv_path):
    """
    Tabulate the per-cluster Granger causality results of a processing pipeline.

    Parameters
    ----------
    results : {dict, str}
        Either a dictionary of the results, or the path to the h5 file where the results were stored.
    csv_path : str
        Path to save the tabular data at.
    """
    keys = ['Cluster Id', 'N Samples', 'Rho1', 'GC Index']
    if isinstance(results, dict):
        cols = [asarray(_get(results, f'Processed/Granger/{k}')) for k in keys]
        whole = float(_get(results, 'Processed/Granger/Whole GC'))
    else:
        with h5py.File(results, 'r') as f:
            cols = [f[f'Processed/Granger/{k}'][()] for k in keys]
            whole = float(f['Processed/Granger/Whole GC'][()])

    table = DataFrame({
        'cluster_id': cols[0].astype(int),
        'n_samples': cols[1].astype(int),
        'rho1': cols[2],
        'gc_index': cols[3],
        'whole_series_gc': whole
    }, columns=['cluster_id', 'n_samples', 'rho1', 'gc_index', 'whole_series_gc'])
    table.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)

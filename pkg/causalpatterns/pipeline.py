"""
Composable processing steps for causal pattern extraction over a dictionary or HDF5 container
"""
import logging

from numpy import asarray
import h5py

from causalpatterns.base import RegressionDataset
from causalpatterns.preprocess import EmbeddingSpec, build_regression_blocks
from causalpatterns.mppcca import FitConfig, MppccaModel, fit
from causalpatterns.clustering import clusterwise_gc, kmeans_baseline, misallocation_rate


__all__ = ['Sequential', 'RegressionBlocks', 'MixtureFit', 'KMeansBaseline', 'ClusterGranger']

logger = logging.getLogger(__name__)

SERIES = 'Series/{name}'
PROC = 'Processed/{step}/{value}'


class _BaseProcess:
    def __init__(self):
        """
        General class (hidden), intended to be overwritten by subclasses
        """
        self._data = {}

    @staticmethod
    def __set_key(x, key, value):
        keys = key.split('/', 1)
        if len(keys) == 2:
            if keys[0] not in x:
                x[keys[0]] = {}
            elif not isinstance(x[keys[0]], dict):
                raise ValueError(f"Key ({keys[0]}) is not a dictionary.")

            _BaseProcess.__set_key(x[keys[0]], keys[1], value)
        else:
            x[keys[0]] = value

    @staticmethod
    def __get_key(x, key):
        keys = key.split('/', 1)
        if len(keys) == 2:
            return _BaseProcess.__get_key(x[keys[0]], keys[1])
        return x[keys[0]]

    @property
    def data(self):
        return self._data

    @data.setter
    def data(self, values):
        """
        Value is a tuple-like:
        (key, data)

        where key is a forward-slash delimited string of keys, ie 'Processed/Blocks/X' would go into
        ['Processed']['Blocks']['X']
        """
        key, value = values
        if isinstance(self._data, dict):
            _BaseProcess.__set_key(self._data, key, value)
        else:
            if key in self._data:
                del self._data[key]
            self._data[key] = value

    def _get(self, key):
        if isinstance(self._data, dict):
            value = _BaseProcess.__get_key(self._data, key)
        else:
            value = self._data[key][()]
        if isinstance(value, bytes):
            value = value.decode('utf-8')
        return value

    def _has(self, key):
        if isinstance(self._data, dict):
            try:
                _BaseProcess.__get_key(self._data, key)
            except (KeyError, TypeError):
                return False
            return True
        return key in self._data

    def predict(self, data):
        """
        Run the process on the data.

        Parameters
        ----------
        data : {str, dict}
            Either a H5 file path (string), or a dictionary. Both are modified in place and must follow the
            below format.

        Notes
        -----
        The layout for the H5 file or the dictionary must be as follows (keys that are generated from processing steps
        are in angle brackets <...>):

        * Series

          * Effect
          * Cause
          * Truth (optional)
        * <Processed>

          * <Blocks>

            * <X>, <Y1>, <Y2>, <Times>
          * <Mixture>

            * <Responsibilities>, <Labels>, <Log Likelihood>, <Model>
          * <Baseline>

            * <Labels>
          * <Granger>

            * <Cluster Id>, <N Samples>, <Rho1>, <GC Index>, <Whole GC>
          * <Evaluation>

            * <Misallocation>
        """
        if isinstance(data, dict):  # dictionary passed
            self._data = data  # directly set
            self._call()
        else:
            with h5py.File(data, 'r+') as self._data:
                self._call()

    def _call(self):
        pass

    @staticmethod
    def _check_sign(val, name, inc_zero=False):
        if inc_zero:
            if val < 0:
                raise ValueError(f"{name} must be greater than or equal to 0.")
        elif val <= 0:
            raise ValueError(f"{name} must be greater than 0.")

    def _requires(self, keys):
        """
        Check for required keys in the data being used.

        Parameters
        ----------
        keys : list-like
            Keys that are required to perform the processing

        Raises
        ------
        KeyError
            If the required keys are not found
        """
        for key in keys:
            if not self._has(key):
                raise KeyError(f"Key ({key}) required by {type(self).__name__} not found in the data.")

    def _blocks(self):
        self._requires([PROC.format(step='Blocks', value=v) for v in ('X', 'Y1', 'Y2', 'Times')])
        return RegressionDataset(
            x=asarray(self._get(PROC.format(step='Blocks', value='X'))),
            y1=asarray(self._get(PROC.format(step='Blocks', value='Y1'))),
            y2=asarray(self._get(PROC.format(step='Blocks', value='Y2'))),
            times=asarray(self._get(PROC.format(step='Blocks', value='Times')))
        )


class Sequential:
    def __init__(self):
        """
        Sequential model for running a causal pattern extraction pipeline

        Methods
        -------
        add(process)
            Add a processing step to the pipeline.
        predict(data)
            Predict/run the processing pipeline on the input data
        """
        self.procs = []

    def add(self, process):
        """
        Add a processing step to the pipeline.

        Parameters
        ----------
        process : class
            A instantiated process class, that has a `predict` method that takes in data as a dictionary or path to
            a HDF file (see :meth:`~causalpatterns.pipeline.Sequential.predict`)
        """
        self.procs.append(process)

    def predict(self, data):
        """
        Predict/run the processing pipeline on the input data

        Parameters
        ----------
        data : {str, dict}
            Either a H5 file path (string), or a dictionary. The h5 file or dictionary will be modified in-place.

        Notes
        -----
        The input H5 file or dictionary must hold at least:

        * Series
            * Effect
            * Cause
        """
        for proc in self.procs:
            proc.predict(data)


class RegressionBlocks(_BaseProcess):
    def __init__(self, spec=EmbeddingSpec(delay=1, stride=1, window=1), target_ratio=1.0, kinematic=False):
        """
        Build PCA-reduced regression blocks from the effect and cause series.

        Parameters
        ----------
        spec : EmbeddingSpec, optional
            Delay embedding parameters. Default is delay=1, stride=1, window=1, the one-step lag construction.
        target_ratio : float, optional
            PCA cumulative contribution ratio. Default is 1.0 (keep all directions).
        kinematic : bool, optional
            Treat the series as positions and use (position; velocity) features. Default is False.
        """
        super().__init__()
        self._check_sign(target_ratio, 'target_ratio')
        self.spec = spec
        self.target_ratio = target_ratio
        self.kinematic = kinematic

    def _call(self):
        self._requires([SERIES.format(name='Effect'), SERIES.format(name='Cause')])
        dataset = build_regression_blocks(
            asarray(self._get(SERIES.format(name='Effect'))),
            asarray(self._get(SERIES.format(name='Cause'))),
            self.spec,
            target_ratio=self.target_ratio,
            kinematic=self.kinematic
        )
        self.data = (PROC.format(step='Blocks', value='X'), dataset.x)
        self.data = (PROC.format(step='Blocks', value='Y1'), dataset.y1)
        self.data = (PROC.format(step='Blocks', value='Y2'), dataset.y2)
        self.data = (PROC.format(step='Blocks', value='Times'), dataset.times)


class MixtureFit(_BaseProcess):
    def __init__(self, k=3, dt=None, config=None):
        """
        Fit an MPPCCA model to the regression blocks.

        Parameters
        ----------
        k : int, optional
            Number of components. Default is 3.
        dt : {None, int}, optional
            Latent dimension. Default is None, which uses min(d1, d2).
        config : {None, FitConfig}, optional
            EM options. Default is None, which uses ``FitConfig()``.
        """
        super().__init__()
        self._check_sign(k, 'k')
        self.k = k
        self.dt = dt
        self.config = FitConfig() if config is None else config

    def _call(self):
        dataset = self._blocks()
        model, resp, trace = fit(dataset, self.k, dt=self.dt, config=self.config)

        self.data = (PROC.format(step='Mixture', value='Responsibilities'), resp.r)
        self.data = (PROC.format(step='Mixture', value='Labels'), resp.labels)
        self.data = (PROC.format(step='Mixture', value='Log Likelihood'), asarray(trace.log_likelihood_per_iter))
        self.data = (PROC.format(step='Mixture', value='Converged'), trace.converged)
        self.data = (PROC.format(step='Mixture', value='Model'), model.to_json())

    @staticmethod
    def model(data):
        """
        Load the fitted model stored by this step in a dictionary or H5 file.
        """
        if isinstance(data, dict):
            return MppccaModel.from_json(data['Processed']['Mixture']['Model'])
        with h5py.File(data, 'r') as f:
            text = f[PROC.format(step='Mixture', value='Model')][()]
        return MppccaModel.from_json(text.decode('utf-8') if isinstance(text, bytes) else text)


class KMeansBaseline(_BaseProcess):
    def __init__(self, k=3, seed=0):
        """
        k-means on the joint (x, y2, y1) vectors of the regression blocks.

        Parameters
        ----------
        k : int, optional
            Number of clusters. Default is 3.
        seed : int, optional
            Seed for the k-means++ initialization. Default is 0.
        """
        super().__init__()
        self._check_sign(k, 'k')
        self.k = k
        self.seed = seed

    def _call(self):
        labels = kmeans_baseline(self._blocks(), self.k, seed=self.seed).labels
        self.data = (PROC.format(step='Baseline', value='Labels'), labels)


class ClusterGranger(_BaseProcess):
    def __init__(self, ridge=None, labels='Processed/Mixture/Labels', step='Granger'):
        """
        Per-cluster Granger causality of a clustering of the regression blocks, and its misallocation rate
        when ground-truth labels are available under 'Series/Truth'.

        Parameters
        ----------
        ridge : {None, float}, optional
            Ridge for covariance inversions. Default is None (scaled default ridge).
        labels : str, optional
            Key of the cluster labels. Default is 'Processed/Mixture/Labels'.
        step : str, optional
            Name of the group the results are written under. Default is 'Granger'.
        """
        super().__init__()
        if ridge is not None:
            self._check_sign(ridge, 'ridge', inc_zero=True)
        self.ridge = ridge
        self.labels = labels
        self.step = step

    def _call(self):
        dataset = self._blocks()
        self._requires([self.labels])
        labels = asarray(self._get(self.labels)).astype(int)
        report = clusterwise_gc(dataset, labels, ridge=self.ridge)

        frame = report.to_frame()
        self.data = (PROC.format(step=self.step, value='Cluster Id'), frame['cluster_id'].values)
        self.data = (PROC.format(step=self.step, value='N Samples'), frame['n_samples'].values)
        self.data = (PROC.format(step=self.step, value='Rho1'), frame['rho1'].values.astype(float))
        self.data = (PROC.format(step=self.step, value='GC Index'), frame['gc_index'].values.astype(float))
        self.data = (PROC.format(step=self.step, value='Whole GC'), report.whole_series_gc)

        if self._has(SERIES.format(name='Truth')):
            truth = asarray(self._get(SERIES.format(name='Truth'))).astype(int)[dataset.times]
            rate = misallocation_rate(labels, truth)
            logger.info(f"Misallocation rate of '{self.labels}': {rate:.4f}")
            name = 'Misallocation' if self.step == 'Granger' else f'{self.step} Misallocation'
            self.data = (PROC.format(step='Evaluation', value=name), rate)
        else:
            logger.debug("No ground-truth labels; skipping misallocation.")

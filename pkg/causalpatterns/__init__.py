from causalpatterns.base import RegressionDataset, CausalPatternsError, ConditioningError, DomainError, \
    InsufficientSamples, NumericalError, EmptyClusterError, LengthMismatch, TooShort, DegenerateData
from causalpatterns.pcca import CovarianceBundle, PccaSolution, GrangerEstimate, partial_covariance, solve_pcca, \
    granger_index, granger_from_blocks, granger_trace_index, default_ridge
from causalpatterns.mppcca import ComponentParams, MppccaModel, Responsibilities, FitTrace, FitConfig, \
    component_covariance, log_likelihood, e_step, m_step, relation_groups, fit
from causalpatterns.clustering import ClusterAssignment, ClusterGc, GcReport, KMeans, hard_assign, kmeans, \
    kmeans_baseline, misallocation_rate, misallocation_curve, clusterwise_gc
from causalpatterns.preprocess import EmbeddingSpec, PcaBasis, velocity, feature, embed, embedding_times, pca_fit, \
    build_regression_blocks
from causalpatterns.synthgen import GaussianStream, ClusterParams, Exp1Params, Exp2Params, LabeledSeries, gen_exp1, \
    gen_exp2
from causalpatterns.utility import read_series_csv, write_table, tabulate_results, thread_count
from causalpatterns import pipeline
from causalpatterns.version import __version__

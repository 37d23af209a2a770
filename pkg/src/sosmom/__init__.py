"""Sum-of-squares median-of-means estimators for heavy-tailed data."""

from .covariance import CovConfig, CovResult, dist_est, estimate_covariance, grad_est, test_cov_value
from .dataio import DatasetParseError, read_dataset, write_dataset
from .harness import BenchConfig, BenchReport, median_of_means_1d, run_tail_benchmark
from .normmean import CentralQuery, NormOracle, estimate_mean_norm, find_central_point, gen_tst_value, is_central
from .regression import RegConfig, RegDataset, certify_done, descent_step, estimate_regression, ols_init
from .roadblock import gen_block_mixture, hermite_planted_moment, hermite_single_moment, low_degree_norm
from .sampler import BucketSummary, Dataset, DistSpec, make_buckets, sample_dist, truncate_samples
from .sdp import SDPProblem, SDPSolution, solve_sdp
from .sos import PseudoExpectation, build_basis, compile_program, max_pe_quadform, sos_bernstein_bound

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "BenchReport",
    "BucketSummary",
    "CentralQuery",
    "CovConfig",
    "CovResult",
    "Dataset",
    "DatasetParseError",
    "DistSpec",
    "NormOracle",
    "PseudoExpectation",
    "RegConfig",
    "RegDataset",
    "SDPProblem",
    "SDPSolution",
    "build_basis",
    "certify_done",
    "compile_program",
    "descent_step",
    "dist_est",
    "estimate_covariance",
    "estimate_mean_norm",
    "estimate_regression",
    "find_central_point",
    "gen_block_mixture",
    "gen_tst_value",
    "grad_est",
    "hermite_planted_moment",
    "hermite_single_moment",
    "is_central",
    "low_degree_norm",
    "make_buckets",
    "max_pe_quadform",
    "median_of_means_1d",
    "ols_init",
    "read_dataset",
    "run_tail_benchmark",
    "sample_dist",
    "solve_sdp",
    "sos_bernstein_bound",
    "test_cov_value",
    "truncate_samples",
    "write_dataset",
]

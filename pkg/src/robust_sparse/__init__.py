"""Optimal-error robust sparse Gaussian estimation under Huber contamination.

Estimators for the k-sparse mean, the spiked-covariance direction, and the
sparse regressor, each with error scaling linearly in the corruption rate;
plus the contamination lab that generates the benchmark instances and the
oracles the test suite checks everything against.
"""

from .contamination import (ContaminationSpec, Dataset, check_goodness,
                            gen_mean_task, gen_pca_task, gen_regression_task,
                            load_dataset, save_dataset)
from .errors import (DegenerateWeightsError, EmptySliceError, ParameterError,
                     VarianceStepError)
from .filtering import (WeightVector, WeightedMoments, downweight_filter,
                        weighted_moments)
from .mean_estimation import (MeanConfig, MeanRunTrace, certificate_check,
                              dense_robust_mean, naive_prune, preprocess,
                              robust_sparse_mean)
from .pca import (PcaConfig, conditional_law_oracle, conditional_slice,
                  robust_sparse_pca, robust_variance_1d, warm_start)
from .regression import (RegressionConfig, regression_conditional_oracle,
                         robust_sigma_y, robust_sparse_regression)
from .sparse_linalg import (SparseDirection, SparseDirectionSet, fkk_norm,
                            fkk_norm_bruteforce, greedy_decomposition,
                            sparse_bilinear_bound_check, sparse_norm_2k,
                            sparse_op_norm_oracle, truncate_top_k)

__version__ = "0.1.0"

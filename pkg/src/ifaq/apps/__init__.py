"""Linear regression and regression tree programs, with brute-force oracles."""

from .cart import (
    RegressionTree, TreeConfig, TreeConfigError, TreeNode, build_regression_tree_program,
    default_thresholds, node_program_source, rmse, train_regression_tree,
)
from .lr import (
    ConfigError, LRConfig, build_linear_regression_program, linear_regression_source,
    theta_dict, with_intercept,
)
from .oracle import OracleError, bgd, cart, covar, materialize_join

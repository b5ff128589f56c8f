"""Behavioural optimisation of QALY-ROI incentive systems.

Forward model, regularised inverse estimation, impact indices, Monte
Carlo scenarios, sensitivity analysis and empirical panel calibration.
"""

__version__ = "0.1.0"

from .core import (
    PARAM_NAMES,
    BehavioralParams,
    ForwardModelConfig,
    ObservationSeries,
    cost,
    generate_observations,
    optimal_action,
    qaly_response,
    response_function,
    temporal_weight,
    utility,
)
from .errors import (
    CalibrationError,
    ConfigError,
    ConvergenceError,
    DataError,
    DegeneratePeriodError,
    DegenerateRegressionError,
    DomainError,
    QalyRoiError,
    SchemaError,
    StatisticsError,
)
from .impact import (
    ALPHA_HEALTH,
    fairness_counterfactual,
    macro_conversion,
    sii_dynamic,
    sii_empirical,
    sii_series,
    sii_static,
)
from .inverse import InverseConfig, InverseFit, convexity_check, fit, inverse_loss, loss_hessian, stability_probe
from .panel import (
    calibrate_behavioral,
    fit_ar1,
    fit_ols,
    generate_synthetic_panel,
    load_panel,
    panel_objective,
    write_panel,
)
from .sensitivity import (
    FRACTION_PRESETS,
    dynamic_objective,
    full_report,
    robustness_study,
    sensitivity_coefficient,
    sensitivity_field,
)
from .simulation import (
    TABLE_B1,
    ScenarioConfig,
    adaptation_path,
    compare_policies,
    convergence_time,
    preset,
    run_scenario_suite,
    scenario_objective,
    simulate,
)

"""Multi-user MIMO downlink precoding, detection and power allocation.

The pipeline runs channel -> truncated SVDs -> stacked decomposition ->
precoder -> power allocation -> detection -> SINR/SE scoring.  Each stage
lives in its own module; :mod:`mimopa.harness` wires them into reproducible
Monte-Carlo ensembles and :mod:`mimopa.oracle` provides the brute-force
second opinions the test suite certifies the solvers against.
"""

from .channel import (
    SystemDims,
    TruncatedSvd,
    StackedDecomposition,
    generate_rayleigh,
    generate_correlated,
    generate_near_orthogonal,
    truncated_svd,
    stack_svds,
    save_channels,
    load_channels,
)
from .precoding import (
    PrecoderKind,
    Precoder,
    PowerAllocation,
    ConstraintReport,
    build_precoder,
    apply_power,
    check_constraints,
)
from .detection import (
    DetectionSet,
    mmse_detection,
    mmse_irc_detection,
    mmse_irc_detection_ruu,
    conjugate_detection,
    build_detection_set,
)
from .metrics import (
    NoiseModel,
    McsTable,
    GeometricMean,
    EesmFixedBeta,
    EesmTableDriven,
    load_mcs_table,
    per_layer_sinr,
    layer_sinrs,
    geo_mean_eff_sinr,
    eesm_eff_sinr,
    eesm_fixed_point,
    mcs_select,
    effective_sinr,
    spectral_efficiency,
    log_se_leading_term,
    to_db,
    from_db,
)
from .power_allocation import (
    PowerConstraint,
    KktSolution,
    EesmPaContext,
    EesmPaResult,
    equal_pa_tpc,
    equal_pa_papc_start,
    eesm_tpc_closed_form,
    eesm_lagrangian_gradient,
    papc_kkt_solve,
    intersection_method_geo,
    intersection_method_eesm,
)
from .harness import (
    Scenario,
    RunRecord,
    ScenarioResult,
    parse_scenario,
    load_scenario,
    run_scenario,
    emit_results,
)

__version__ = "0.1.0"

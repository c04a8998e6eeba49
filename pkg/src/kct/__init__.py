"""Kicked coupled tops: Floquet blocks, OTOCs, classical baselines and random-matrix averages."""

__version__ = "0.1.0"

from .classical import (  # noqa: E402
    ClassicalSpinPair,
    LyapunovEstimate,
    MapParameters,
    benettin_lyapunov,
    kct_map_inverse,
    kct_map_step,
    lyapunov_vs_fz,
    poincare_section,
)
from .ensembles import (  # noqa: E402
    EnsembleSpec,
    c_dgue_analytic,
    c_gue_analytic,
    c_rmt_ixjx_baseline,
    monte_carlo_otoc,
    sample,
)
from .floquet import (  # noqa: E402
    EigenDecomposition,
    FloquetOperator,
    SectorFloquet,
    build_full_floquet,
    build_sector_floquet,
    check_time_reversal,
    eigendecompose,
)
from .husimi import husimi, husimi_entropy, percival_partition  # noqa: E402
from .otoc import (  # noqa: E402
    OtocSeries,
    coherent_state_otoc_scan,
    fit_relaxation,
    floquet_state_otoc,
    infinite_time_average_analytic,
    ixjx_otoc,
    izjz_otoc,
    mixture_otoc,
    otoc_correlator,
    otoc_direct,
    otoc_sector_ratio,
    relaxation_series,
)
from .spin import (  # noqa: E402
    CGTable,
    build_spin_operators,
    clebsch_gordan_table,
    projected_coherent_state,
)

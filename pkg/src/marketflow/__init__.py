"""Market area analysis: Huff, Competing Destinations and MCI models,
nonlinear calibration, and Hansen / 2SFCA accessibility."""

__version__ = "0.1.0"

from marketflow.access import AccessibilityResult, fca2s, hansen
from marketflow.calibrate import (
    FitConfig,
    FitResult,
    ObservedData,
    ObservedKind,
    build_objective,
    fit_huff,
)
from marketflow.decay import DecayKind, DecaySpec, eval_decay, parse_decay
from marketflow.geo import GeoPoint, distance_matrix, haversine_km
from marketflow.huff import (
    CDParams,
    HuffParams,
    MarketAreas,
    cd_probabilities,
    clustering_indicator,
    flows,
    huff_model,
    market_areas,
    probabilities,
    utilities,
)
from marketflow.mci import (
    MCIDesign,
    MCIFit,
    ZeroSharePolicy,
    log_centering_transform,
    mci_fit,
    mci_predict,
)
from marketflow.metrics import GOFMetrics, gof_metrics
from marketflow.model import (
    CostSource,
    CustomerOrigin,
    InteractionMatrix,
    SupplyLocation,
    create_interaction_matrix,
    set_observed,
    set_transport_costs,
)
from marketflow.optimize import simplex_minimize

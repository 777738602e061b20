"""Urban-canyon GNSS simulator: ray-traced multipath, OU noise, least-squares fixes."""

from canyonsim.channel import (
    OUNoiseConfig,
    OUNoiseState,
    PseudorangeMeasurement,
    ReceiverConfig,
    Visibility,
    classify_visibility,
    epoch_measurements,
    generate_pseudorange,
    multipath_offset,
    ou_initial_state,
    ou_step,
)
from canyonsim.citymodel import BuildingFootprint, CityModel, CityModelError, load_city_model
from canyonsim.geodesy import (
    GeodeticOrigin,
    ecef_to_local,
    geodetic_to_local,
    local_to_ecef,
    local_to_geodetic,
)
from canyonsim.harness import (
    EpochRecord,
    HeatmapGrid,
    HeatmapSpec,
    ScenarioConfig,
    generate_heatmap,
    load_scenario,
    raycheck,
    run_scenario,
)
from canyonsim.raycast import GridIndex, Ray, RayHit, RayPairResult, build_index, cast_ray, cast_satellite_rays
from canyonsim.satellites import (
    FixedSatellite,
    KeplerianEphemeris,
    SatelliteState,
    azimuth_elevation,
    fixed_constellation,
    propagate_kepler,
    solve_kepler,
)
from canyonsim.solver import (
    DopComponents,
    DopRating,
    FixSolution,
    InsufficientSatellites,
    SingularGeometry,
    SolverConfig,
    classify_dop,
    compute_dop,
    solve_position,
)

__version__ = "0.1.0"

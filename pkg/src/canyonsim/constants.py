"""Physical and geodetic constants shared across the simulator."""

# WGS-84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# Earth gravitational parameter [m^3/s^2] and rotation rate [rad/s], GPS values
MU_EARTH = 3.986005e14
OMEGA_EARTH = 7.2921151467e-5

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_MAX_RANGE = 5000.0
DEFAULT_NOMINAL_RANGE = 2.0e7
DEFAULT_ELEVATION_MASK = 0.1745  # ~10 deg

//! Spherical-earth geodesics and the kinematic bicycle-model heading update.
//!
//! Bearings are compass degrees: 0 = North, clockwise, always in `[0, 360)`.
//! Steering angles are degrees with positive meaning a left turn, so a
//! positive heading increment is *subtracted* from the bearing.

/// Mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehiclePose {
    pub lat: f64,
    pub lon: f64,
    pub bearing: f64,
}

impl VehiclePose {
    pub fn new(lat: f64, lon: f64, bearing: f64) -> Self {
        Self { lat, lon, bearing: wrap_0_360(bearing) }
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn set_position(&mut self, p: LatLon) {
        self.lat = p.lat;
        self.lon = p.lon;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub model: String,
    /// Meters between front and rear axle.
    pub wheelbase: f64,
    /// Physical steering limit in degrees.
    pub steer_max: f64,
}

impl VehicleSpec {
    pub fn new(model: impl Into<String>, wheelbase: f64) -> Self {
        Self { model: model.into(), wheelbase, steer_max: 35.0 }
    }

    pub fn is_valid(&self) -> bool {
        self.wheelbase > 0.0 && self.wheelbase.is_finite() && self.steer_max > 0.0 && self.steer_max < 90.0
    }
}

/// Yaw rate and per-window heading change for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicStep {
    pub omega: f64,
    pub heading_delta: f64,
}

impl KinematicStep {
    pub fn compute(speed: f64, angle: f64, wheelbase: f64, t_window: f64) -> Self {
        let omega = angular_speed(speed, angle, wheelbase);
        Self { omega, heading_delta: heading_delta(omega, t_window) }
    }
}

pub fn wrap_0_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Bicycle-model yaw rate in rad/s: `v * tan(delta) / L`.
pub fn angular_speed(speed: f64, angle_deg: f64, wheelbase: f64) -> f64 {
    speed * angle_deg.to_radians().tan() / wheelbase
}

/// Heading change over one window in degrees, wrapped to (-180, 180] through atan2.
pub fn heading_delta(omega: f64, t_window: f64) -> f64 {
    let theta = omega * t_window;
    theta.sin().atan2(theta.cos()).to_degrees()
}

pub fn apply_heading(pose: VehiclePose, delta_deg: f64) -> VehiclePose {
    VehiclePose { bearing: wrap_0_360(pose.bearing - delta_deg), ..pose }
}

/// Great-circle direct problem: destination after `distance` meters along `bearing`.
pub fn destination(from: LatLon, bearing_deg: f64, distance: f64) -> LatLon {
    if distance == 0.0 {
        return from;
    }
    let phi1 = from.lat.to_radians();
    let lambda1 = from.lon.to_radians();
    let theta = bearing_deg.to_radians();
    let delta = distance / EARTH_RADIUS_M;

    let sin_phi2 = phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos();
    let phi2 = sin_phi2.clamp(-1.0, 1.0).asin();
    let y = theta.sin() * delta.sin() * phi1.cos();
    let x = delta.cos() - phi1.sin() * sin_phi2;
    let lambda2 = lambda1 + y.atan2(x);

    LatLon::new(phi2.to_degrees(), normalize_lon(lambda2.to_degrees()))
}

pub fn geodesic_forward(pose: &VehiclePose, distance: f64) -> LatLon {
    destination(pose.position(), pose.bearing, distance)
}

fn normalize_lon(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l >= 180.0 {
        -180.0
    } else {
        l
    }
}

/// Great-circle distance in meters (haversine).
pub fn distance(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `a` to `b`; 0 when the points coincide.
pub fn initial_bearing(a: LatLon, b: LatLon) -> f64 {
    if a == b {
        return 0.0;
    }
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    wrap_0_360(y.atan2(x).to_degrees())
}

/// Great-circle inverse problem: `(distance m, initial bearing deg)`.
pub fn geodesic_inverse(a: LatLon, b: LatLon) -> (f64, f64) {
    (distance(a, b), initial_bearing(a, b))
}

/// Linear interpolation in latitude/longitude.
pub fn lerp(a: LatLon, b: LatLon, t: f64) -> LatLon {
    LatLon::new(a.lat + (b.lat - a.lat) * t, a.lon + (b.lon - a.lon) * t)
}

pub fn polyline_length(points: &[LatLon]) -> f64 {
    points.windows(2).map(|w| distance(w[0], w[1])).sum()
}

/// Signed smallest difference `to - from` in (-180, 180].
pub fn bearing_diff(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

//! Drivable path geometry in a local tangent plane (x east, y north, meters).

use crate::geokin::{wrap_0_360, LatLon, EARTH_RADIUS_M};

/// Equirectangular projection anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: LatLon,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(origin: LatLon) -> Self {
        Self { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    pub fn to_xy(&self, p: LatLon) -> (f64, f64) {
        let x = (p.lon - self.origin.lon).to_radians() * EARTH_RADIUS_M * self.cos_lat;
        let y = (p.lat - self.origin.lat).to_radians() * EARTH_RADIUS_M;
        (x, y)
    }

    pub fn to_latlon(&self, x: f64, y: f64) -> LatLon {
        LatLon::new(
            self.origin.lat + (y / EARTH_RADIUS_M).to_degrees(),
            self.origin.lon + (x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    /// Distance along the path where this piece starts.
    s0: f64,
    len: f64,
    x0: f64,
    y0: f64,
    /// Math heading (counter-clockwise from east) in radians at the start.
    psi0: f64,
    /// Signed curvature in 1/m; positive turns left.
    kappa: f64,
}

impl Piece {
    fn at(&self, d: f64) -> (f64, f64) {
        if self.kappa == 0.0 {
            return (self.x0 + d * self.psi0.cos(), self.y0 + d * self.psi0.sin());
        }
        let r = 1.0 / self.kappa;
        let psi = self.psi0 + self.kappa * d;
        (
            self.x0 + r * (psi.sin() - self.psi0.sin()),
            self.y0 - r * (psi.cos() - self.psi0.cos()),
        )
    }
}

/// Polyline with each interior corner replaced by a circular arc.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivenPath {
    frame: LocalFrame,
    pieces: Vec<Piece>,
    length: f64,
}

impl DrivenPath {
    /// Fillets every corner with radius `turn_radius`, reduced where the
    /// tangent length would exceed half of either adjacent segment.
    pub fn new(polyline: &[LatLon], turn_radius: f64) -> Self {
        let frame = LocalFrame::new(polyline[0]);
        let pts: Vec<(f64, f64)> = polyline.iter().map(|p| frame.to_xy(*p)).collect();
        let n = pts.len();
        let seg_len: Vec<f64> = pts.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).collect();
        let seg_dir: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1).atan2(w[1].0 - w[0].0)).collect();

        if n < 2 {
            let piece = Piece { s0: 0.0, len: 0.0, x0: 0.0, y0: 0.0, psi0: std::f64::consts::FRAC_PI_2, kappa: 0.0 };
            return Self { frame, pieces: vec![piece], length: 0.0 };
        }

        // tangent length and signed turn at each vertex (0 at the ends)
        let mut tangent = vec![0.0; n];
        let mut turn = vec![0.0; n];
        for i in 1..n - 1 {
            let mut phi = seg_dir[i] - seg_dir[i - 1];
            phi = (phi.sin()).atan2(phi.cos());
            turn[i] = phi;
            if phi.abs() > 1e-9 {
                let t = turn_radius * (phi.abs() / 2.0).tan();
                tangent[i] = t.min(seg_len[i - 1] / 2.0).min(seg_len[i] / 2.0);
            }
        }

        let mut pieces = Vec::new();
        let mut s = 0.0;
        for i in 0..n - 1 {
            let (dx, dy) = (seg_dir[i].cos(), seg_dir[i].sin());
            let start_off = tangent[i];
            let line_len = seg_len[i] - tangent[i] - tangent[i + 1];
            if line_len > 1e-9 {
                pieces.push(Piece {
                    s0: s,
                    len: line_len,
                    x0: pts[i].0 + start_off * dx,
                    y0: pts[i].1 + start_off * dy,
                    psi0: seg_dir[i],
                    kappa: 0.0,
                });
                s += line_len;
            }
            let v = i + 1;
            if v < n - 1 && tangent[v] > 0.0 {
                let phi = turn[v];
                let r = tangent[v] / (phi.abs() / 2.0).tan();
                let len = r * phi.abs();
                pieces.push(Piece {
                    s0: s,
                    len,
                    x0: pts[v].0 - tangent[v] * dx,
                    y0: pts[v].1 - tangent[v] * dy,
                    psi0: seg_dir[i],
                    kappa: phi.signum() / r,
                });
                s += len;
            }
        }
        if pieces.is_empty() {
            pieces.push(Piece { s0: 0.0, len: 0.0, x0: 0.0, y0: 0.0, psi0: seg_dir[0], kappa: 0.0 });
        }
        Self { frame, pieces, length: s }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn piece_at(&self, s: f64) -> (&Piece, f64) {
        let s = s.clamp(0.0, self.length);
        let idx = self.pieces.partition_point(|p| p.s0 <= s).saturating_sub(1);
        let p = &self.pieces[idx];
        (p, (s - p.s0).min(p.len))
    }

    pub fn position_at(&self, s: f64) -> LatLon {
        let (p, d) = self.piece_at(s);
        let (x, y) = p.at(d);
        self.frame.to_latlon(x, y)
    }

    /// Signed curvature (1/m, positive left) at distance `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.piece_at(s).0.kappa
    }

    /// Compass bearing in degrees at distance `s`.
    pub fn bearing_at(&self, s: f64) -> f64 {
        let (p, d) = self.piece_at(s);
        wrap_0_360(90.0 - (p.psi0 + p.kappa * d).to_degrees())
    }
}

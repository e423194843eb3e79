//! Planar wind fields: the divergence-free quadratic polynomial and the
//! uniform special case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wind description as written in a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum WindConfig {
    Polynomial {
        a0: f64,
        a1: f64,
        a2: f64,
        a3: f64,
        a4: f64,
        a5: f64,
        b0: f64,
        b1: f64,
        /// Mean x wind (m/s).
        wxb: f64,
        /// Mean y wind (m/s).
        wyb: f64,
    },
    Constant {
        #[serde(rename = "Wx")]
        wx: f64,
        #[serde(rename = "Wy")]
        wy: f64,
    },
}

/// Spatial wind gradient (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindGradient {
    pub dwx_dx: f64,
    pub dwx_dy: f64,
    pub dwy_dx: f64,
    pub dwy_dy: f64,
}

impl WindGradient {
    pub fn divergence(&self) -> f64 {
        self.dwx_dx + self.dwy_dy
    }

    pub fn max_abs(&self) -> f64 {
        self.dwx_dx
            .abs()
            .max(self.dwx_dy.abs())
            .max(self.dwy_dx.abs())
            .max(self.dwy_dy.abs())
    }
}

/// Quadratic wind with x and y normalisation scales taken from the
/// destination coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialWind {
    pub a: [f64; 6],
    pub b: [f64; 2],
    pub wxb: f64,
    pub wyb: f64,
    pub x_scale: f64,
    pub y_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindField {
    Polynomial(PolynomialWind),
    Constant { wx: f64, wy: f64 },
}

impl WindField {
    pub fn from_config(config: &WindConfig, x_scale: f64, y_scale: f64) -> Result<Self> {
        match *config {
            WindConfig::Constant { wx, wy } => {
                if !(wx.is_finite() && wy.is_finite()) {
                    return Err(Error::validation("wind", "constant components must be finite"));
                }
                Ok(WindField::Constant { wx, wy })
            }
            WindConfig::Polynomial {
                a0,
                a1,
                a2,
                a3,
                a4,
                a5,
                b0,
                b1,
                wxb,
                wyb,
            } => {
                let a = [a0, a1, a2, a3, a4, a5];
                let b = [b0, b1];
                let named = [
                    ("a0", a0),
                    ("a1", a1),
                    ("a2", a2),
                    ("a3", a3),
                    ("a4", a4),
                    ("a5", a5),
                    ("b0", b0),
                    ("b1", b1),
                ];
                for (name, value) in named {
                    if !value.is_finite() {
                        return Err(Error::validation(name, "must be finite"));
                    }
                    if value.abs() > 1.0 {
                        log::warn!("wind coefficient {name} = {value} lies outside [-1, 1]");
                    }
                }
                if !(wxb.is_finite() && wyb.is_finite()) {
                    return Err(Error::validation("wxb", "mean wind must be finite"));
                }
                if x_scale == 0.0 || !x_scale.is_finite() {
                    return Err(Error::validation("xf_m", "polynomial wind needs a nonzero x scale"));
                }
                if y_scale == 0.0 || !y_scale.is_finite() {
                    return Err(Error::validation("yf_m", "polynomial wind needs a nonzero y scale"));
                }
                Ok(WindField::Polynomial(PolynomialWind {
                    a,
                    b,
                    wxb,
                    wyb,
                    x_scale,
                    y_scale,
                }))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, WindField::Constant { .. })
    }

    /// Wind velocity (w_x, w_y) in m/s.
    #[inline]
    pub fn wind_at(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            WindField::Constant { wx, wy } => (*wx, *wy),
            WindField::Polynomial(p) => p.wind_at(x, y),
        }
    }

    #[inline]
    pub fn wind_gradients(&self, x: f64, y: f64) -> WindGradient {
        match self {
            WindField::Constant { .. } => WindGradient::default(),
            WindField::Polynomial(p) => p.gradients(x, y),
        }
    }
}

impl PolynomialWind {
    // With ξ = x/x_f and η = y/y_f:
    //   w_x = W_x (a0 + a1 ξ + a2 ξ² + a3 η + a4 η² + a5 ξ η)
    //   ∂w_x/∂x = (W_x/x_f) (a1 + 2 a2 ξ + a5 η)
    // and w_y = −∫ ∂w_x/∂x dy + f(x), integrated in closed form:
    //   w_y = −(W_x y_f/x_f) (a1 η + 2 a2 ξ η + a5 η²/2) + W_y (1 + b0 ξ + b1 ξ²)
    // so ∂w_y/∂y = −∂w_x/∂x exactly.
    #[inline]
    pub fn wind_at(&self, x: f64, y: f64) -> (f64, f64) {
        let [a0, a1, a2, a3, a4, a5] = self.a;
        let [b0, b1] = self.b;
        let xi = x / self.x_scale;
        let eta = y / self.y_scale;
        let wx = self.wxb * (a0 + a1 * xi + a2 * xi * xi + a3 * eta + a4 * eta * eta + a5 * xi * eta);
        let ratio = self.wxb * self.y_scale / self.x_scale;
        let wy = -ratio * (a1 * eta + 2.0 * a2 * xi * eta + 0.5 * a5 * eta * eta)
            + self.wyb * (1.0 + b0 * xi + b1 * xi * xi);
        (wx, wy)
    }

    #[inline]
    pub fn gradients(&self, x: f64, y: f64) -> WindGradient {
        let [_, a1, a2, a3, a4, a5] = self.a;
        let [b0, b1] = self.b;
        let xi = x / self.x_scale;
        let eta = y / self.y_scale;
        let dwx_dx = self.wxb / self.x_scale * (a1 + 2.0 * a2 * xi + a5 * eta);
        let dwx_dy = self.wxb / self.y_scale * (a3 + 2.0 * a4 * eta + a5 * xi);
        let dwy_dx = -(self.wxb * self.y_scale / self.x_scale) * (2.0 * a2 * eta / self.x_scale)
            + self.wyb / self.x_scale * (b0 + 2.0 * b1 * xi);
        WindGradient {
            dwx_dx,
            dwx_dy,
            dwy_dx,
            dwy_dy: -dwx_dx,
        }
    }
}

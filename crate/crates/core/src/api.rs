//! Grow request/response shapes shared by the command line and the HTTP
//! service, so both front ends run the exact same code path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Connectivity, GeomSupervision, Mask};
use crate::pamg::{generate_mask, guided_mask, GrowthTrace, PamgConfig, Variant, DEFAULT_GUIDED_K};
use crate::raster::{PixelCoord, Raster};

/// Version tag carried by every JSON payload.
pub const SCHEMA_VERSION: u32 = 1;

/// Guided-mode scale: `R_s = k * radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KRadius {
    #[serde(default = "default_k")]
    pub k: f64,
    pub radius: f64,
}

fn default_k() -> f64 {
    DEFAULT_GUIDED_K
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowRequest {
    /// Signed so out-of-frame clicks are reported, not rejected by the parser.
    pub seed: [i64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_radius: Option<KRadius>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<Connectivity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
}

impl GrowRequest {
    pub fn at(x: i64, y: i64) -> Self {
        Self {
            seed: [x, y],
            r_s: None,
            k_radius: None,
            connectivity: None,
            variant: None,
        }
    }

    /// Effective config on top of `base`; guided mode clears the budget.
    pub fn resolve(&self, base: &PamgConfig) -> Result<PamgConfig> {
        let mut cfg = *base;
        match (self.r_s, self.k_radius) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig("give r_s or k_radius, not both".into()));
            }
            (Some(r), None) => cfg.r_s = r,
            (None, Some(kr)) => {
                if !(kr.radius > 0.0) || !(kr.k > 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "guided mode needs radius > 0 and k > 1, got radius {} k {}",
                        kr.radius, kr.k
                    )));
                }
                cfg.r_s = kr.k * kr.radius;
                cfg.growth_budget = None;
            }
            (None, None) => {}
        }
        if let Some(c) = self.connectivity {
            cfg.connectivity = c;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed_in(&self, img: &Raster) -> Result<PixelCoord> {
        let [x, y] = self.seed;
        if x < 0 || y < 0 || x as usize >= img.width() || y as usize >= img.height() {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(PixelCoord::new(x as usize, y as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowResponse {
    pub v: u32,
    /// Canonical RLE `{"w", "h", "runs": [[start, len], ...]}`.
    pub mask: Mask,
    pub k_star: usize,
    /// Sentinel steps are `null`.
    pub energies: Vec<Option<f64>>,
    pub geometry: GeomSupervision,
    pub inverted: bool,
    pub r_s: f64,
}

pub struct GrowResult {
    pub mask: Mask,
    pub trace: GrowthTrace,
    pub response: GrowResponse,
}

/// Runs one click: seed check, config resolution, growth and backtracking.
pub fn run_grow(img: &Raster, req: &GrowRequest, base: &PamgConfig) -> Result<GrowResult> {
    let seed = req.seed_in(img)?;
    let cfg = req.resolve(base)?;
    let (mask, trace) = match req.k_radius {
        Some(kr) => guided_mask(img, seed, kr.radius, kr.k, &cfg)?,
        None => generate_mask(img, seed, &cfg)?,
    };
    let response = GrowResponse {
        v: SCHEMA_VERSION,
        mask: mask.clone(),
        k_star: trace.k_star.expect("backtracking succeeded"),
        energies: trace.energies.clone(),
        geometry: mask.geometry()?,
        inverted: trace.inverted,
        r_s: cfg.r_s,
    };
    Ok(GrowResult { mask, trace, response })
}

/// Machine-readable error body used by both front ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub v: u32,
    pub error: String,
    pub message: String,
}

impl ErrorBody {
    pub fn of(e: &Error) -> Self {
        Self {
            v: SCHEMA_VERSION,
            error: e.kind().into(),
            message: e.to_string(),
        }
    }
}

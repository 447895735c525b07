//! Pixel and target level evaluation: IoU/mIoU, Pd/Fa and geometry errors.
//!
//! Targets are 8-connected components. A GT target is detected when a
//! predicted component overlaps it or has its centroid within `match_radius`
//! of the GT centroid. Candidate pairs are assigned greedily, nearest
//! centroid first, each side used at most once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Connectivity, GeomSupervision, Mask};

pub const DEFAULT_MATCH_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PixelConfusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PixelConfusion {
    pub fn of(pred: &Mask, gt: &Mask) -> Result<Self> {
        pred.same_shape(gt)?;
        let tp = pred.intersection_area(gt);
        Ok(Self {
            tp,
            fp: pred.area() - tp,
            fn_: gt.area() - tp,
        })
    }

    /// `TP / (TP + FP + FN)`, 1.0 when both masks are empty.
    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }
}

pub fn iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    Ok(PixelConfusion::of(pred, gt)?.iou())
}

/// Mean IoU over (pred, gt) pairs; a missing prediction scores 0.
pub fn miou(pairs: &[(Option<&Mask>, &Mask)]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (pred, gt) in pairs {
        sum += match pred {
            Some(p) => iou(p, gt)?,
            None => 0.0,
        };
    }
    Ok(sum / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionTally {
    pub n_tp: usize,
    pub n_total: usize,
    pub n_fp_pixels: usize,
    pub n_bg_pixels: usize,
}

impl DetectionTally {
    pub fn pd(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.n_tp as f64 / self.n_total as f64
        }
    }

    pub fn fa(&self) -> f64 {
        if self.n_bg_pixels == 0 {
            0.0
        } else {
            self.n_fp_pixels as f64 / self.n_bg_pixels as f64
        }
    }

    pub fn merge(self, other: DetectionTally) -> DetectionTally {
        DetectionTally {
            n_tp: self.n_tp + other.n_tp,
            n_total: self.n_total + other.n_total,
            n_fp_pixels: self.n_fp_pixels + other.n_fp_pixels,
            n_bg_pixels: self.n_bg_pixels + other.n_bg_pixels,
        }
    }
}

/// Result of matching predicted components to GT components in one image.
#[derive(Debug, Clone)]
pub struct ImageMatch {
    pub gt_components: Vec<Mask>,
    pub pred_components: Vec<Mask>,
    /// `gt_to_pred[g]` is the matched predicted component index.
    pub gt_to_pred: Vec<Option<usize>>,
    pub tally: DetectionTally,
}

impl ImageMatch {
    pub fn per_target_iou(&self) -> Vec<f64> {
        self.gt_to_pred
            .iter()
            .enumerate()
            .map(|(g, m)| match m {
                Some(p) => iou(&self.pred_components[*p], &self.gt_components[g]).expect("same frame"),
                None => 0.0,
            })
            .collect()
    }
}

fn centroid(m: &Mask) -> [f64; 2] {
    m.geometry().expect("components are non-empty").centroid
}

pub fn match_image(pred: &Mask, gt: &Mask, match_radius: f64) -> Result<ImageMatch> {
    pred.same_shape(gt)?;
    let gt_components = gt.components(Connectivity::Eight);
    let pred_components = pred.components(Connectivity::Eight);
    let gc: Vec<[f64; 2]> = gt_components.iter().map(centroid).collect();
    let pc: Vec<[f64; 2]> = pred_components.iter().map(centroid).collect();

    let mut candidates = Vec::new();
    for (g, gm) in gt_components.iter().enumerate() {
        for (p, pm) in pred_components.iter().enumerate() {
            let d = ((gc[g][0] - pc[p][0]).powi(2) + (gc[g][1] - pc[p][1]).powi(2)).sqrt();
            if d <= match_radius || gm.intersection_area(pm) > 0 {
                candidates.push((d, g, p));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_to_pred = vec![None; gt_components.len()];
    let mut pred_used = vec![false; pred_components.len()];
    for (_, g, p) in candidates {
        if gt_to_pred[g].is_none() && !pred_used[p] {
            gt_to_pred[g] = Some(p);
            pred_used[p] = true;
        }
    }

    let n_fp_pixels = pred_components
        .iter()
        .zip(&pred_used)
        .filter(|(_, &used)| !used)
        .map(|(m, _)| m.area())
        .sum();
    let tally = DetectionTally {
        n_tp: gt_to_pred.iter().filter(|m| m.is_some()).count(),
        n_total: gt_components.len(),
        n_fp_pixels,
        n_bg_pixels: gt.width() * gt.height() - gt.area(),
    };
    Ok(ImageMatch {
        gt_components,
        pred_components,
        gt_to_pred,
        tally,
    })
}

/// Accumulates detection tallies over aligned image lists.
pub fn pd_fa(preds: &[Mask], gts: &[Mask], match_radius: f64) -> Result<(DetectionTally, f64, f64)> {
    if preds.len() != gts.len() {
        return Err(Error::Contract(format!(
            "{} prediction masks for {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    let mut tally = DetectionTally::default();
    for (p, g) in preds.iter().zip(gts) {
        tally = tally.merge(match_image(p, g, match_radius)?.tally);
    }
    Ok((tally, tally.pd(), tally.fa()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryErrors {
    pub area_ratio: f64,
    pub centroid_error: f64,
    pub radius_error: f64,
}

pub fn geometry_errors(pred: &Mask, gt: &Mask) -> Result<GeometryErrors> {
    let p: GeomSupervision = pred.geometry()?;
    let g: GeomSupervision = gt.geometry()?;
    Ok(GeometryErrors {
        area_ratio: p.area as f64 / g.area as f64,
        centroid_error: ((p.centroid[0] - g.centroid[0]).powi(2) + (p.centroid[1] - g.centroid[1]).powi(2)).sqrt(),
        radius_error: (p.equiv_radius - g.equiv_radius).abs(),
    })
}

/// One evaluated GT target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub image: String,
    pub target: usize,
    pub iou: f64,
    pub detected: bool,
    pub area_ratio: Option<f64>,
    pub centroid_error: Option<f64>,
    pub radius_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub v: u32,
    pub miou: f64,
    pub pd: f64,
    pub fa: f64,
    pub mean_area_ratio: Option<f64>,
    pub mean_centroid_error: Option<f64>,
    pub mean_radius_error: Option<f64>,
    pub tally: DetectionTally,
    pub samples: Vec<SampleRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

impl MetricsReport {
    /// Evaluates named image pairs. Geometry errors are averaged over
    /// detected targets only.
    pub fn evaluate<'a>(
        images: impl IntoIterator<Item = (&'a str, &'a Mask, &'a Mask)>,
        match_radius: f64,
    ) -> Result<Self> {
        let mut tally = DetectionTally::default();
        let mut samples = Vec::new();
        for (name, pred, gt) in images {
            let m = match_image(pred, gt, match_radius)?;
            tally = tally.merge(m.tally);
            for (g, (iou, matched)) in m.per_target_iou().into_iter().zip(&m.gt_to_pred).enumerate() {
                let errs = matched
                    .map(|p| geometry_errors(&m.pred_components[p], &m.gt_components[g]))
                    .transpose()?;
                samples.push(SampleRecord {
                    image: name.to_string(),
                    target: g,
                    iou,
                    detected: matched.is_some(),
                    area_ratio: errs.map(|e| e.area_ratio),
                    centroid_error: errs.map(|e| e.centroid_error),
                    radius_error: errs.map(|e| e.radius_error),
                });
            }
        }
        Ok(Self::from_samples(samples, tally))
    }

    pub fn from_samples(samples: Vec<SampleRecord>, tally: DetectionTally) -> Self {
        Self {
            v: 1,
            miou: mean(samples.iter().map(|s| s.iou)).unwrap_or(0.0),
            pd: tally.pd(),
            fa: tally.fa(),
            mean_area_ratio: mean(samples.iter().filter_map(|s| s.area_ratio)),
            mean_centroid_error: mean(samples.iter().filter_map(|s| s.centroid_error)),
            mean_radius_error: mean(samples.iter().filter_map(|s| s.radius_error)),
            tally,
            samples,
        }
    }

    /// Per-sample CSV with a header row.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("image,target,iou,detected,area_ratio,centroid_error,radius_error\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.image,
                s.target,
                s.iou,
                s.detected,
                opt(s.area_ratio),
                opt(s.centroid_error),
                opt(s.radius_error)
            ));
        }
        out
    }
}
